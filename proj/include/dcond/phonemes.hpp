#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcond {

inline constexpr int kNumPhonemes = 40;  // 39 ARPAbet + SIL
inline constexpr int kSilIndex = 39;
inline constexpr int kNumDiphones = kNumPhonemes * kNumPhonemes;

/// Stress-stripped ARPAbet symbols in lexicographic order, SIL last.
inline constexpr std::array<std::string_view, kNumPhonemes> kPhonemeSymbols = {
    "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
    "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
    "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH",
    "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH", "SIL"};

class Phoneme {
 public:
  constexpr Phoneme() = default;
  constexpr explicit Phoneme(int index) : index_(static_cast<std::uint8_t>(index)) {}

  /// Throws ParseError for unknown symbols. Trailing stress digits are not accepted here.
  static Phoneme from_symbol(std::string_view symbol);
  static std::optional<Phoneme> try_from_symbol(std::string_view symbol);
  static constexpr Phoneme sil() { return Phoneme(kSilIndex); }

  constexpr int index() const { return index_; }
  constexpr std::string_view symbol() const { return kPhonemeSymbols[index_]; }
  constexpr bool is_sil() const { return index_ == kSilIndex; }

  friend constexpr auto operator<=>(Phoneme, Phoneme) = default;

 private:
  std::uint8_t index_ = 0;
};

using PhonemeSeq = std::vector<Phoneme>;

struct Diphone {
  Phoneme prev;
  Phoneme cur;
  friend constexpr auto operator<=>(const Diphone&, const Diphone&) = default;
};
using DiphoneSeq = std::vector<Diphone>;

struct Triphone {
  Phoneme prev;
  Phoneme cur;
  Phoneme next;
  friend constexpr auto operator<=>(const Triphone&, const Triphone&) = default;
};

/// Space-separated symbols, e.g. "HH OW P".
std::string to_string(std::span<const Phoneme> seq);
/// Parses space-separated symbols; a trailing '.' is tolerated.
PhonemeSeq parse_phoneme_string(std::string_view text);
/// Drops leading and trailing SIL tokens.
PhonemeSeq strip_boundary_sil(PhonemeSeq seq);
/// Renders with boundary SILs and a terminating period, as shown to the LLM.
std::string render_with_boundaries(std::span<const Phoneme> seq);

class Lexicon {
 public:
  /// Adds a pronunciation under `word` (lowercased). Pronunciations must be
  /// non-empty and SIL-free.
  void add(std::string_view word, PhonemeSeq pronunciation);

  bool contains(std::string_view word) const;
  /// All pronunciations in file order; empty span for OOV words.
  std::span<const PhonemeSeq> pronunciations(std::string_view word) const;
  std::vector<std::string> vocabulary() const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::vector<PhonemeSeq>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::vector<PhonemeSeq>> entries_;
};

Lexicon parse_lexicon(std::string_view text);
Lexicon load_lexicon(const std::string& path);

/// Lowercases and removes every character that is not alphanumeric or an apostrophe.
std::string normalize_word(std::string_view word);
/// Normalized whitespace-separated words; empty tokens are dropped.
std::vector<std::string> normalize_sentence(std::string_view sentence);

/// First pronunciation of each word, joined by exactly one SIL.
PhonemeSeq sentence_to_phonemes(std::string_view sentence, const Lexicon& lexicon);
PhonemeSeq words_to_phonemes(std::span<const std::string> words, const Lexicon& lexicon);

/// 2|p|+1 tokens: (z_{i-1} -> z_i), (z_i -> z_i) per token, then (z_n -> SIL).
DiphoneSeq expand_diphones(std::span<const Phoneme> seq);
/// Inverse of expand_diphones; throws ParseError on sequences outside the expansion grammar.
PhonemeSeq collapse_diphones(std::span<const Diphone> seq);

constexpr int diphone_index(Phoneme prev, Phoneme cur) { return prev.index() * kNumPhonemes + cur.index(); }
constexpr Diphone diphone_from_index(int index) {
  return {Phoneme(index / kNumPhonemes), Phoneme(index % kNumPhonemes)};
}

/// One (prev, cur, next) triple per token with SIL padding at both ends.
std::vector<Triphone> expand_triphones(std::span<const Phoneme> seq);

inline constexpr int kNumArticulatoryGroups = 14;

class ArticulatoryGroups {
 public:
  /// The committed fixture table (data/articulatory_groups.csv).
  static const ArticulatoryGroups& standard();
  /// Parses `phoneme,group_name` CSV with a header row; must cover all 40 phonemes
  /// and name exactly 14 groups.
  static ArticulatoryGroups from_csv(std::string_view text);

  int group_of(Phoneme p) const { return group_of_[p.index()]; }
  /// Inverse of from_csv (header plus one row per phoneme in index order).
  std::string to_csv() const;
  const std::vector<std::string>& group_names() const { return names_; }

  friend bool operator==(const ArticulatoryGroups&, const ArticulatoryGroups&) = default;

 private:
  std::array<int, kNumPhonemes> group_of_{};
  std::vector<std::string> names_;
};

inline int articulatory_group(Phoneme p) { return ArticulatoryGroups::standard().group_of(p); }

}  // namespace dcond
