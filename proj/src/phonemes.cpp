#include "dcond/phonemes.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dcond/error.hpp"
#include "dcond/prompts_generated.hpp"

namespace dcond {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<Phoneme> Phoneme::try_from_symbol(std::string_view symbol) {
  auto it = std::lower_bound(kPhonemeSymbols.begin(), kPhonemeSymbols.end() - 1, symbol);
  if (it != kPhonemeSymbols.end() - 1 && *it == symbol) {
    return Phoneme(static_cast<int>(it - kPhonemeSymbols.begin()));
  }
  if (symbol == "SIL") return Phoneme::sil();
  return std::nullopt;
}

Phoneme Phoneme::from_symbol(std::string_view symbol) {
  if (auto p = try_from_symbol(symbol)) return *p;
  throw ParseError("unknown phoneme " + std::string(symbol));
}

std::string to_string(std::span<const Phoneme> seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += seq[i].symbol();
  }
  return out;
}

PhonemeSeq parse_phoneme_string(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.back() == '.') text.remove_suffix(1);
  PhonemeSeq out;
  for (auto tok : split_ws(text)) out.push_back(Phoneme::from_symbol(tok));
  return out;
}

PhonemeSeq strip_boundary_sil(PhonemeSeq seq) {
  while (!seq.empty() && seq.back().is_sil()) seq.pop_back();
  auto first = std::find_if(seq.begin(), seq.end(), [](Phoneme p) { return !p.is_sil(); });
  seq.erase(seq.begin(), first);
  return seq;
}

std::string render_with_boundaries(std::span<const Phoneme> seq) {
  std::string out = "SIL";
  for (Phoneme p : seq) {
    out += ' ';
    out += p.symbol();
  }
  out += " SIL.";
  return out;
}

void Lexicon::add(std::string_view word, PhonemeSeq pronunciation) {
  if (pronunciation.empty()) throw InvalidArgument("empty pronunciation for " + std::string(word));
  for (Phoneme p : pronunciation) {
    if (p.is_sil()) throw InvalidArgument("SIL inside pronunciation of " + std::string(word));
  }
  entries_[lowercase(word)].push_back(std::move(pronunciation));
}

bool Lexicon::contains(std::string_view word) const { return entries_.contains(lowercase(word)); }

std::span<const PhonemeSeq> Lexicon::pronunciations(std::string_view word) const {
  auto it = entries_.find(lowercase(word));
  if (it == entries_.end()) return {};
  return it->second;
}

std::vector<std::string> Lexicon::vocabulary() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [w, _] : entries_) out.push_back(w);
  return out;
}

Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.starts_with(";;;")) continue;
    auto toks = split_ws(line);
    if (toks.empty()) continue;

    std::string_view word = toks[0];
    if (auto paren = word.find('('); paren != std::string_view::npos && word.back() == ')') {
      word = word.substr(0, paren);
    }
    if (toks.size() < 2) {
      throw ParseError("empty pronunciation at line " + std::to_string(line_no));
    }
    PhonemeSeq pron;
    for (std::size_t i = 1; i < toks.size(); ++i) {
      std::string_view sym = toks[i];
      while (!sym.empty() && std::isdigit(static_cast<unsigned char>(sym.back()))) sym.remove_suffix(1);
      auto p = Phoneme::try_from_symbol(sym);
      if (!p || p->is_sil()) {
        throw ParseError("unknown phoneme " + std::string(toks[i]) + " at line " + std::to_string(line_no));
      }
      pron.push_back(*p);
    }
    lex.add(word, std::move(pron));
    if (nl == text.size()) break;
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str());
}

std::string normalize_word(std::string_view word) {
  std::string out;
  for (char c : word) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'') out += static_cast<char>(std::tolower(u));
  }
  return out;
}

std::vector<std::string> normalize_sentence(std::string_view sentence) {
  std::vector<std::string> out;
  for (auto tok : split_ws(sentence)) {
    auto w = normalize_word(tok);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

PhonemeSeq words_to_phonemes(std::span<const std::string> words, const Lexicon& lexicon) {
  if (words.empty()) throw InvalidArgument("empty sentence");
  PhonemeSeq out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto prons = lexicon.pronunciations(words[i]);
    if (prons.empty()) throw OutOfVocabulary(words[i]);
    if (i) out.push_back(Phoneme::sil());
    out.insert(out.end(), prons.front().begin(), prons.front().end());
  }
  return out;
}

PhonemeSeq sentence_to_phonemes(std::string_view sentence, const Lexicon& lexicon) {
  auto words = normalize_sentence(sentence);
  return words_to_phonemes(words, lexicon);
}

DiphoneSeq expand_diphones(std::span<const Phoneme> seq) {
  if (seq.empty()) throw InvalidArgument("expand_diphones: empty phoneme sequence");
  DiphoneSeq out;
  out.reserve(2 * seq.size() + 1);
  Phoneme prev = Phoneme::sil();
  for (Phoneme cur : seq) {
    out.push_back({prev, cur});
    out.push_back({cur, cur});
    prev = cur;
  }
  out.push_back({prev, Phoneme::sil()});
  return out;
}

PhonemeSeq collapse_diphones(std::span<const Diphone> seq) {
  // Grammar: (SIL->z1)(z1->z1)(z1->z2)(z2->z2)...(zn->zn)(zn->SIL), n >= 1.
  if (seq.size() < 3 || seq.size() % 2 == 0) {
    throw ParseError("diphone sequence length " + std::to_string(seq.size()) + " is not 2n+1");
  }
  PhonemeSeq out;
  Phoneme prev = Phoneme::sil();
  const std::size_t n = (seq.size() - 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const Diphone& transition = seq[2 * i];
    const Diphone& self = seq[2 * i + 1];
    if (transition.prev != prev || self.prev != transition.cur || self.cur != transition.cur) {
      throw ParseError("diphone sequence breaks the expansion grammar at position " + std::to_string(2 * i));
    }
    out.push_back(transition.cur);
    prev = transition.cur;
  }
  const Diphone& last = seq.back();
  if (last.prev != prev || !last.cur.is_sil()) {
    throw ParseError("diphone sequence must end with a transition into SIL");
  }
  return out;
}

std::vector<Triphone> expand_triphones(std::span<const Phoneme> seq) {
  if (seq.empty()) throw InvalidArgument("expand_triphones: empty phoneme sequence");
  std::vector<Triphone> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    Phoneme prev = i == 0 ? Phoneme::sil() : seq[i - 1];
    Phoneme next = i + 1 == seq.size() ? Phoneme::sil() : seq[i + 1];
    out.push_back({prev, seq[i], next});
  }
  return out;
}

ArticulatoryGroups ArticulatoryGroups::from_csv(std::string_view text) {
  ArticulatoryGroups g;
  g.group_of_.fill(-1);
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto row = trim(line);
    if (row.empty()) continue;
    if (line_no == 1 && row == "phoneme,group_name") continue;
    auto comma = row.find(',');
    if (comma == std::string_view::npos) {
      throw ParseError("articulatory table: missing comma at line " + std::to_string(line_no));
    }
    auto sym = trim(row.substr(0, comma));
    auto name = std::string(trim(row.substr(comma + 1)));
    auto p = Phoneme::try_from_symbol(sym);
    if (!p) throw ParseError("articulatory table: unknown phoneme " + std::string(sym) + " at line " + std::to_string(line_no));
    auto it = std::find(g.names_.begin(), g.names_.end(), name);
    int id = static_cast<int>(it - g.names_.begin());
    if (it == g.names_.end()) g.names_.push_back(name);
    g.group_of_[p->index()] = id;
  }
  for (int i = 0; i < kNumPhonemes; ++i) {
    if (g.group_of_[i] < 0) throw ParseError("articulatory table: no group for " + std::string(kPhonemeSymbols[i]));
  }
  if (static_cast<int>(g.names_.size()) != kNumArticulatoryGroups) {
    throw ParseError("articulatory table must name exactly 14 groups, found " + std::to_string(g.names_.size()));
  }
  return g;
}

std::string ArticulatoryGroups::to_csv() const {
  // Rows grouped by id so that from_csv reassigns the same ids.
  std::string out = "phoneme,group_name\n";
  for (int g = 0; g < static_cast<int>(names_.size()); ++g) {
    for (int i = 0; i < kNumPhonemes; ++i) {
      if (group_of_[i] == g) out += std::string(kPhonemeSymbols[i]) + "," + names_[g] + "\n";
    }
  }
  return out;
}

const ArticulatoryGroups& ArticulatoryGroups::standard() {
  static const ArticulatoryGroups table = from_csv(detail::kArticulatoryGroupsCsv);
  return table;
}

}  // namespace dcond
