#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dcond/phonemes.hpp"
#include "dcond/types.hpp"

namespace dcond {

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kSentenceEnd = "</s>";
inline constexpr std::string_view kUnknownWord = "<unk>";

/// Word n-gram counts scored with stupid backoff.
///
/// Unigram mass is count(w) / N where N counts every training token plus one
/// `</s>` per sentence (the `<s>` marker is a context only). `<unk>` and any
/// out-of-vocabulary query get a numerator floor of 1.
class NGramModel {
 public:
  NGramModel(int order, double backoff);

  int order() const { return order_; }
  double backoff() const { return backoff_; }
  long total_tokens() const { return total_; }

  /// Conditional score S(word | history); only the last order-1 history words matter.
  double prob(std::span<const std::string> history, std::string_view word) const;
  double log_prob(std::span<const std::string> history, std::string_view word) const;
  /// log S over the words followed by `</s>`, starting from `<s>`.
  double score_sequence(std::span<const std::string> words) const;

  /// Raw count of a space-joined k-gram (0 when absent).
  long count(std::string_view ngram) const;
  bool in_vocabulary(std::string_view word) const;
  std::size_t num_ngrams() const { return counts_.size(); }

  /// Header `ngram order=N backoff=B`, then `k-gram<TAB>count` lines sorted by k then text.
  std::string serialize() const;
  static NGramModel deserialize(std::string_view text);

  friend bool operator==(const NGramModel& a, const NGramModel& b) {
    return a.order_ == b.order_ && a.backoff_ == b.backoff_ && a.counts_ == b.counts_;
  }

 private:
  friend NGramModel train_ngram(std::span<const std::string> corpus, int order, double backoff);
  void add(const std::string& key, long n);
  std::string map_word(std::string_view w) const;

  int order_;
  double backoff_;
  long total_ = 0;
  std::unordered_map<std::string, long> counts_;
};

/// Counts every k-gram (k <= order) over `<s> w1 .. wn </s>` for each normalized sentence.
NGramModel train_ngram(std::span<const std::string> corpus, int order = 5, double backoff = 0.4);
NGramModel load_ngram(const std::string& path);
void save_ngram(const NGramModel& model, const std::string& path);

/// Row-wise log_softmax(logits / t). Throws InvalidArgument when t <= 0.
MatrixD apply_temperature(const MatrixD& logits, double t);

struct DecodeConfig {
  int beam_width = 32;
  double lm_weight = 1.0;
  double word_bonus = 0.0;
  double temperature = 1.2;
  int nbest_size = 10;
};

struct Transcription {
  std::vector<std::string> words;
  PhonemeSeq phonemes;  // pronunciations joined by single SILs
  double acoustic_score = 0.0;
  double lm_score = 0.0;
  double total = 0.0;  // acoustic + lm_weight * lm + word_bonus * |words|

  std::string text() const;
};

/// Pronunciation prefix tree over a lexicon; every pronunciation of every word is inserted.
class LexiconTrie {
 public:
  explicit LexiconTrie(const Lexicon& lexicon);

  static constexpr int kRoot = 0;
  int child(int node, int phoneme) const { return nodes_[node].next[phoneme]; }
  std::span<const int> words_at(int node) const { return nodes_[node].words; }
  const std::string& word(int id) const { return words_[id]; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    std::array<int, kNumPhonemes> next;
    std::vector<int> words;
  };
  std::vector<Node> nodes_;
  std::vector<std::string> words_;
};

/// CTC prefix beam search constrained to lexicon words separated by SIL.
///
/// `phoneme_post` holds log-probabilities over 40 phonemes + blank. It is
/// rescaled with the configured temperature before the search. A SIL closes
/// the pending word (one branch per homophone) and adds lm_weight * log S
/// plus word_bonus; the end of the utterance closes the pending word and adds
/// the `</s>` score. A trailing SIL is optional and is not part of the returned
/// phonemes; partial words are dropped. Hypotheses
/// sharing a label prefix and the last order-1 words are recombined by
/// keeping the better score, which cannot change any future increment.
std::vector<Transcription> lexicon_beam_decode(const Posteriorgram& phoneme_post, const Lexicon& lexicon,
                                               const NGramModel& lm, const DecodeConfig& cfg);

/// Scores a hypothesis for rescoring; throwing signals failure.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual double score(const Transcription& t) = 0;
};

/// Returns the hypothesis's existing language component (total - acoustic).
class IdentityRescorer final : public SentenceScorer {
 public:
  double score(const Transcription& t) override { return t.total - t.acoustic_score; }
};

/// log S(words) under another n-gram model.
class NGramRescorer final : public SentenceScorer {
 public:
  explicit NGramRescorer(const NGramModel& model) : model_(model) {}
  double score(const Transcription& t) override { return model_.score_sequence(t.words); }

 private:
  const NGramModel& model_;
};

/// Delegates to an external scoring service (for example a chat client).
class ExternalRescorer final : public SentenceScorer {
 public:
  using Fn = std::function<double(const std::vector<std::string>&)>;
  explicit ExternalRescorer(Fn fn) : fn_(std::move(fn)) {}
  double score(const Transcription& t) override { return fn_(t.words); }

 private:
  Fn fn_;
};

struct RescoreResult {
  std::vector<Transcription> nbest;
  bool warning = false;
  std::string message;
};

/// total := acoustic + weight * scorer(t), then stable sort by total. If the
/// scorer throws, the input list is returned unchanged with `warning` set.
RescoreResult rescore(std::vector<Transcription> nbest, SentenceScorer& scorer, double weight = 1.0);

}  // namespace dcond
