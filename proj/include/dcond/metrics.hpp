#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcond/phonemes.hpp"
#include "dcond/types.hpp"

namespace dcond {

enum class EditOp { Match, Substitution, Deletion, Insertion };

/// One aligned column: `ref` absent for insertions, `hyp` absent for deletions.
struct AlignedPair {
  std::optional<int> ref;
  std::optional<int> hyp;
  EditOp op = EditOp::Match;
};

struct EditAlignment {
  int insertions = 0;
  int deletions = 0;
  int substitutions = 0;
  int ref_length = 0;
  std::vector<AlignedPair> pairs;

  int distance() const { return insertions + deletions + substitutions; }
};

/// Unit-cost Levenshtein alignment. Ties on the backtrace prefer substitution
/// (or match), then deletion, then insertion.
EditAlignment edit_align(const std::vector<int>& ref, const std::vector<int>& hyp);

struct ErrorRate {
  long edits = 0;
  long ref_tokens = 0;
  double rate() const { return static_cast<double>(edits) / static_cast<double>(ref_tokens); }
};

/// Micro-averaged rate: total edits over total reference tokens. Throws
/// InvalidArgument when the references hold no tokens.
ErrorRate corpus_rate(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& trials);

struct PWerInputs {
  double wer_whisper_p = 0.0;   // WER of ASR on speech synthesized from predicted phonemes
  double wer_whisper_gt = 0.0;  // WER of ASR on speech synthesized from ground-truth phonemes
};

/// 1 - (1 - WER_P) / (1 - WER_GT). Throws InvalidArgument when WER_GT >= 1.
double p_wer(const PWerInputs& in);

using ConfusionMatrix = RowMatrix<double>;  // 40 x 40, rows = reference

/// Row-normalized phoneme confusions from matched and substituted columns.
ConfusionMatrix confusion_matrix(const std::vector<EditAlignment>& alignments);
/// Raw counts before normalization.
RowMatrix<long> confusion_counts(const std::vector<EditAlignment>& alignments);

struct ErrorHistogram {
  long insertions = 0;
  long deletions = 0;
  long substitutions = 0;
  friend bool operator==(const ErrorHistogram&, const ErrorHistogram&) = default;
};

ErrorHistogram error_histogram(const std::vector<EditAlignment>& alignments);

/// Half-open frame interval [begin, end).
struct FrameInterval {
  int begin = 0;
  int end = 0;
  friend bool operator==(const FrameInterval&, const FrameInterval&) = default;
};

struct DtwAlignment {
  std::vector<FrameInterval> intervals;  // one per reference token
  double cost = 0.0;                     // sum over frames of -log p_t(covering token)
};

/// Monotonic, contiguous, exhaustive segmentation of the frames into |ref|
/// intervals of at least one frame each, minimizing total negative log
/// probability. Among optimal segmentations the lexicographically earliest
/// boundary vector is returned.
DtwAlignment dtw_align(const Posteriorgram& phoneme_post, std::span<const Phoneme> ref);

/// Cost of a given segmentation; used to compare against hand-built ones.
double segmentation_cost(const Posteriorgram& phoneme_post, std::span<const Phoneme> ref,
                         const std::vector<FrameInterval>& intervals);

/// WER tokenization: normalized words mapped onto a shared vocabulary id space.
class WordIndexer {
 public:
  std::vector<int> encode(const std::string& sentence);
  std::vector<int> encode(const std::vector<std::string>& words);
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::vector<std::pair<std::string, int>> index_;  // sorted
};

}  // namespace dcond
