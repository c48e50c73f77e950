#include "dcond/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dcond/error.hpp"

namespace dcond {

EditAlignment edit_align(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](int i, int j) -> int& { return d[i * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) at(i, 0) = i;
  for (int j = 0; j <= m; ++j) at(0, j) = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      int diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  EditAlignment out;
  out.ref_length = n;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      bool same = ref[i - 1] == hyp[j - 1];
      out.pairs.push_back({ref[i - 1], hyp[j - 1], same ? EditOp::Match : EditOp::Substitution});
      if (!same) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      out.pairs.push_back({ref[i - 1], std::nullopt, EditOp::Deletion});
      ++out.deletions;
      --i;
    } else {
      out.pairs.push_back({std::nullopt, hyp[j - 1], EditOp::Insertion});
      ++out.insertions;
      --j;
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

ErrorRate corpus_rate(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& trials) {
  ErrorRate r;
  for (const auto& [ref, hyp] : trials) {
    r.edits += edit_align(ref, hyp).distance();
    r.ref_tokens += static_cast<long>(ref.size());
  }
  if (r.ref_tokens == 0) throw InvalidArgument("corpus_rate: reference sequences contain no tokens");
  return r;
}

double p_wer(const PWerInputs& in) {
  if (!(in.wer_whisper_gt < 1.0)) throw InvalidArgument("p_wer: WER on ground-truth synthesis must be < 1");
  return 1.0 - (1.0 - in.wer_whisper_p) / (1.0 - in.wer_whisper_gt);
}

RowMatrix<long> confusion_counts(const std::vector<EditAlignment>& alignments) {
  RowMatrix<long> counts = RowMatrix<long>::Zero(kNumPhonemes, kNumPhonemes);
  for (const auto& a : alignments) {
    for (const auto& p : a.pairs) {
      if (!p.ref || !p.hyp) continue;
      if (*p.ref < 0 || *p.ref >= kNumPhonemes || *p.hyp < 0 || *p.hyp >= kNumPhonemes) {
        throw InvalidArgument("confusion_matrix: token outside the phoneme inventory");
      }
      ++counts(*p.ref, *p.hyp);
    }
  }
  return counts;
}

ConfusionMatrix confusion_matrix(const std::vector<EditAlignment>& alignments) {
  auto counts = confusion_counts(alignments);
  ConfusionMatrix m = counts.cast<double>();
  for (int r = 0; r < kNumPhonemes; ++r) {
    double s = m.row(r).sum();
    if (s > 0) m.row(r) /= s;
  }
  return m;
}

ErrorHistogram error_histogram(const std::vector<EditAlignment>& alignments) {
  ErrorHistogram h;
  for (const auto& a : alignments) {
    h.insertions += a.insertions;
    h.deletions += a.deletions;
    h.substitutions += a.substitutions;
  }
  return h;
}

DtwAlignment dtw_align(const Posteriorgram& post, std::span<const Phoneme> ref) {
  const int frames = static_cast<int>(post.rows());
  const int tokens = static_cast<int>(ref.size());
  if (tokens == 0) throw InvalidArgument("dtw_align: empty reference");
  if (frames < tokens) {
    throw InvalidArgument("dtw_align: " + std::to_string(frames) + " frames cannot cover " + std::to_string(tokens) +
                          " reference tokens");
  }
  if (post.cols() <= kNumPhonemes - 1) throw InvalidArgument("dtw_align: expects a phoneme posteriorgram");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto cost = [&](int t, int k) { return -post(t, ref[k].index()); };

  // best[t][k]: minimal cost of frames t..T-1 given frame t belongs to token k.
  std::vector<double> best(static_cast<std::size_t>(frames) * tokens, kInf);
  auto at = [&](int t, int k) -> double& { return best[static_cast<std::size_t>(t) * tokens + k]; };
  at(frames - 1, tokens - 1) = cost(frames - 1, tokens - 1);
  for (int t = frames - 2; t >= 0; --t) {
    for (int k = 0; k < tokens; ++k) {
      double stay = at(t + 1, k);
      double advance = k + 1 < tokens ? at(t + 1, k + 1) : kInf;
      double b = std::min(stay, advance);
      if (b < kInf) at(t, k) = cost(t, k) + b;
    }
  }

  DtwAlignment out;
  out.cost = at(0, 0);
  out.intervals.assign(tokens, {});
  int k = 0;
  out.intervals[0].begin = 0;
  for (int t = 0; t + 1 < frames; ++t) {
    double stay = at(t + 1, k);
    double advance = k + 1 < tokens ? at(t + 1, k + 1) : kInf;
    if (advance <= stay) {  // earliest boundary on ties
      out.intervals[k].end = t + 1;
      ++k;
      out.intervals[k].begin = t + 1;
    }
  }
  out.intervals[k].end = frames;
  return out;
}

double segmentation_cost(const Posteriorgram& post, std::span<const Phoneme> ref,
                         const std::vector<FrameInterval>& intervals) {
  if (intervals.size() != ref.size()) throw InvalidArgument("segmentation_cost: one interval per token required");
  double c = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    for (int t = intervals[k].begin; t < intervals[k].end; ++t) c -= post(t, ref[k].index());
  }
  return c;
}

std::vector<int> WordIndexer::encode(const std::vector<std::string>& words) {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    auto it = std::lower_bound(index_.begin(), index_.end(), w,
                               [](const auto& e, const std::string& key) { return e.first < key; });
    if (it != index_.end() && it->first == w) {
      out.push_back(it->second);
    } else {
      int id = static_cast<int>(words_.size());
      words_.push_back(w);
      index_.insert(it, {w, id});
      out.push_back(id);
    }
  }
  return out;
}

std::vector<int> WordIndexer::encode(const std::string& sentence) { return encode(normalize_sentence(sentence)); }

}  // namespace dcond
