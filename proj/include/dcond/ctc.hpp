#pragma once

#include <vector>

#include "dcond/types.hpp"

namespace dcond {

struct CtcResult {
  double loss = 0.0;  // -log p(labels | posteriorgram), natural log
  MatrixD grad;       // d loss / d pre-softmax logits, frames x classes
};

/// Forward-backward CTC in log space. `post` rows are log-probabilities with
/// the blank in the last column. The gradient is taken with respect to logits
/// whose log-softmax equals `post`. Throws Unalignable when no alignment exists
/// or every alignment has zero probability.
CtcResult ctc_loss(const Posteriorgram& post, const LabelSeq& labels);

/// Loss only; skips the backward pass.
double ctc_neg_log_likelihood(const Posteriorgram& post, const LabelSeq& labels);

/// Per-frame posterior occupancy of each class, log domain (frames x classes,
/// -inf where a class is never visited). Also returns the loss.
MatrixD ctc_log_occupancy(const Posteriorgram& post, const LabelSeq& labels, double* loss);

/// Exhaustive enumeration of all C^T frame labelings. Guarded to C^T <= 1e6.
double ctc_loss_bruteforce(const Posteriorgram& post, const LabelSeq& labels);

/// Minimum number of frames needed to emit `labels` (one per label plus one
/// blank between each adjacent repeat).
int ctc_min_frames(const LabelSeq& labels);

/// Per-frame argmax (ties to the lowest index), repeats merged, blanks removed.
LabelSeq best_path_decode(const Posteriorgram& post);

/// First frame of the argmax run of each label emitted by best_path_decode.
std::vector<int> timestamps_of_best_path(const Posteriorgram& post);

/// Row-wise log-softmax.
MatrixD log_softmax_rows(const MatrixD& logits);

/// Throws InvalidArgument unless every row of `post` exponentiates to a
/// distribution summing to 1 within `tol`.
void check_posteriorgram(const Posteriorgram& post, double tol = 1e-6);

}  // namespace dcond
