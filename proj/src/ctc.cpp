#include "dcond/ctc.hpp"

#include <cmath>
#include <limits>

#include "dcond/error.hpp"

namespace dcond {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Lattice {
  std::vector<int> ext;  // blank-interleaved labels, length 2L+1
  MatrixD alpha;         // includes emission at t
  MatrixD beta;          // excludes emission at t
  double log_z = kNegInf;
};

void validate(const Posteriorgram& post, const LabelSeq& labels) {
  const int classes = static_cast<int>(post.cols());
  if (post.rows() < 1) throw InvalidArgument("ctc: posteriorgram has no frames");
  if (classes < 2) throw InvalidArgument("ctc: need at least one label class plus blank");
  if (labels.empty()) throw InvalidArgument("ctc: empty label sequence");
  for (int l : labels) {
    if (l < 0 || l >= classes - 1) {
      throw InvalidArgument("ctc: label " + std::to_string(l) + " outside [0, " + std::to_string(classes - 1) + ")");
    }
  }
  const int need = ctc_min_frames(labels);
  if (post.rows() < need) {
    throw Unalignable("unalignable: " + std::to_string(labels.size()) + " labels need " + std::to_string(need) +
                      " frames, posteriorgram has " + std::to_string(post.rows()));
  }
}

Lattice run_lattice(const Posteriorgram& post, const LabelSeq& labels, bool with_beta) {
  validate(post, labels);
  const int frames = static_cast<int>(post.rows());
  const int blank = static_cast<int>(post.cols()) - 1;
  Lattice lat;
  const int states = 2 * static_cast<int>(labels.size()) + 1;
  lat.ext.resize(states);
  for (int s = 0; s < states; ++s) lat.ext[s] = (s % 2 == 0) ? blank : labels[s / 2];
  const auto& ext = lat.ext;
  auto can_skip = [&](int s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  lat.alpha.setConstant(frames, states, kNegInf);
  lat.alpha(0, 0) = post(0, ext[0]);
  if (states > 1) lat.alpha(0, 1) = post(0, ext[1]);
  for (int t = 1; t < frames; ++t) {
    // States unreachable at frame t (too few frames left or too early) stay -inf.
    const int lo = std::max(0, states - 2 * (frames - t));
    const int hi = std::min(states - 1, 2 * t + 1);
    for (int s = lo; s <= hi; ++s) {
      double a = lat.alpha(t - 1, s);
      if (s >= 1) a = log_add(a, lat.alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = a == kNegInf ? kNegInf : a + post(t, ext[s]);
    }
  }
  lat.log_z = lat.alpha(frames - 1, states - 1);
  if (states > 1) lat.log_z = log_add(lat.log_z, lat.alpha(frames - 1, states - 2));
  if (lat.log_z == kNegInf || std::isnan(lat.log_z)) {
    throw Unalignable("unalignable: every alignment has zero probability");
  }
  if (!with_beta) return lat;

  lat.beta.setConstant(frames, states, kNegInf);
  lat.beta(frames - 1, states - 1) = 0.0;
  if (states > 1) lat.beta(frames - 1, states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double b = lat.beta(t + 1, s) == kNegInf ? kNegInf : lat.beta(t + 1, s) + post(t + 1, ext[s]);
      if (s + 1 < states && lat.beta(t + 1, s + 1) != kNegInf) {
        b = log_add(b, lat.beta(t + 1, s + 1) + post(t + 1, ext[s + 1]));
      }
      if (s + 2 < states && can_skip(s + 2) && lat.beta(t + 1, s + 2) != kNegInf) {
        b = log_add(b, lat.beta(t + 1, s + 2) + post(t + 1, ext[s + 2]));
      }
      lat.beta(t, s) = b;
    }
  }
  return lat;
}

}  // namespace

int ctc_min_frames(const LabelSeq& labels) {
  int need = static_cast<int>(labels.size());
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++need;
  }
  return need;
}

MatrixD ctc_log_occupancy(const Posteriorgram& post, const LabelSeq& labels, double* loss) {
  Lattice lat = run_lattice(post, labels, true);
  const int frames = static_cast<int>(post.rows());
  const int states = static_cast<int>(lat.ext.size());
  MatrixD occ = MatrixD::Constant(frames, post.cols(), kNegInf);
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double a = lat.alpha(t, s);
      double b = lat.beta(t, s);
      if (a == kNegInf || b == kNegInf) continue;
      double& o = occ(t, lat.ext[s]);
      o = log_add(o, a + b - lat.log_z);
    }
  }
  if (loss) *loss = -lat.log_z;
  return occ;
}

CtcResult ctc_loss(const Posteriorgram& post, const LabelSeq& labels) {
  CtcResult r;
  MatrixD occ = ctc_log_occupancy(post, labels, &r.loss);
  r.grad = post.array().exp() - occ.array().exp();
  return r;
}

double ctc_neg_log_likelihood(const Posteriorgram& post, const LabelSeq& labels) {
  return -run_lattice(post, labels, false).log_z;
}

double ctc_loss_bruteforce(const Posteriorgram& post, const LabelSeq& labels) {
  const int frames = static_cast<int>(post.rows());
  const int classes = static_cast<int>(post.cols());
  const int blank = classes - 1;
  if (frames < 1 || classes < 2) throw InvalidArgument("ctc_loss_bruteforce: degenerate posteriorgram");
  double combos = std::pow(static_cast<double>(classes), frames);
  if (combos > 1e6) throw InvalidArgument("ctc_loss_bruteforce: C^T exceeds 1e6 enumeration guard");

  std::vector<int> path(frames, 0);
  LabelSeq collapsed;
  double total = 0.0;
  const long n = static_cast<long>(combos);
  for (long code = 0; code < n; ++code) {
    long c = code;
    for (int t = 0; t < frames; ++t) {
      path[t] = static_cast<int>(c % classes);
      c /= classes;
    }
    collapsed.clear();
    int prev = -1;
    for (int t = 0; t < frames; ++t) {
      if (path[t] != prev && path[t] != blank) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed != labels) continue;
    double lp = 0.0;
    for (int t = 0; t < frames; ++t) lp += post(t, path[t]);
    total += std::exp(lp);
  }
  if (total <= 0.0) throw Unalignable("unalignable: no labeling collapses to the target");
  return -std::log(total);
}

LabelSeq best_path_decode(const Posteriorgram& post) {
  LabelSeq out;
  const int blank = static_cast<int>(post.cols()) - 1;
  int prev = -1;
  for (Eigen::Index t = 0; t < post.rows(); ++t) {
    Eigen::Index arg = 0;
    post.row(t).maxCoeff(&arg);  // first maximum wins
    int k = static_cast<int>(arg);
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

std::vector<int> timestamps_of_best_path(const Posteriorgram& post) {
  std::vector<int> out;
  const int blank = static_cast<int>(post.cols()) - 1;
  int prev = -1;
  for (Eigen::Index t = 0; t < post.rows(); ++t) {
    Eigen::Index arg = 0;
    post.row(t).maxCoeff(&arg);
    int k = static_cast<int>(arg);
    if (k != prev && k != blank) out.push_back(static_cast<int>(t));
    prev = k;
  }
  return out;
}

MatrixD log_softmax_rows(const MatrixD& logits) {
  MatrixD out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    double m = logits.row(t).maxCoeff();
    double lse = m + std::log((logits.row(t).array() - m).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

void check_posteriorgram(const Posteriorgram& post, double tol) {
  if (post.rows() < 1 || post.cols() < 2) throw InvalidArgument("posteriorgram must have >=1 frame and >=2 classes");
  for (Eigen::Index t = 0; t < post.rows(); ++t) {
    double s = post.row(t).array().exp().sum();
    if (std::abs(s - 1.0) > tol) {
      throw InvalidArgument("posteriorgram row " + std::to_string(t) + " sums to " + std::to_string(s));
    }
  }
}

}  // namespace dcond
