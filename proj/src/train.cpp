#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dcond/ctc.hpp"
#include "dcond/decoder.hpp"
#include "dcond/error.hpp"

namespace dcond {
namespace {

struct Prepared {
  std::size_t index;
  LabelSeq subclass;
  LabelSeq phoneme;
};

template <typename Scalar>
std::vector<Prepared> prepare(std::span<const BasicExample<Scalar>> set, const SubclassTable& table, int* skipped) {
  std::vector<Prepared> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& ex = set[i];
    if (ex.phonemes.empty()) {
      ++*skipped;
      continue;
    }
    Prepared p{i, table.labels_for(ex.phonemes), table.phoneme_targets(ex.phonemes)};
    const int frames = static_cast<int>(ex.patched.rows());
    if (frames < ctc_min_frames(p.subclass) || frames < ctc_min_frames(p.phoneme)) {
      ++*skipped;
      continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

template <typename Scalar>
BasicTrainResult<Scalar> train(BasicDecoderModel<Scalar> model, std::span<const BasicExample<Scalar>> train_set,
                               std::span<const BasicExample<Scalar>> val_set, const TrainConfig& cfg,
                               const EpochCallback& on_epoch) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (cfg.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (cfg.learning_rate < 0) throw InvalidArgument("train: learning rate must be non-negative");
  if (cfg.alpha.alpha_max < 0 || cfg.alpha.alpha_max > 1) throw InvalidArgument("train: alpha_max must lie in [0, 1]");

  const SubclassTable& table = model.table();
  const bool mono = table.scheme() == SubclassScheme::Monophone;
  BasicTrainResult<Scalar> result{model, {}, 0, 0};
  std::vector<Prepared> items = prepare(train_set, table, &result.skipped);
  if (items.empty()) throw InvalidArgument("train: no alignable training trials");
  const auto val = val_set.empty() ? train_set : val_set;

  const std::size_t n = model.values().size();
  Vector grad = Vector::Zero(n);
  Vector m = Vector::Zero(n);
  Vector v = Vector::Zero(n);
  long step = 0;
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  double best_per = std::numeric_limits<double>::infinity();
  ForwardCache<Scalar> cache;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double alpha = mono ? 1.0 : alpha_at(cfg.alpha, epoch);
    // Fisher-Yates with an explicit draw so the order does not depend on the library's shuffle.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    EpochStats stats;
    stats.epoch = epoch;
    stats.alpha = alpha;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      grad.setZero();
      for (std::size_t b = start; b < stop; ++b) {
        const Prepared& item = items[order[b]];
        const auto& ex = train_set[item.index];
        RowMatrix<Scalar> logits = forward_logits(model, ex.patched, &cache);
        const Posteriorgram post = log_softmax_rows(logits.template cast<double>());
        CombinedLossResult loss;
        try {
          loss = combined_loss(post, item.subclass, item.phoneme, table, alpha, true);
        } catch (const Unalignable& e) {
          throw Unalignable("trial " + ex.id + ": " + e.what());
        }
        if (!std::isfinite(loss.total)) {
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + " on trial " + ex.id);
        }
        stats.loss += loss.total;
        stats.mono_loss += loss.mono;
        stats.subclass_loss += loss.subclass;
        const RowMatrix<Scalar> d_logits = (loss.grad * scale).template cast<Scalar>();
        backward(model, cache, d_logits, grad);
      }
      const double norm = std::sqrt(grad.template cast<double>().squaredNorm());
      if (!std::isfinite(norm)) {
        throw TrainingDiverged("non-finite gradient at epoch " + std::to_string(epoch));
      }
      if (cfg.clip_norm > 0 && norm > cfg.clip_norm) grad *= static_cast<Scalar>(cfg.clip_norm / norm);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      const auto b1 = static_cast<Scalar>(cfg.adam_beta1);
      const auto b2 = static_cast<Scalar>(cfg.adam_beta2);
      m = b1 * m + (Scalar(1) - b1) * grad;
      v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
      const auto lr = static_cast<Scalar>(cfg.learning_rate / c1);
      const auto eps = static_cast<Scalar>(cfg.adam_eps);
      const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
      model.values().array() -= lr * m.array() / ((v.array() * inv_c2).sqrt() + eps);
    }
    const double count = static_cast<double>(items.size());
    stats.loss /= count;
    stats.mono_loss /= count;
    stats.subclass_loss /= count;
    stats.val_per = greedy_per(model, val);
    if (stats.val_per < best_per) {
      best_per = stats.val_per;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

template BasicTrainResult<float> train(BasicDecoderModel<float>, std::span<const BasicExample<float>>,
                                       std::span<const BasicExample<float>>, const TrainConfig&, const EpochCallback&);
template BasicTrainResult<double> train(BasicDecoderModel<double>, std::span<const BasicExample<double>>,
                                        std::span<const BasicExample<double>>, const TrainConfig&,
                                        const EpochCallback&);

}  // namespace dcond
