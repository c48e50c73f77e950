#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcond/phonemes.hpp"
#include "dcond/subclass.hpp"
#include "dcond/types.hpp"

namespace dcond {

struct PatchConfig {
  int window = 32;
  int stride = 14;
};

/// Rows are flattened windows of `window` consecutive frames (time-major),
/// one every `stride` frames: T' = floor((T - window) / stride) + 1.
template <typename Scalar>
RowMatrix<Scalar> patch_features(const RowMatrix<Scalar>& features, const PatchConfig& cfg);

/// Number of patched frames for a T-frame input (0 when T < window).
int patched_length(int frames, const PatchConfig& cfg);

struct ModelConfig {
  int input_dim = 0;   // channels * window
  int proj_dim = 64;   // width of the input projection feeding the first GRU layer
  int hidden_dim = 64; // per direction
  int num_layers = 2;
  int num_subclasses = 0;
  PatchConfig patch;

  int head_size() const { return num_subclasses + 1; }
  int blank() const { return num_subclasses; }
};

struct TensorSlot {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Named views into one flat parameter vector.
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelConfig& cfg);
  const std::vector<TensorSlot>& slots() const { return slots_; }
  const TensorSlot& slot(const std::string& name) const;
  std::size_t total() const { return total_; }

 private:
  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
};

/// Patched input -> affine projection -> stacked bidirectional GRU -> affine
/// head over num_subclasses + 1 classes (blank last).
template <typename Scalar>
class BasicDecoderModel {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = RowMatrix<Scalar>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  /// Uniform(+-1/sqrt(fan_in)) initialization from `seed`.
  BasicDecoderModel(ModelConfig cfg, SubclassTable table, std::uint64_t seed);
  /// All parameters zero.
  static BasicDecoderModel zeros(ModelConfig cfg, SubclassTable table);

  const ModelConfig& config() const { return cfg_; }
  const SubclassTable& table() const { return table_; }
  const ParameterLayout& layout() const { return layout_; }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  MatrixMap tensor(const std::string& name);
  ConstMatrixMap tensor(const std::string& name) const;

  template <typename Other>
  BasicDecoderModel<Other> cast() const;

 private:
  struct ZeroTag {};
  BasicDecoderModel(ModelConfig cfg, SubclassTable table, ZeroTag);

  ModelConfig cfg_;
  SubclassTable table_;
  ParameterLayout layout_;
  Vector values_;

  template <typename>
  friend class BasicDecoderModel;
};

using DecoderModel = BasicDecoderModel<float>;

/// Intermediate activations retained for backpropagation.
template <typename Scalar>
struct ForwardCache {
  using Matrix = RowMatrix<Scalar>;
  struct Direction {
    Matrix r, z, n, hh_n, h_prev, h;
  };
  struct Layer {
    Matrix input;
    Direction fwd, bwd;
    Matrix output;  // [h_fwd, h_bwd]
  };
  Matrix patched;
  std::vector<Layer> layers;
  Matrix logits;
};

/// Pre-softmax head outputs, frames x head_size.
template <typename Scalar>
RowMatrix<Scalar> forward_logits(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched,
                                 ForwardCache<Scalar>* cache = nullptr);

/// Subclass posteriorgram: log-softmax of the head, frames x (num_subclasses + 1).
template <typename Scalar>
Posteriorgram forward(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched);

/// Final-layer bidirectional hidden states, frames x (2 * hidden_dim).
template <typename Scalar>
RowMatrix<Scalar> extract_latents(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched);

/// Accumulates d loss / d parameters into `grad` (same layout as the model's values).
template <typename Scalar>
void backward(const BasicDecoderModel<Scalar>& model, const ForwardCache<Scalar>& cache,
              const RowMatrix<Scalar>& d_logits, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad);

/// Phoneme posteriorgram (frames x 41): per frame p(c) = sum of member
/// subclass probabilities; the blank passes through.
Posteriorgram marginalize(const Posteriorgram& sub_post, const SubclassTable& table);

struct CombinedLossResult {
  double total = 0.0;
  double mono = 0.0;      // CTC on marginalized phoneme posteriors
  double subclass = 0.0;  // CTC on subclass posteriors
  MatrixD grad;           // d total / d subclass logits
};

/// alpha * mono + (1 - alpha) * subclass. Throws Unalignable naming the failing component.
CombinedLossResult combined_loss(const Posteriorgram& sub_post, const LabelSeq& subclass_labels,
                                 const LabelSeq& phoneme_labels, const SubclassTable& table, double alpha,
                                 bool with_grad = true);

struct AlphaSchedule {
  int warmup_epochs = 10;
  double step = 0.1;
  int step_every = 10;
  double alpha_max = 0.6;
};

/// 0 during warmup, then step * (floor((epoch - warmup) / step_every) + 1), capped at alpha_max.
double alpha_at(const AlphaSchedule& schedule, int epoch);

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 0.02;
  int epochs = 120;
  std::uint64_t seed = 0;
  AlphaSchedule alpha;
  double clip_norm = 10.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

/// One training trial after patching.
template <typename Scalar>
struct BasicExample {
  std::string id;
  RowMatrix<Scalar> patched;
  PhonemeSeq phonemes;
};
using Example = BasicExample<float>;

struct EpochStats {
  int epoch = 0;
  double alpha = 0.0;
  double loss = 0.0;
  double mono_loss = 0.0;
  double subclass_loss = 0.0;
  double val_per = 0.0;
};

template <typename Scalar>
struct BasicTrainResult {
  BasicDecoderModel<Scalar> model;  // best-validation-PER checkpoint
  std::vector<EpochStats> history;
  int best_epoch = 0;
  int skipped = 0;  // training trials too short to align
};
using TrainResult = BasicTrainResult<float>;

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam over exact BPTT gradients of the combined loss. Single-threaded
/// and bitwise deterministic for a given seed. For the Monophone table alpha is 1.
template <typename Scalar>
BasicTrainResult<Scalar> train(BasicDecoderModel<Scalar> model, std::span<const BasicExample<Scalar>> train_set,
                               std::span<const BasicExample<Scalar>> val_set, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {});

/// Best path over a subclass posteriorgram read back as phonemes. Under the
/// diphone scheme every phoneme is emitted as a transition token followed by
/// its self token, so consecutive labels sharing a main class are merged.
PhonemeSeq subclass_best_path(const Posteriorgram& subclass_post, const SubclassTable& table);

/// Greedy decode via subclass_best_path; boundary SILs are dropped.
template <typename Scalar>
PhonemeSeq greedy_phonemes(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched);

/// Greedy phoneme error rate over a set of examples.
template <typename Scalar>
double greedy_per(const BasicDecoderModel<Scalar>& model, std::span<const BasicExample<Scalar>> examples);

/// Binary checkpoint: magic "DCND", version, config, table descriptor, named float32 tensors.
void save_checkpoint(const DecoderModel& model, const std::string& path);
DecoderModel load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const DecoderModel& model);
DecoderModel deserialize_checkpoint(std::string_view bytes);

/// CSV `epoch,alpha,L,Lc,Ls,val_per`.
std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace dcond
