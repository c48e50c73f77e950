#include "dcond/decoder.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "dcond/ctc.hpp"
#include "dcond/error.hpp"
#include "dcond/metrics.hpp"

namespace dcond {

int patched_length(int frames, const PatchConfig& cfg) {
  if (frames < cfg.window) return 0;
  return (frames - cfg.window) / cfg.stride + 1;
}

template <typename Scalar>
RowMatrix<Scalar> patch_features(const RowMatrix<Scalar>& features, const PatchConfig& cfg) {
  if (cfg.window < 1 || cfg.stride < 1) throw InvalidArgument("patch window and stride must be >= 1");
  const int frames = static_cast<int>(features.rows());
  const int dim = static_cast<int>(features.cols());
  if (frames < cfg.window) {
    throw InvalidArgument("patch_features: " + std::to_string(frames) + " frames is shorter than window " +
                          std::to_string(cfg.window));
  }
  const int rows = patched_length(frames, cfg);
  RowMatrix<Scalar> out(rows, static_cast<Eigen::Index>(dim) * cfg.window);
  for (int i = 0; i < rows; ++i) {
    // Row-major storage makes a block of consecutive frames contiguous.
    const Scalar* src = features.data() + static_cast<std::size_t>(i) * cfg.stride * dim;
    std::copy(src, src + static_cast<std::size_t>(dim) * cfg.window, out.row(i).data());
  }
  return out;
}

template RowMatrix<float> patch_features(const RowMatrix<float>&, const PatchConfig&);
template RowMatrix<double> patch_features(const RowMatrix<double>&, const PatchConfig&);

ParameterLayout::ParameterLayout(const ModelConfig& cfg) {
  if (cfg.input_dim < 1 || cfg.proj_dim < 1 || cfg.hidden_dim < 1 || cfg.num_layers < 1 || cfg.num_subclasses < 1) {
    throw InvalidArgument("model config: all dimensions must be positive");
  }
  auto add = [&](std::string name, int rows, int cols) {
    slots_.push_back({std::move(name), rows, cols, total_});
    total_ += static_cast<std::size_t>(rows) * cols;
  };
  const int d = cfg.hidden_dim;
  add("proj.w", cfg.input_dim, cfg.proj_dim);
  add("proj.b", 1, cfg.proj_dim);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const int in = l == 0 ? cfg.proj_dim : 2 * d;
    for (const char* dir : {"fwd", "bwd"}) {
      std::string p = "gru." + std::to_string(l) + "." + dir + ".";
      add(p + "wx", in, 3 * d);
      add(p + "wh", d, 3 * d);
      add(p + "bx", 1, 3 * d);
      add(p + "bh", 1, 3 * d);
    }
  }
  add("head.w", 2 * d, cfg.head_size());
  add("head.b", 1, cfg.head_size());
}

const TensorSlot& ParameterLayout::slot(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("no parameter tensor named " + name);
}

namespace {

ModelConfig checked(ModelConfig cfg, const SubclassTable& table) {
  if (cfg.num_subclasses == 0) cfg.num_subclasses = table.num_subclasses();
  if (cfg.num_subclasses != table.num_subclasses()) {
    throw InvalidArgument("model config num_subclasses does not match the subclass table");
  }
  return cfg;
}

// Fan-in used for the initialization bound of each tensor; biases share their weight's bound.
int fan_in(const TensorSlot& s, const ModelConfig& cfg) {
  if (s.name.starts_with("proj.")) return cfg.input_dim;
  if (s.name.starts_with("head.")) return 2 * cfg.hidden_dim;
  if (s.name.ends_with(".wh") || s.name.ends_with(".bh")) return cfg.hidden_dim;
  // wx / bx
  return s.name.starts_with("gru.0.") ? cfg.proj_dim : 2 * cfg.hidden_dim;
}

}  // namespace

template <typename Scalar>
BasicDecoderModel<Scalar>::BasicDecoderModel(ModelConfig cfg, SubclassTable table, ZeroTag)
    : cfg_(checked(cfg, table)), table_(std::move(table)), layout_(cfg_), values_(Vector::Zero(layout_.total())) {}

template <typename Scalar>
BasicDecoderModel<Scalar>::BasicDecoderModel(ModelConfig cfg, SubclassTable table, std::uint64_t seed)
    : BasicDecoderModel(cfg, std::move(table), ZeroTag{}) {
  std::mt19937_64 rng(seed);
  for (const auto& s : layout_.slots()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(s, cfg_)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < s.size(); ++i) values_[s.offset + i] = static_cast<Scalar>(dist(rng));
  }
}

template <typename Scalar>
BasicDecoderModel<Scalar> BasicDecoderModel<Scalar>::zeros(ModelConfig cfg, SubclassTable table) {
  return BasicDecoderModel(cfg, std::move(table), ZeroTag{});
}

template <typename Scalar>
typename BasicDecoderModel<Scalar>::MatrixMap BasicDecoderModel<Scalar>::tensor(const std::string& name) {
  const auto& s = layout_.slot(name);
  return MatrixMap(values_.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
typename BasicDecoderModel<Scalar>::ConstMatrixMap BasicDecoderModel<Scalar>::tensor(const std::string& name) const {
  const auto& s = layout_.slot(name);
  return ConstMatrixMap(values_.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
template <typename Other>
BasicDecoderModel<Other> BasicDecoderModel<Scalar>::cast() const {
  auto out = BasicDecoderModel<Other>::zeros(cfg_, table_);
  out.values_ = values_.template cast<Other>();
  return out;
}

template class BasicDecoderModel<float>;
template class BasicDecoderModel<double>;
template BasicDecoderModel<double> BasicDecoderModel<float>::cast<double>() const;
template BasicDecoderModel<float> BasicDecoderModel<double>::cast<float>() const;
template BasicDecoderModel<float> BasicDecoderModel<float>::cast<float>() const;
template BasicDecoderModel<double> BasicDecoderModel<double>::cast<double>() const;

namespace {

template <typename Scalar>
using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using ConstMap = Eigen::Map<const RowMatrix<Scalar>>;

template <typename Scalar>
using GradMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
GradMap<Scalar> grad_slot(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad, const ParameterLayout& layout,
                          const std::string& name) {
  const auto& s = layout.slot(name);
  return GradMap<Scalar>(grad.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
void run_direction(const RowMatrix<Scalar>& pre, const ConstMap<Scalar>& wh, const ConstMap<Scalar>& bh, bool reverse,
                   typename ForwardCache<Scalar>::Direction& out) {
  const Eigen::Index frames = pre.rows();
  const Eigen::Index d = wh.rows();
  out.r.resize(frames, d);
  out.z.resize(frames, d);
  out.n.resize(frames, d);
  out.hh_n.resize(frames, d);
  out.h_prev.resize(frames, d);
  out.h.resize(frames, d);
  Row<Scalar> h = Row<Scalar>::Zero(d);
  Row<Scalar> hh(3 * d);
  for (Eigen::Index step = 0; step < frames; ++step) {
    const Eigen::Index t = reverse ? frames - 1 - step : step;
    hh.noalias() = h * wh;
    hh += bh.row(0);
    auto a = pre.row(t);
    auto r = (Scalar(1) / (Scalar(1) + (-(a.segment(0, d) + hh.segment(0, d))).array().exp())).matrix();
    auto z = (Scalar(1) / (Scalar(1) + (-(a.segment(d, d) + hh.segment(d, d))).array().exp())).matrix();
    out.r.row(t) = r;
    out.z.row(t) = z;
    out.hh_n.row(t) = hh.segment(2 * d, d);
    out.n.row(t) = (a.segment(2 * d, d).array() + out.r.row(t).array() * hh.segment(2 * d, d).array()).tanh();
    out.h_prev.row(t) = h;
    h = ((Scalar(1) - out.z.row(t).array()) * out.n.row(t).array() + out.z.row(t).array() * h.array()).matrix();
    out.h.row(t) = h;
  }
}

// Backpropagates d loss / d h (dh_out, frames x d) through one direction.
// Accumulates parameter gradients and returns d loss / d input.
template <typename Scalar>
RowMatrix<Scalar> backward_direction(const typename ForwardCache<Scalar>::Direction& c, const RowMatrix<Scalar>& input,
                                     const RowMatrix<Scalar>& dh_out, const ConstMap<Scalar>& wx,
                                     const ConstMap<Scalar>& wh, bool reverse, GradMap<Scalar> g_wx,
                                     GradMap<Scalar> g_wh, GradMap<Scalar> g_bx, GradMap<Scalar> g_bh) {
  const Eigen::Index frames = dh_out.rows();
  const Eigen::Index d = wh.rows();
  RowMatrix<Scalar> d_pre(frames, 3 * d);
  RowMatrix<Scalar> d_hh(frames, 3 * d);
  Row<Scalar> dh_next = Row<Scalar>::Zero(d);
  for (Eigen::Index step = frames - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? frames - 1 - step : step;
    auto dh = (dh_out.row(t) + dh_next).array();
    auto r = c.r.row(t).array();
    auto z = c.z.row(t).array();
    auto n = c.n.row(t).array();
    const auto dn_pre = (dh * (Scalar(1) - z) * (Scalar(1) - n * n)).eval();
    const auto dz_pre = (dh * (c.h_prev.row(t).array() - n) * z * (Scalar(1) - z)).eval();
    const auto dr_pre = (dn_pre * c.hh_n.row(t).array() * r * (Scalar(1) - r)).eval();
    d_pre.row(t).segment(0, d) = dr_pre.matrix();
    d_pre.row(t).segment(d, d) = dz_pre.matrix();
    d_pre.row(t).segment(2 * d, d) = dn_pre.matrix();
    d_hh.row(t).segment(0, d) = dr_pre.matrix();
    d_hh.row(t).segment(d, d) = dz_pre.matrix();
    d_hh.row(t).segment(2 * d, d) = (dn_pre * r).matrix();
    Row<Scalar> dh_prev = (dh * z).matrix();
    dh_prev.noalias() += d_hh.row(t) * wh.transpose();
    dh_next = dh_prev;
  }
  g_wh.noalias() += c.h_prev.transpose() * d_hh;
  g_bh.row(0) += d_hh.colwise().sum();
  g_wx.noalias() += input.transpose() * d_pre;
  g_bx.row(0) += d_pre.colwise().sum();
  RowMatrix<Scalar> d_input = d_pre * wx.transpose();
  return d_input;
}

}  // namespace

template <typename Scalar>
RowMatrix<Scalar> forward_logits(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched,
                                 ForwardCache<Scalar>* cache) {
  const auto& cfg = model.config();
  if (patched.cols() != cfg.input_dim) {
    throw InvalidArgument("forward: input width " + std::to_string(patched.cols()) + " != model input_dim " +
                          std::to_string(cfg.input_dim));
  }
  if (patched.rows() < 1) throw InvalidArgument("forward: no frames");
  const Eigen::Index d = cfg.hidden_dim;

  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  c.layers.resize(cfg.num_layers);

  RowMatrix<Scalar> x = patched * model.tensor("proj.w");
  x.rowwise() += model.tensor("proj.b").row(0);
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& layer = c.layers[l];
    const std::string p = "gru." + std::to_string(l) + ".";
    for (int dir = 0; dir < 2; ++dir) {
      const std::string q = p + (dir == 0 ? "fwd." : "bwd.");
      RowMatrix<Scalar> pre = x * model.tensor(q + "wx");
      pre.rowwise() += model.tensor(q + "bx").row(0);
      run_direction<Scalar>(pre, model.tensor(q + "wh"), model.tensor(q + "bh"), dir == 1,
                            dir == 0 ? layer.fwd : layer.bwd);
    }
    layer.output.resize(x.rows(), 2 * d);
    layer.output.leftCols(d) = layer.fwd.h;
    layer.output.rightCols(d) = layer.bwd.h;
    layer.input = std::move(x);
    x = layer.output;
  }
  RowMatrix<Scalar> logits = x * model.tensor("head.w");
  logits.rowwise() += model.tensor("head.b").row(0);
  if (cache) {
    c.patched = patched;
    c.logits = logits;
  }
  return logits;
}

template <typename Scalar>
void backward(const BasicDecoderModel<Scalar>& model, const ForwardCache<Scalar>& c, const RowMatrix<Scalar>& d_logits,
              Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad) {
  const auto& cfg = model.config();
  const auto& layout = model.layout();
  if (grad.size() != static_cast<Eigen::Index>(layout.total())) grad = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(layout.total());
  const Eigen::Index d = cfg.hidden_dim;
  const auto& top = c.layers.back().output;

  grad_slot(grad, layout, "head.w").noalias() += top.transpose() * d_logits;
  grad_slot(grad, layout, "head.b").row(0) += d_logits.colwise().sum();
  RowMatrix<Scalar> d_out = d_logits * model.tensor("head.w").transpose();

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& layer = c.layers[l];
    const std::string p = "gru." + std::to_string(l) + ".";
    RowMatrix<Scalar> d_in = RowMatrix<Scalar>::Zero(layer.input.rows(), layer.input.cols());
    for (int dir = 0; dir < 2; ++dir) {
      const std::string q = p + (dir == 0 ? "fwd." : "bwd.");
      RowMatrix<Scalar> dh = dir == 0 ? RowMatrix<Scalar>(d_out.leftCols(d)) : RowMatrix<Scalar>(d_out.rightCols(d));
      d_in += backward_direction<Scalar>(dir == 0 ? layer.fwd : layer.bwd, layer.input, dh, model.tensor(q + "wx"),
                                         model.tensor(q + "wh"), dir == 1, grad_slot(grad, layout, q + "wx"),
                                         grad_slot(grad, layout, q + "wh"), grad_slot(grad, layout, q + "bx"),
                                         grad_slot(grad, layout, q + "bh"));
    }
    d_out = std::move(d_in);
  }
  grad_slot(grad, layout, "proj.w").noalias() += c.patched.transpose() * d_out;
  grad_slot(grad, layout, "proj.b").row(0) += d_out.colwise().sum();
}

template <typename Scalar>
Posteriorgram forward(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched) {
  return log_softmax_rows(forward_logits(model, patched).template cast<double>());
}

template <typename Scalar>
RowMatrix<Scalar> extract_latents(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched) {
  ForwardCache<Scalar> cache;
  forward_logits(model, patched, &cache);
  return cache.layers.back().output;
}

template RowMatrix<float> forward_logits(const BasicDecoderModel<float>&, const RowMatrix<float>&, ForwardCache<float>*);
template RowMatrix<double> forward_logits(const BasicDecoderModel<double>&, const RowMatrix<double>&,
                                          ForwardCache<double>*);
template void backward(const BasicDecoderModel<float>&, const ForwardCache<float>&, const RowMatrix<float>&,
                       Eigen::Matrix<float, Eigen::Dynamic, 1>&);
template void backward(const BasicDecoderModel<double>&, const ForwardCache<double>&, const RowMatrix<double>&,
                       Eigen::Matrix<double, Eigen::Dynamic, 1>&);
template Posteriorgram forward(const BasicDecoderModel<float>&, const RowMatrix<float>&);
template Posteriorgram forward(const BasicDecoderModel<double>&, const RowMatrix<double>&);
template RowMatrix<float> extract_latents(const BasicDecoderModel<float>&, const RowMatrix<float>&);
template RowMatrix<double> extract_latents(const BasicDecoderModel<double>&, const RowMatrix<double>&);

Posteriorgram marginalize(const Posteriorgram& sub_post, const SubclassTable& table) {
  const int subclasses = table.num_subclasses();
  if (sub_post.cols() != subclasses + 1) {
    throw InvalidArgument("marginalize: posteriorgram width " + std::to_string(sub_post.cols()) +
                          " != num_subclasses + 1 = " + std::to_string(subclasses + 1));
  }
  Posteriorgram out(sub_post.rows(), kNumPhonemes + 1);
  std::vector<double> acc(kNumPhonemes);
  for (Eigen::Index t = 0; t < sub_post.rows(); ++t) {
    const double m = sub_post.row(t).head(subclasses).maxCoeff();
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int s = 0; s < subclasses; ++s) acc[table.main_of(s)] += std::exp(sub_post(t, s) - m);
    for (int c = 0; c < kNumPhonemes; ++c) out(t, c) = m + std::log(acc[c]);
    out(t, kNumPhonemes) = sub_post(t, subclasses);
  }
  return out;
}

CombinedLossResult combined_loss(const Posteriorgram& sub_post, const LabelSeq& subclass_labels,
                                 const LabelSeq& phoneme_labels, const SubclassTable& table, double alpha,
                                 bool with_grad) {
  if (alpha < 0.0 || alpha > 1.0) throw InvalidArgument("combined_loss: alpha must lie in [0, 1]");
  CombinedLossResult r;
  const Posteriorgram phon = marginalize(sub_post, table);
  const bool need_sub_grad = with_grad && alpha < 1.0;
  const bool need_mono_grad = with_grad && alpha > 0.0;

  MatrixD occ_sub, occ_mono;
  try {
    if (need_sub_grad) {
      occ_sub = ctc_log_occupancy(sub_post, subclass_labels, &r.subclass);
    } else {
      r.subclass = ctc_neg_log_likelihood(sub_post, subclass_labels);
    }
  } catch (const Unalignable& e) {
    throw Unalignable(std::string("subclass CTC: ") + e.what());
  }
  try {
    if (need_mono_grad) {
      occ_mono = ctc_log_occupancy(phon, phoneme_labels, &r.mono);
    } else {
      r.mono = ctc_neg_log_likelihood(phon, phoneme_labels);
    }
  } catch (const Unalignable& e) {
    throw Unalignable(std::string("phoneme CTC: ") + e.what());
  }
  r.total = alpha * r.mono + (1.0 - alpha) * r.subclass;
  if (!with_grad) return r;

  const int subclasses = table.num_subclasses();
  const MatrixD prob = sub_post.array().exp();
  r.grad = MatrixD::Zero(sub_post.rows(), sub_post.cols());
  if (need_sub_grad) r.grad += (1.0 - alpha) * (prob - MatrixD(occ_sub.array().exp()));
  if (need_mono_grad) {
    // d L_c / d u_j = p_j * (1 - gamma_{main(j)} / q_{main(j)})
    for (Eigen::Index t = 0; t < sub_post.rows(); ++t) {
      std::array<double, kNumPhonemes + 1> ratio{};
      for (int c = 0; c <= kNumPhonemes; ++c) {
        const double lg = occ_mono(t, c);
        ratio[c] = lg == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(lg - phon(t, c));
      }
      for (int s = 0; s < subclasses; ++s) {
        const double p = prob(t, s);
        if (p > 0.0) r.grad(t, s) += alpha * p * (1.0 - ratio[table.main_of(s)]);
      }
      r.grad(t, subclasses) += alpha * prob(t, subclasses) * (1.0 - ratio[kNumPhonemes]);
    }
  }
  return r;
}

double alpha_at(const AlphaSchedule& schedule, int epoch) {
  if (epoch < 0) throw InvalidArgument("alpha_at: negative epoch");
  if (epoch < schedule.warmup_epochs) return 0.0;
  const int steps = (epoch - schedule.warmup_epochs) / schedule.step_every + 1;
  return std::min(schedule.alpha_max, schedule.step * steps);
}

PhonemeSeq subclass_best_path(const Posteriorgram& subclass_post, const SubclassTable& table) {
  if (subclass_post.cols() != table.num_subclasses() + 1) {
    throw InvalidArgument("subclass_best_path: expected " + std::to_string(table.num_subclasses() + 1) + " columns, got " +
                          std::to_string(subclass_post.cols()));
  }
  const bool merge = table.scheme() == SubclassScheme::Diphone;
  PhonemeSeq out;
  for (int label : best_path_decode(subclass_post)) {
    const Phoneme p(table.main_of(label));
    if (merge && !out.empty() && out.back() == p) continue;
    out.push_back(p);
  }
  return out;
}

template <typename Scalar>
PhonemeSeq greedy_phonemes(const BasicDecoderModel<Scalar>& model, const RowMatrix<Scalar>& patched) {
  return strip_boundary_sil(subclass_best_path(forward(model, patched), model.table()));
}

template <typename Scalar>
double greedy_per(const BasicDecoderModel<Scalar>& model, std::span<const BasicExample<Scalar>> examples) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
  pairs.reserve(examples.size());
  for (const auto& ex : examples) {
    pairs.emplace_back(phoneme_labels(ex.phonemes), phoneme_labels(greedy_phonemes(model, ex.patched)));
  }
  return corpus_rate(pairs).rate();
}

template PhonemeSeq greedy_phonemes(const BasicDecoderModel<float>&, const RowMatrix<float>&);
template PhonemeSeq greedy_phonemes(const BasicDecoderModel<double>&, const RowMatrix<double>&);
template double greedy_per(const BasicDecoderModel<float>&, std::span<const BasicExample<float>>);
template double greedy_per(const BasicDecoderModel<double>&, std::span<const BasicExample<double>>);

}  // namespace dcond
