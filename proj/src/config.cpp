#include "dcond/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dcond/error.hpp"

namespace dcond {
namespace {

using Json = nlohmann::json;

/// Reads known keys from one object and rejects anything else.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError("config: " + path_ + " must be an object");
  }

  template <typename T>
  Section& get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError("config: " + path_ + "." + key + " has the wrong type");
    }
    return *this;
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ParseError("config: unknown key " + path_ + "." + it.key());
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

nlohmann::ordered_json synth_config_to_json(const SynthConfig& c) {
  return {{"channels", c.channels},         {"mean_duration", c.mean_duration},
          {"min_duration", c.min_duration}, {"noise_sigma", c.noise_sigma},
          {"coarticulation", c.coarticulation}, {"seed", c.seed}};
}

nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["synth"] = synth_config_to_json(c.synth);
  j["splits"] = {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}};
  j["patch"] = {{"window", c.patch.window}, {"stride", c.patch.stride}};
  j["model"] = {{"proj_dim", c.model.proj_dim}, {"hidden_dim", c.model.hidden_dim}, {"num_layers", c.model.num_layers}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"clip_norm", c.train.clip_norm},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"alpha",
                 {{"warmup_epochs", c.train.alpha.warmup_epochs},
                  {"step", c.train.alpha.step},
                  {"step_every", c.train.alpha.step_every},
                  {"alpha_max", c.train.alpha.alpha_max}}}};
  j["decode"] = {{"beam_width", c.decode.beam_width},   {"lm_weight", c.decode.lm_weight},
                 {"word_bonus", c.decode.word_bonus},   {"temperature", c.decode.temperature},
                 {"nbest_size", c.decode.nbest_size}};
  j["lm"] = {{"order", c.lm.order}, {"backoff", c.lm.backoff}};
  j["service"] = {{"endpoint", c.service.endpoint},
                  {"model", c.service.model},
                  {"timeout_seconds", c.service.timeout_seconds},
                  {"max_retries", c.service.max_retries},
                  {"temperature", c.service.temperature},
                  {"backoff_base_seconds", c.service.backoff_base_seconds},
                  {"jitter_seed", c.service.jitter_seed},
                  {"api_key_env", c.service.api_key_env}};
  j["paths"] = {{"lexicon", c.paths.lexicon}, {"sentences", c.paths.sentences}};
  j["seeds"] = c.seeds;
  return j;
}

void RunConfig::validate() const {
  synth.validate();
  split_sizes(10, splits);
  if (patch.window < 1 || patch.stride < 1) throw InvalidArgument("config: patch window and stride must be >= 1");
  if (model.proj_dim < 1 || model.hidden_dim < 1 || model.num_layers < 1) {
    throw InvalidArgument("config: model dimensions must be >= 1");
  }
  if (train.batch_size < 1 || train.epochs < 1 || train.learning_rate < 0) {
    throw InvalidArgument("config: train.batch_size and train.epochs must be >= 1, learning_rate >= 0");
  }
  if (train.alpha.alpha_max < 0 || train.alpha.alpha_max > 1) throw InvalidArgument("config: alpha_max must lie in [0, 1]");
  if (train.alpha.step_every < 1) throw InvalidArgument("config: alpha.step_every must be >= 1");
  if (decode.beam_width < 1 || decode.nbest_size < 1 || !(decode.temperature > 0)) {
    throw InvalidArgument("config: decode needs beam_width >= 1, nbest_size >= 1, temperature > 0");
  }
  if (lm.order < 1 || !(lm.backoff > 0 && lm.backoff <= 1)) throw InvalidArgument("config: bad lm section");
  if (!(service.timeout_seconds > 0)) throw InvalidArgument("config: service.timeout_seconds must be > 0");
  if (seeds.empty()) throw InvalidArgument("config: seeds must not be empty");
}

RunConfig parse_run_config(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");
  if (auto* s = root.child("synth")) {
    Section(*s, "synth")
        .get("channels", c.synth.channels)
        .get("mean_duration", c.synth.mean_duration)
        .get("min_duration", c.synth.min_duration)
        .get("noise_sigma", c.synth.noise_sigma)
        .get("coarticulation", c.synth.coarticulation)
        .get("seed", c.synth.seed)
        .finish();
  }
  if (auto* s = root.child("splits")) {
    Section(*s, "splits").get("train", c.splits.train).get("val", c.splits.val).get("test", c.splits.test).finish();
  }
  if (auto* s = root.child("patch")) {
    Section(*s, "patch").get("window", c.patch.window).get("stride", c.patch.stride).finish();
  }
  if (auto* s = root.child("model")) {
    Section(*s, "model")
        .get("proj_dim", c.model.proj_dim)
        .get("hidden_dim", c.model.hidden_dim)
        .get("num_layers", c.model.num_layers)
        .finish();
  }
  if (auto* s = root.child("train")) {
    Section sec(*s, "train");
    sec.get("batch_size", c.train.batch_size)
        .get("learning_rate", c.train.learning_rate)
        .get("epochs", c.train.epochs)
        .get("clip_norm", c.train.clip_norm)
        .get("adam_beta1", c.train.adam_beta1)
        .get("adam_beta2", c.train.adam_beta2)
        .get("adam_eps", c.train.adam_eps);
    if (auto* a = sec.child("alpha")) {
      Section(*a, "train.alpha")
          .get("warmup_epochs", c.train.alpha.warmup_epochs)
          .get("step", c.train.alpha.step)
          .get("step_every", c.train.alpha.step_every)
          .get("alpha_max", c.train.alpha.alpha_max)
          .finish();
    }
    sec.finish();
  }
  if (auto* s = root.child("decode")) {
    Section(*s, "decode")
        .get("beam_width", c.decode.beam_width)
        .get("lm_weight", c.decode.lm_weight)
        .get("word_bonus", c.decode.word_bonus)
        .get("temperature", c.decode.temperature)
        .get("nbest_size", c.decode.nbest_size)
        .finish();
  }
  if (auto* s = root.child("lm")) Section(*s, "lm").get("order", c.lm.order).get("backoff", c.lm.backoff).finish();
  if (auto* s = root.child("service")) {
    Section(*s, "service")
        .get("endpoint", c.service.endpoint)
        .get("model", c.service.model)
        .get("timeout_seconds", c.service.timeout_seconds)
        .get("max_retries", c.service.max_retries)
        .get("temperature", c.service.temperature)
        .get("backoff_base_seconds", c.service.backoff_base_seconds)
        .get("jitter_seed", c.service.jitter_seed)
        .get("api_key_env", c.service.api_key_env)
        .finish();
  }
  if (auto* s = root.child("paths")) {
    Section(*s, "paths").get("lexicon", c.paths.lexicon).get("sentences", c.paths.sentences).finish();
  }
  root.get("seeds", c.seeds);
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace dcond
