#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcond/decoder.hpp"
#include "dcond/ensemble.hpp"
#include "dcond/lm.hpp"
#include "dcond/synthdata.hpp"
#include "json.hpp"

namespace dcond {

struct LmConfig {
  int order = 5;
  double backoff = 0.4;
};

struct PathsConfig {
  std::string lexicon = "data/lexicon.dict";
  std::string sentences = "data/sentences.txt";
};

/// One JSON document with a section per module. Missing keys keep their
/// defaults; unknown keys at any level are rejected.
struct RunConfig {
  SynthConfig synth;
  SplitFractions splits;
  PatchConfig patch;
  ModelConfig model;  // input_dim and num_subclasses are filled in from the data and scheme
  TrainConfig train;
  DecodeConfig decode;
  LmConfig lm;
  ServiceConfig service;
  PathsConfig paths;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

nlohmann::ordered_json synth_config_to_json(const SynthConfig& cfg);

}  // namespace dcond
