#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dcond/phonemes.hpp"
#include "dcond/types.hpp"

namespace dcond {

/// Additive prototype-plus-context generator: each token c after predecessor p
/// emits frames b(c) + gamma * x(p, c) + N(0, sigma^2) per channel.
struct SynthConfig {
  int channels = 64;
  double mean_duration = 6.0;
  int min_duration = 2;
  double noise_sigma = 0.7;
  double coarticulation = 1.0;  // gamma
  std::uint64_t seed = 0;

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
};

struct Prototypes {
  MatrixD base;     // 40 x D, row = phoneme index
  MatrixD context;  // 1600 x D, row = diphone_index(prev, cur)
};

/// Standard-normal draws, base rows first, then context rows, channel-major within a row.
Prototypes gen_prototypes(const SynthConfig& cfg, std::mt19937_64& rng);
/// Draws from a stream derived from cfg.seed alone.
Prototypes gen_prototypes(const SynthConfig& cfg);

struct Trial {
  std::string id;
  std::string text;
  PhonemeSeq phonemes;
  MatrixF features;            // T x D
  std::vector<int> durations;  // frames per phoneme token; sums to T
};

Trial gen_trial(std::string id, std::string_view sentence, const Lexicon& lexicon, const Prototypes& protos,
                const SynthConfig& cfg, std::mt19937_64& rng);

/// Independent stream for trial `index`, derived from (cfg.seed, index).
std::mt19937_64 trial_rng(const SynthConfig& cfg, std::uint64_t index);

struct SplitFractions {
  double train = 2000.0 / 2400.0;
  double val = 200.0 / 2400.0;
  double test = 200.0 / 2400.0;
};

struct TrialRecord {
  std::string id;
  std::string text;
  std::string phonemes;      // space-separated symbols
  std::string feature_file;  // relative to the dataset root
  int frames = 0;
};

struct DatasetManifest {
  std::string split;
  std::vector<TrialRecord> trials;
};

/// Sizes per split: round(f * n) for train and val, remainder to test.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

/// Generates every sentence, splits by a seeded shuffle, and writes
/// `<out>/<split>/<id>.b2td`, `<out>/<split>.jsonl` and `<out>/config.json`.
/// Returns manifests in the order train, val, test.
std::vector<DatasetManifest> gen_dataset(std::span<const std::string> sentences, const Lexicon& lexicon,
                                         const SynthConfig& cfg, const SplitFractions& fractions,
                                         const std::string& out_dir);

/// B2TD feature file: magic, u16 version 1, u16 reserved, u32 T, u32 D, then float32 LE row-major.
std::string serialize_features(const MatrixF& features);
MatrixF deserialize_features(std::string_view bytes);
void write_features(const std::string& path, const MatrixF& features);
MatrixF read_features(const std::string& path);

std::string manifest_jsonl(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view jsonl, std::string split);
DatasetManifest read_manifest(const std::string& dataset_dir, const std::string& split);

/// Reads a split back into trials (durations are not stored and come back empty).
std::vector<Trial> load_split(const std::string& dataset_dir, const std::string& split);

}  // namespace dcond
