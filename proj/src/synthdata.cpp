#include "dcond/synthdata.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dcond/config.hpp"
#include "dcond/error.hpp"
#include "json.hpp"

namespace dcond {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'B', '2', 'T', 'D'};

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), tag};
  return std::mt19937_64(seq);
}

std::string slurp(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::string_view s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

}  // namespace

void SynthConfig::validate() const {
  if (channels < 1) throw InvalidArgument("synth: channels must be >= 1");
  if (min_duration < 1) throw InvalidArgument("synth: min_duration must be >= 1");
  if (mean_duration < min_duration) throw InvalidArgument("synth: mean_duration must be >= min_duration");
  if (noise_sigma < 0) throw InvalidArgument("synth: noise_sigma must be >= 0");
  if (coarticulation < 0) throw InvalidArgument("synth: coarticulation must be >= 0");
}

Prototypes gen_prototypes(const SynthConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  Prototypes p;
  p.base.resize(kNumPhonemes, cfg.channels);
  p.context.resize(kNumDiphones, cfg.channels);
  for (Eigen::Index i = 0; i < p.base.size(); ++i) p.base.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.context.size(); ++i) p.context.data()[i] = normal(rng);
  return p;
}

Prototypes gen_prototypes(const SynthConfig& cfg) {
  auto rng = derived_rng(cfg.seed, 0, 0x70726f74u);
  return gen_prototypes(cfg, rng);
}

std::mt19937_64 trial_rng(const SynthConfig& cfg, std::uint64_t index) { return derived_rng(cfg.seed, index, 0x7472u); }

Trial gen_trial(std::string id, std::string_view sentence, const Lexicon& lexicon, const Prototypes& protos,
                const SynthConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (protos.base.cols() != cfg.channels) throw InvalidArgument("gen_trial: prototype width != channels");
  Trial t;
  t.id = std::move(id);
  t.text = std::string(sentence);
  t.phonemes = sentence_to_phonemes(sentence, lexicon);

  std::poisson_distribution<int> poisson(cfg.mean_duration);
  std::normal_distribution<double> noise(0.0, 1.0);
  t.durations.reserve(t.phonemes.size());
  for (std::size_t i = 0; i < t.phonemes.size(); ++i) t.durations.push_back(std::max(cfg.min_duration, poisson(rng)));
  const int frames = std::accumulate(t.durations.begin(), t.durations.end(), 0);

  t.features.resize(frames, cfg.channels);
  int row = 0;
  Phoneme prev = Phoneme::sil();
  for (std::size_t i = 0; i < t.phonemes.size(); ++i) {
    const Phoneme cur = t.phonemes[i];
    const Eigen::RowVectorXd mean =
        protos.base.row(cur.index()) + cfg.coarticulation * protos.context.row(diphone_index(prev, cur));
    for (int f = 0; f < t.durations[i]; ++f, ++row) {
      for (int d = 0; d < cfg.channels; ++d) {
        const double eps = cfg.noise_sigma > 0 ? cfg.noise_sigma * noise(rng) : 0.0;
        t.features(row, d) = static_cast<float>(mean[d] + eps);
      }
    }
    prev = cur;
  }
  return t;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must be non-negative and sum to 1");
  }
  const auto train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto val = std::min(n - std::min(train, n), static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n))));
  const std::size_t tr = std::min(train, n);
  return {tr, val, n - tr - val};
}

std::string serialize_features(const MatrixF& x) {
  std::string out(kMagic, 4);
  out.push_back(1);
  out.push_back(0);
  out.push_back(0);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(x.rows()));
  put_u32(out, static_cast<std::uint32_t>(x.cols()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(x.data()[i]));
  return out;
}

MatrixF deserialize_features(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("feature file: bad B2TD header");
  const unsigned version = static_cast<unsigned char>(bytes[4]) | (static_cast<unsigned char>(bytes[5]) << 8);
  if (version != 1) throw ParseError("feature file: unsupported version " + std::to_string(version));
  const std::uint32_t rows = get_u32(bytes, 8);
  const std::uint32_t cols = get_u32(bytes, 12);
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != 16 + 4 * count) {
    throw ParseError("feature file: expected " + std::to_string(16 + 4 * count) + " bytes, found " +
                     std::to_string(bytes.size()));
  }
  MatrixF x(rows, cols);
  for (std::size_t i = 0; i < count; ++i) x.data()[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  return x;
}

void write_features(const std::string& path, const MatrixF& features) { dump(path, serialize_features(features)); }

MatrixF read_features(const std::string& path) {
  try {
    return deserialize_features(slurp(path, true));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string manifest_jsonl(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.trials) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["phonemes"] = r.phonemes;
    j["feature_file"] = r.feature_file;
    j["frames"] = r.frames;
    out += j.dump() + "\n";
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view jsonl, std::string split) {
  DatasetManifest m;
  m.split = std::move(split);
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int line_no = 0;
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TrialRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.phonemes = j.at("phonemes").get<std::string>();
      r.feature_file = j.at("feature_file").get<std::string>();
      r.frames = j.at("frames").get<int>();
      ids.push_back(r.id);
      m.trials.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ParseError("manifest: duplicate trial id");
  return m;
}

DatasetManifest read_manifest(const std::string& dataset_dir, const std::string& split) {
  const std::string path = (fs::path(dataset_dir) / (split + ".jsonl")).string();
  try {
    return parse_manifest(slurp(path, false), split);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<Trial> load_split(const std::string& dataset_dir, const std::string& split) {
  const DatasetManifest m = read_manifest(dataset_dir, split);
  std::vector<Trial> out;
  out.reserve(m.trials.size());
  for (const auto& r : m.trials) {
    Trial t;
    t.id = r.id;
    t.text = r.text;
    t.phonemes = parse_phoneme_string(r.phonemes);
    t.features = read_features((fs::path(dataset_dir) / r.feature_file).string());
    if (t.features.rows() != r.frames) throw ParseError("trial " + r.id + ": frame count differs from the manifest");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<DatasetManifest> gen_dataset(std::span<const std::string> sentences, const Lexicon& lexicon,
                                         const SynthConfig& cfg, const SplitFractions& fractions,
                                         const std::string& out_dir) {
  cfg.validate();
  if (sentences.empty()) throw InvalidArgument("gen_dataset: no sentences");
  const auto sizes = split_sizes(sentences.size(), fractions);
  // Fail on OOV words before touching the disk.
  for (const auto& s : sentences) sentence_to_phonemes(s, lexicon);

  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  auto shuffle_rng = derived_rng(cfg.seed, 0, 0x73706c74u);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

  const Prototypes protos = gen_prototypes(cfg);
  const int width = std::max<int>(5, static_cast<int>(std::to_string(sentences.size() - 1).size()));
  static constexpr const char* kSplits[3] = {"train", "val", "test"};
  std::vector<DatasetManifest> manifests;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  std::size_t cursor = 0;
  for (int s = 0; s < 3; ++s) {
    DatasetManifest m;
    m.split = kSplits[s];
    std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                     order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[s]));
    cursor += sizes[s];
    std::sort(members.begin(), members.end());
    const fs::path dir = fs::path(out_dir) / m.split;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t idx : members) {
      std::string num = std::to_string(idx);
      std::string id = "t" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(width, num.size()), '0') + num;
      auto rng = trial_rng(cfg, idx);
      Trial t = gen_trial(id, sentences[idx], lexicon, protos, cfg, rng);
      const std::string rel = m.split + "/" + id + ".b2td";
      write_features((fs::path(out_dir) / rel).string(), t.features);
      m.trials.push_back({t.id, t.text, to_string(t.phonemes), rel, static_cast<int>(t.features.rows())});
    }
    dump((fs::path(out_dir) / (m.split + ".jsonl")).string(), manifest_jsonl(m));
    manifests.push_back(std::move(m));
  }

  nlohmann::ordered_json sidecar;
  sidecar["synth"] = synth_config_to_json(cfg);
  sidecar["splits"] = {{"train", sizes[0]}, {"val", sizes[1]}, {"test", sizes[2]}};
  sidecar["num_sentences"] = sentences.size();
  dump((fs::path(out_dir) / "config.json").string(), sidecar.dump(2) + "\n");
  return manifests;
}

}  // namespace dcond
