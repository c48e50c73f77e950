#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "dcond/error.hpp"
#include "dcond/synthdata.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dcond;
using dcond::test::seq;
namespace fs = std::filesystem;

namespace {

const Lexicon& toy_lexicon() {
  static const Lexicon lex = parse_lexicon("A AH\nTHE DH AH\nCAT K AE T\nSAT S AE T\n");
  return lex;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dcond_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

// First frame of token k given the per-token durations.
int onset(const Trial& t, std::size_t k) { return std::accumulate(t.durations.begin(), t.durations.begin() + k, 0); }

}  // namespace

TEST_CASE("prototypes") {
  SynthConfig cfg;
  cfg.seed = 5;
  const Prototypes a = gen_prototypes(cfg), b = gen_prototypes(cfg);
  CHECK(a.base == b.base);
  CHECK(a.context == b.context);
  CHECK(a.base.rows() == 40);
  CHECK(a.context.rows() == 1600);
  CHECK(a.base.cols() == 64);
  cfg.seed = 6;
  CHECK(gen_prototypes(cfg).base != a.base);
  cfg.channels = 1;
  CHECK(gen_prototypes(cfg).base.cols() == 1);
  // Prototypes do not depend on the emission scale.
  SynthConfig g0 = cfg, g2 = cfg;
  g0.coarticulation = 0.0;
  g2.coarticulation = 2.0;
  CHECK(gen_prototypes(g0).context == gen_prototypes(g2).context);
}

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  c.channels = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.mean_duration = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.noise_sigma = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.coarticulation = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("emission formula") {
  SynthConfig cfg;
  cfg.channels = 8;
  cfg.noise_sigma = 0.0;
  SUBCASE("no context and no noise gives the base prototype") {
    cfg.coarticulation = 0.0;
    const Prototypes p = gen_prototypes(cfg);
    auto rng = trial_rng(cfg, 0);
    const Trial t = gen_trial("x", "the cat", toy_lexicon(), p, cfg, rng);
    CHECK(t.phonemes == seq("DH AH SIL K AE T"));
    for (std::size_t k = 0; k < t.phonemes.size(); ++k)
      for (int f = onset(t, k); f < onset(t, k) + t.durations[k]; ++f)
        CHECK((t.features.row(f).cast<double>() - p.base.row(t.phonemes[k].index())).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("context shifts frames by the difference of context vectors") {
    cfg.coarticulation = 1.0;
    const Prototypes p = gen_prototypes(cfg);
    auto r1 = trial_rng(cfg, 1), r2 = trial_rng(cfg, 2);
    const Trial after_dh = gen_trial("x", "the", toy_lexicon(), p, cfg, r1);
    const Trial after_sil = gen_trial("y", "a", toy_lexicon(), p, cfg, r2);
    const Phoneme ah = Phoneme::from_symbol("AH"), dh = Phoneme::from_symbol("DH");
    const Eigen::RowVectorXd diff =
        after_dh.features.row(onset(after_dh, 1)).cast<double>() - after_sil.features.row(0).cast<double>();
    const Eigen::RowVectorXd want = p.context.row(diphone_index(dh, ah)) - p.context.row(diphone_index(Phoneme::sil(), ah));
    CHECK((diff - want).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("trial invariants") {
  SynthConfig cfg;
  const Prototypes p = gen_prototypes(cfg);
  for (std::uint64_t i = 0; i < 50; ++i) {
    auto rng = trial_rng(cfg, i);
    const Trial t = gen_trial("t", "the cat sat a cat", toy_lexicon(), p, cfg, rng);
    REQUIRE(t.durations.size() == t.phonemes.size());
    CHECK(std::accumulate(t.durations.begin(), t.durations.end(), 0) == t.features.rows());
    for (int d : t.durations) CHECK(d >= cfg.min_duration);
    CHECK(t.features.allFinite());
    CHECK(t.features.cols() == cfg.channels);
  }
  auto a = trial_rng(cfg, 3), b = trial_rng(cfg, 3);
  CHECK(gen_trial("t", "the cat", toy_lexicon(), p, cfg, a).features ==
        gen_trial("t", "the cat", toy_lexicon(), p, cfg, b).features);
  auto c = trial_rng(cfg, 3);
  CHECK_THROWS_AS(gen_trial("t", "the dog", toy_lexicon(), p, cfg, c), OutOfVocabulary);
}

TEST_CASE("context clusters are tighter than phoneme clusters") {
  SynthConfig cfg;
  cfg.channels = 16;
  cfg.noise_sigma = 0.2;
  cfg.coarticulation = 1.0;
  const Prototypes p = gen_prototypes(cfg);
  // Frames of AE grouped by predecessor (K or S).
  std::map<int, std::vector<Eigen::RowVectorXd>> by_context;
  for (std::uint64_t i = 0; i < 40; ++i) {
    auto rng = trial_rng(cfg, i);
    const Trial t = gen_trial("t", i % 2 ? "cat" : "sat", toy_lexicon(), p, cfg, rng);
    for (int f = onset(t, 1); f < onset(t, 1) + t.durations[1]; ++f)
      by_context[t.phonemes[0].index()].push_back(t.features.row(f).cast<double>());
  }
  auto mean_distance = [](const std::vector<Eigen::RowVectorXd>& a, const std::vector<Eigen::RowVectorXd>& b, bool same) {
    double s = 0.0;
    long n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = same ? i + 1 : 0; j < b.size(); ++j, ++n) s += (a[i] - b[j]).norm();
    return s / static_cast<double>(n);
  };
  std::vector<Eigen::RowVectorXd> pooled;
  double intra = 0.0;
  for (const auto& [ctx, frames] : by_context) {
    intra += mean_distance(frames, frames, true) / static_cast<double>(by_context.size());
    pooled.insert(pooled.end(), frames.begin(), frames.end());
  }
  REQUIRE(by_context.size() == 2);
  CHECK(intra < mean_distance(pooled, pooled, true));
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(100, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{80, 10, 10});
  CHECK(split_sizes(2400, {}) == std::array<std::size_t, 3>{2000, 200, 200});
  const auto s = split_sizes(7, {0.5, 0.25, 0.25});
  CHECK(s[0] + s[1] + s[2] == 7);
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.5}), InvalidArgument);
}

TEST_CASE("feature file format") {
  MatrixF m(2, 3);
  m << 1.5f, -2.0f, 0.0f, 3.25f, 1e-8f, -7.0f;
  const std::string bytes = serialize_features(m);
  REQUIRE(bytes.size() == 16 + 4 * 6);
  CHECK(bytes.substr(0, 4) == "B2TD");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5]) == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);
  // 1.5f little-endian is 00 00 C0 3F.
  CHECK(static_cast<unsigned char>(bytes[18]) == 0xC0);
  CHECK(static_cast<unsigned char>(bytes[19]) == 0x3F);
  CHECK(deserialize_features(bytes) == m);
  CHECK_THROWS_AS(deserialize_features(bytes.substr(0, 20)), ParseError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_features(bad), ParseError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(deserialize_features(bad), ParseError);
  CHECK_THROWS_AS(read_features("/nonexistent/dir/file.b2td"), IoError);
}

TEST_CASE("dataset generation") {
  std::vector<std::string> sentences;
  for (int i = 0; i < 20; ++i) sentences.push_back(i % 3 ? "the cat sat" : "a cat");
  SynthConfig cfg;
  cfg.channels = 4;
  cfg.seed = 9;
  const fs::path dir = scratch("ds"), again = scratch("ds2");
  const auto manifests = gen_dataset(sentences, toy_lexicon(), cfg, {0.8, 0.1, 0.1}, dir.string());
  REQUIRE(manifests.size() == 3);
  CHECK(manifests[0].trials.size() == 16);
  CHECK(manifests[1].trials.size() == 2);
  CHECK(manifests[2].trials.size() == 2);
  std::set<std::string> ids;
  for (const auto& m : manifests)
    for (const auto& t : m.trials) {
      ids.insert(t.id);
      CHECK(fs::exists(dir / t.feature_file));
    }
  CHECK(ids.size() == 20);
  CHECK(fs::exists(dir / "config.json"));

  // Files on disk round-trip to the in-memory generator.
  const auto train = load_split(dir.string(), "train");
  REQUIRE(train.size() == 16);
  const Prototypes protos = gen_prototypes(cfg);
  for (const auto& t : train) {
    const std::size_t idx = std::stoul(t.id.substr(1));
    auto rng = trial_rng(cfg, idx);
    const Trial regen = gen_trial(t.id, sentences[idx], toy_lexicon(), protos, cfg, rng);
    CHECK(regen.features == t.features);
    CHECK(regen.phonemes == t.phonemes);
  }
  const auto back = parse_manifest(manifest_jsonl(manifests[1]), "val");
  REQUIRE(back.trials.size() == 2);
  CHECK(back.trials[0].id == manifests[1].trials[0].id);
  CHECK(back.trials[0].frames == manifests[1].trials[0].frames);

  // Regenerating yields identical bytes.
  gen_dataset(sentences, toy_lexicon(), cfg, {0.8, 0.1, 0.1}, again.string());
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    CHECK(slurp(entry.path()) == slurp(again / fs::relative(entry.path(), dir)));
  }
  CHECK_THROWS_AS(gen_dataset(std::vector<std::string>{"the dog"}, toy_lexicon(), cfg, {}, scratch("oov").string()),
                  OutOfVocabulary);
  CHECK(!fs::exists(scratch("oov")));
  CHECK_THROWS_AS(parse_manifest("{\"id\": 1}\n", "x"), ParseError);
  fs::remove_all(dir);
  fs::remove_all(again);
}
