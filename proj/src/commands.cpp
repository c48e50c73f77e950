#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dcond/cli.hpp"
#include "dcond/config.hpp"
#include "dcond/ctc.hpp"
#include "dcond/decoder.hpp"
#include "dcond/ensemble.hpp"
#include "dcond/error.hpp"
#include "dcond/lm.hpp"
#include "dcond/metrics.hpp"
#include "dcond/synthdata.hpp"
#include "dcond/version.hpp"
#include "json.hpp"

namespace dcond {
namespace {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view text) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create " + p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(slurp(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

/// JSONL records, skipping the metadata header line.
std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> out;
  int line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("_meta")) continue;
    out.push_back(std::move(j));
  }
  return out;
}

OJson meta(const std::string& command, std::optional<std::uint64_t> seed, const OJson& config) {
  OJson m;
  m["tool"] = "dcond";
  m["version"] = kVersionString;
  m["command"] = command;
  m["seed"] = seed ? OJson(*seed) : OJson(nullptr);
  m["config"] = config;
  return m;
}

std::string meta_line(const OJson& m) { return OJson{{"_meta", m}}.dump() + "\n"; }

RunConfig config_from(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

std::vector<Example> make_examples(const std::vector<Trial>& trials, const PatchConfig& patch, int* dropped) {
  std::vector<Example> out;
  for (const auto& t : trials) {
    if (t.features.rows() < patch.window) {
      if (dropped) ++*dropped;
      continue;
    }
    out.push_back({t.id, patch_features(t.features, patch), t.phonemes});
  }
  return out;
}

OJson phoneme_json(std::span<const Phoneme> seq) { return to_string(seq); }

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config, out, sentences, lexicon;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  RunConfig cfg = config_from(a.config);
  if (a.seed) cfg.synth.seed = *a.seed;
  const std::string sentences_path = a.sentences.empty() ? cfg.paths.sentences : a.sentences;
  const std::string lexicon_path = a.lexicon.empty() ? cfg.paths.lexicon : a.lexicon;
  const Lexicon lexicon = load_lexicon(lexicon_path);
  const auto sentences = read_lines(sentences_path);
  const auto manifests = gen_dataset(sentences, lexicon, cfg.synth, cfg.splits, a.out);
  OJson report;
  report["_meta"] = meta("gen-data", cfg.synth.seed, run_config_to_json(cfg));
  for (const auto& m : manifests) report["splits"][m.split] = m.trials.size();
  write_file((fs::path(a.out) / "run.json").string(), report.dump(2) + "\n");
  out << "wrote " << sentences.size() << " trials to " << a.out << "\n";
  return kExitOk;
}

struct LmTrainArgs {
  std::string corpus, out;
  int order = 5;
  double backoff = 0.4;
};

int cmd_lm_train(const LmTrainArgs& a, std::ostream& out) {
  const auto lines = read_lines(a.corpus);
  const NGramModel lm = train_ngram(lines, a.order, a.backoff);
  save_ngram(lm, a.out);
  out << "trained order-" << a.order << " model with " << lm.num_ngrams() << " n-grams on " << lines.size()
      << " sentences\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, scheme = "diphone", out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = config_from(a.config);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  const SchemeSpec spec = parse_scheme(a.scheme);
  const std::uint64_t seed = a.seed.value_or(cfg.seeds.front());
  cfg.train.seed = seed;
  cfg.validate();

  const auto train_trials = load_split(a.data, "train");
  const auto val_trials = load_split(a.data, "val");
  if (train_trials.empty()) throw InvalidArgument("training split is empty");
  std::vector<PhonemeSeq> corpus;
  for (const auto& t : train_trials) corpus.push_back(t.phonemes);
  SubclassTable table = build_subclass_table(spec, corpus);

  int dropped = 0;
  const auto train_set = make_examples(train_trials, cfg.patch, &dropped);
  const auto val_set = make_examples(val_trials, cfg.patch, &dropped);
  ModelConfig mc = cfg.model;
  mc.patch = cfg.patch;
  mc.input_dim = static_cast<int>(train_trials.front().features.cols()) * cfg.patch.window;
  mc.num_subclasses = table.num_subclasses();
  DecoderModel model(mc, table, seed);

  auto log = [&](const EpochStats& s) {
    if (!a.quiet) {
      err << "epoch " << s.epoch << " alpha " << s.alpha << " loss " << s.loss << " val_per " << s.val_per << "\n";
    }
  };
  auto result = train<float>(std::move(model), train_set, val_set, cfg.train, log);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  save_checkpoint(result.model, (fs::path(a.out) / "model.dcnd").string());
  write_file((fs::path(a.out) / "history.csv").string(), history_csv(result.history));
  OJson report;
  report["_meta"] = meta("train", seed, run_config_to_json(cfg));
  report["scheme"] = table.name();
  report["num_subclasses"] = table.num_subclasses();
  report["best_epoch"] = result.best_epoch;
  report["best_val_per"] = result.history.at(result.best_epoch).val_per;
  report["skipped_unalignable"] = result.skipped;
  report["dropped_short"] = dropped;
  write_file((fs::path(a.out) / "train.json").string(), report.dump(2) + "\n");
  out << "best epoch " << result.best_epoch << " val PER " << result.history.at(result.best_epoch).val_per << "\n";
  return kExitOk;
}

struct DecodeArgs {
  std::string config, model, data, split = "test", lm, lexicon, out;
  std::optional<int> nbest, beam;
  std::optional<double> temperature, lm_weight;
};

int cmd_decode(const DecodeArgs& a, std::ostream& out) {
  RunConfig cfg = config_from(a.config);
  if (a.nbest) cfg.decode.nbest_size = *a.nbest;
  if (a.beam) cfg.decode.beam_width = *a.beam;
  if (a.temperature) cfg.decode.temperature = *a.temperature;
  if (a.lm_weight) cfg.decode.lm_weight = *a.lm_weight;
  cfg.validate();
  const DecoderModel model = load_checkpoint(a.model);
  const NGramModel lm = load_ngram(a.lm);
  const Lexicon lexicon = load_lexicon(a.lexicon.empty() ? cfg.paths.lexicon : a.lexicon);
  const auto trials = load_split(a.data, a.split);

  OJson m = meta("decode", std::nullopt, run_config_to_json(cfg));
  m["model"] = a.model;
  m["split"] = a.split;
  std::string body = meta_line(m);
  for (const auto& t : trials) {
    OJson row;
    row["id"] = t.id;
    row["text"] = t.text;
    row["ref_phonemes"] = phoneme_json(t.phonemes);
    if (t.features.rows() < model.config().patch.window) {
      row["error"] = "trial shorter than the patch window";
      body += row.dump() + "\n";
      continue;
    }
    const auto patched = patch_features(t.features, model.config().patch);
    const Posteriorgram sub = forward(model, patched);
    const Posteriorgram post = marginalize(sub, model.table());
    row["greedy_phonemes"] = phoneme_json(strip_boundary_sil(subclass_best_path(sub, model.table())));
    const auto nbest = lexicon_beam_decode(post, lexicon, lm, cfg.decode);
    const CandidateSet cands = CandidateSet::from_nbest(nbest, static_cast<std::size_t>(cfg.decode.nbest_size));
    row["candidates"] = OJson::array();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto& src = nbest[std::min(i, nbest.size() - 1)];
      row["candidates"].push_back({{"transcription", cands.transcriptions[i]},
                                   {"phonemes", phoneme_json(cands.phonemes[i])},
                                   {"acoustic", src.acoustic_score},
                                   {"lm", src.lm_score},
                                   {"total", src.total}});
    }
    body += row.dump() + "\n";
  }
  write_file(a.out, body);
  out << "decoded " << trials.size() << " trials to " << a.out << "\n";
  return kExitOk;
}

/// Hypothesis text and phonemes of one output row (decode or correct format).
struct Hypothesis {
  std::string text;
  PhonemeSeq phonemes;
};

Hypothesis hypothesis_of(const nlohmann::json& row, const std::string& source) {
  Hypothesis h;
  if (source == "greedy") {
    h.phonemes = parse_phoneme_string(row.value("greedy_phonemes", ""));
    return h;
  }
  if (row.contains("transcription")) {
    h.text = row.at("transcription").get<std::string>();
    if (row.contains("phonemes") && row.at("phonemes").is_string()) {
      h.phonemes = parse_phoneme_string(row.at("phonemes").get<std::string>());
    }
    return h;
  }
  if (row.contains("candidates") && !row.at("candidates").empty()) {
    const auto& c = row.at("candidates").at(0);
    h.text = c.at("transcription").get<std::string>();
    h.phonemes = parse_phoneme_string(c.at("phonemes").get<std::string>());
  }
  return h;
}

struct EvalArgs {
  std::string config, hyp, ref, metric = "per", source = "top1", out;
  std::vector<std::uint64_t> seeds;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = config_from(a.config);
  if (a.metric != "per" && a.metric != "wer") throw InvalidArgument("--metric must be per or wer");
  if (a.source != "top1" && a.source != "greedy") throw InvalidArgument("--source must be top1 or greedy");
  const bool templated = a.hyp.find("{seed}") != std::string::npos;
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) seeds = templated ? cfg.seeds : std::vector<std::uint64_t>{cfg.seeds.front()};

  std::map<std::string, std::pair<std::string, PhonemeSeq>> refs;
  for (const auto& r : read_jsonl(a.ref)) {
    const std::string phon = r.contains("phonemes") ? r.at("phonemes").get<std::string>()
                                                     : r.at("ref_phonemes").get<std::string>();
    refs[r.at("id").get<std::string>()] = {r.at("text").get<std::string>(), parse_phoneme_string(phon)};
  }

  OJson report;
  report["_meta"] = meta("eval", std::nullopt, run_config_to_json(cfg));
  report["metric"] = a.metric;
  report["source"] = a.source;
  report["per_seed"] = OJson::array();
  std::vector<double> rates;
  for (std::uint64_t seed : seeds) {
    std::string path = a.hyp;
    if (templated) path.replace(path.find("{seed}"), 6, std::to_string(seed));
    WordIndexer words;
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
    for (const auto& row : read_jsonl(path)) {
      const std::string id = row.at("id").get<std::string>();
      auto it = refs.find(id);
      if (it == refs.end()) throw InvalidArgument("hypothesis " + id + " has no reference in " + a.ref);
      const Hypothesis h = hypothesis_of(row, a.source);
      if (a.metric == "per") {
        pairs.emplace_back(phoneme_labels(it->second.second), phoneme_labels(h.phonemes));
      } else {
        auto ref_ids = words.encode(it->second.first);
        pairs.emplace_back(std::move(ref_ids), words.encode(h.text));
      }
    }
    const ErrorRate r = corpus_rate(pairs);
    rates.push_back(r.rate());
    report["per_seed"].push_back(
        {{"seed", seed}, {"file", path}, {"rate", r.rate()}, {"edits", r.edits}, {"ref_tokens", r.ref_tokens}});
  }
  const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
  double var = 0.0;
  for (double r : rates) var += (r - mean) * (r - mean);
  const double stddev = rates.size() > 1 ? std::sqrt(var / static_cast<double>(rates.size() - 1)) : 0.0;
  report["mean"] = mean;
  report["stddev"] = stddev;
  report["n"] = rates.size();
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_file(a.out, text);
  }
  return kExitOk;
}

CandidateSet candidates_of(const nlohmann::json& row) {
  CandidateSet c;
  for (const auto& cand : row.at("candidates")) {
    c.transcriptions.push_back(cand.at("transcription").get<std::string>());
    c.phonemes.push_back(parse_phoneme_string(cand.at("phonemes").get<std::string>()));
  }
  return c;
}

struct CorrectArgs {
  std::string config, candidates, mode = "icl", exemplars, mock, out;
  bool service = false;
  int num_exemplars = 25;
  std::uint64_t seed = 0;
};

int cmd_correct(const CorrectArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = config_from(a.config);
  if (a.mode != "icl" && a.mode != "finetune" && a.mode != "records") {
    throw InvalidArgument("--mode must be icl, finetune or records");
  }
  const auto rows = read_jsonl(a.candidates);
  OJson m = meta("correct", a.seed, run_config_to_json(cfg));
  m["mode"] = a.mode;

  if (a.mode == "records") {
    std::string body;
    for (const auto& row : rows) {
      if (!row.contains("candidates")) continue;
      const auto rec = build_finetune_record(candidates_of(row), row.at("text").get<std::string>(),
                                             parse_phoneme_string(row.at("ref_phonemes").get<std::string>()));
      body += rec.to_jsonl() + "\n";
    }
    write_file(a.out, body);
    write_file(a.out + ".meta.json", OJson{{"_meta", m}}.dump(2) + "\n");
    out << "wrote finetune records to " << a.out << "\n";
    return kExitOk;
  }

  if (a.service == !a.mock.empty()) throw InvalidArgument("choose exactly one of --service or --mock");
  std::unique_ptr<ChatClient> client;
  if (a.service) {
    client = std::make_unique<HttpChatClient>(cfg.service);
  } else {
    static const std::map<std::string, MockChatClient::Mode> modes{{"majority", MockChatClient::Mode::Majority},
                                                                   {"echo", MockChatClient::Mode::Echo},
                                                                   {"timeout", MockChatClient::Mode::Timeout},
                                                                   {"malformed", MockChatClient::Mode::Malformed}};
    auto it = modes.find(a.mock);
    if (it == modes.end()) throw InvalidArgument("--mock must be majority, echo, timeout or malformed");
    client = std::make_unique<MockChatClient>(it->second);
  }
  m["client"] = a.service ? "service" : "mock:" + a.mock;

  std::vector<IclExemplar> exemplars;
  if (a.mode == "icl" && !a.exemplars.empty()) {
    auto pool = read_jsonl(a.exemplars);
    std::mt19937_64 rng(a.seed);
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng() % i]);
    for (const auto& row : pool) {
      if (exemplars.size() >= static_cast<std::size_t>(a.num_exemplars)) break;
      if (!row.contains("candidates")) continue;
      exemplars.push_back({candidates_of(row), row.at("text").get<std::string>(),
                           parse_phoneme_string(row.at("ref_phonemes").get<std::string>())});
    }
  }
  CorrectOptions opts;
  opts.mode = a.mode == "icl" ? PromptMode::Icl : PromptMode::Finetune;
  opts.model = cfg.service.model;
  opts.temperature = cfg.service.temperature;

  std::string body = meta_line(m);
  for (const auto& row : rows) {
    CandidateSet cands = row.contains("candidates") ? candidates_of(row) : CandidateSet{};
    const CorrectionResult r = correct(cands, *client, exemplars, opts);
    if (!r.failure.empty()) err << row.at("id").get<std::string>() << ": " << r.failure << "\n";
    OJson o;
    o["id"] = row.at("id");
    o["transcription"] = r.transcription;
    o["phonemes"] = r.phonemes ? OJson(to_string(*r.phonemes)) : OJson(nullptr);
    o["source"] = to_string(r.source);
    body += o.dump() + "\n";
  }
  write_file(a.out, body);
  out << "corrected " << rows.size() << " trials to " << a.out << "\n";
  return kExitOk;
}

struct ModelDataArgs {
  std::string model, data, split = "test", out;
};

int cmd_align(const ModelDataArgs& a, std::ostream& out) {
  const DecoderModel model = load_checkpoint(a.model);
  const auto trials = load_split(a.data, a.split);
  OJson m = meta("align", std::nullopt, OJson::object());
  m["model"] = a.model;
  m["split"] = a.split;
  std::string body = meta_line(m);
  for (const auto& t : trials) {
    OJson row;
    row["id"] = t.id;
    row["phonemes"] = phoneme_json(t.phonemes);
    try {
      if (t.features.rows() < model.config().patch.window) throw InvalidArgument("trial shorter than the patch window");
      const auto post = marginalize(forward(model, patch_features(t.features, model.config().patch)), model.table());
      const DtwAlignment al = dtw_align(post, t.phonemes);
      row["intervals"] = OJson::array();
      for (const auto& iv : al.intervals) row["intervals"].push_back({iv.begin, iv.end});
      row["cost"] = al.cost;
    } catch (const InvalidArgument& e) {
      row["error"] = e.what();
    }
    body += row.dump() + "\n";
  }
  write_file(a.out, body);
  out << "aligned " << trials.size() << " trials to " << a.out << "\n";
  return kExitOk;
}

int cmd_export_latents(const ModelDataArgs& a, std::ostream& out) {
  const DecoderModel model = load_checkpoint(a.model);
  const auto trials = load_split(a.data, a.split);
  OJson m = meta("export-latents", std::nullopt, OJson::object());
  m["model"] = a.model;
  m["split"] = a.split;
  std::string index = meta_line(m);
  for (const auto& t : trials) {
    if (t.features.rows() < model.config().patch.window) continue;
    const auto patched = patch_features(t.features, model.config().patch);
    const MatrixF latents = extract_latents(model, patched);
    const auto post = marginalize(forward(model, patched), model.table());
    PhonemeSeq greedy;
    for (int l : best_path_decode(post)) greedy.push_back(Phoneme(l));
    const std::string file = t.id + ".b2td";
    write_file((fs::path(a.out) / file).string(), serialize_features(latents));
    OJson row;
    row["id"] = t.id;
    row["file"] = file;
    row["frames"] = latents.rows();
    row["dim"] = latents.cols();
    row["phonemes"] = phoneme_json(t.phonemes);
    row["greedy_phonemes"] = phoneme_json(greedy);
    row["timestamps"] = timestamps_of_best_path(post);
    index += row.dump() + "\n";
  }
  write_file((fs::path(a.out) / "index.jsonl").string(), index);
  out << "exported latents for " << trials.size() << " trials to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diphone-marginalized CTC decoding toolkit", "dcond"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);
  std::function<int()> action;

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic coarticulated dataset");
  g->add_option("--config", gen.config, "Run config JSON");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--sentences", gen.sentences, "Sentence list, one per line");
  g->add_option("--lexicon", gen.lexicon, "Pronunciation lexicon");
  g->add_option("--seed", gen.seed, "Generator seed (overrides the config)");
  g->callback([&] { action = [&] { return cmd_gen_data(gen, out); }; });

  LmTrainArgs lmt;
  auto* l = app.add_subcommand("lm-train", "Train a word n-gram model");
  l->add_option("--corpus", lmt.corpus, "Text corpus, one sentence per line")->required();
  l->add_option("--order", lmt.order, "Model order")->check(CLI::PositiveNumber);
  l->add_option("--backoff", lmt.backoff, "Backoff factor");
  l->add_option("--out", lmt.out, "Output model file")->required();
  l->callback([&] { action = [&] { return cmd_lm_train(lmt, out); }; });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a decoder");
  t->add_option("--config", tr.config, "Run config JSON");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--scheme", tr.scheme, "mono | diphone | triphone-topk:K | triphone-grouped");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--seed", tr.seed, "Training seed (defaults to the first config seed)");
  t->add_option("--epochs", tr.epochs, "Override the configured epoch count");
  t->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");
  t->callback([&] { action = [&] { return cmd_train(tr, out, err); }; });

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "Beam-decode a split into N-best candidate sets");
  d->add_option("--config", dec.config, "Run config JSON");
  d->add_option("--model", dec.model, "Checkpoint")->required();
  d->add_option("--data", dec.data, "Dataset directory")->required();
  d->add_option("--split", dec.split, "Split name");
  d->add_option("--lm", dec.lm, "n-gram model file")->required();
  d->add_option("--lexicon", dec.lexicon, "Pronunciation lexicon");
  d->add_option("--nbest", dec.nbest, "Candidates per trial");
  d->add_option("--beam", dec.beam, "Beam width");
  d->add_option("--temperature", dec.temperature, "Posterior temperature");
  d->add_option("--lm-weight", dec.lm_weight, "Language model weight");
  d->add_option("--out", dec.out, "Output JSONL")->required();
  d->callback([&] { action = [&] { return cmd_decode(dec, out); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score hypotheses against references across seeds");
  e->add_option("--config", ev.config, "Run config JSON");
  e->add_option("--hyp", ev.hyp, "Hypothesis JSONL; '{seed}' is replaced per seed")->required();
  e->add_option("--ref", ev.ref, "Reference manifest JSONL")->required();
  e->add_option("--metric", ev.metric, "per | wer");
  e->add_option("--source", ev.source, "top1 | greedy");
  e->add_option("--seeds", ev.seeds, "Seeds to aggregate");
  e->add_option("--out", ev.out, "Report path (stdout when omitted)");
  e->callback([&] { action = [&] { return cmd_eval(ev, out); }; });

  CorrectArgs co;
  auto* c = app.add_subcommand("correct", "Ensemble correction or finetune-record export");
  c->add_option("--config", co.config, "Run config JSON (service section)");
  c->add_option("--candidates", co.candidates, "Decode output JSONL")->required();
  c->add_option("--mode", co.mode, "icl | finetune | records");
  c->add_option("--exemplars", co.exemplars, "Decode output JSONL used as the ICL exemplar pool");
  c->add_option("--num-exemplars", co.num_exemplars, "ICL exemplars drawn from the pool");
  c->add_flag("--service", co.service, "Use the HTTP service from the config");
  c->add_option("--mock", co.mock, "Mock client: majority | echo | timeout | malformed");
  c->add_option("--seed", co.seed, "Exemplar selection seed");
  c->add_option("--out", co.out, "Output JSONL")->required();
  c->callback([&] { action = [&] { return cmd_correct(co, out, err); }; });

  ModelDataArgs al;
  auto* a = app.add_subcommand("align", "DTW phoneme segmentation of each trial");
  a->add_option("--model", al.model, "Checkpoint")->required();
  a->add_option("--data", al.data, "Dataset directory")->required();
  a->add_option("--split", al.split, "Split name");
  a->add_option("--out", al.out, "Output JSONL")->required();
  a->callback([&] { action = [&] { return cmd_align(al, out); }; });

  ModelDataArgs ex;
  auto* x = app.add_subcommand("export-latents", "Write final-layer hidden states per trial");
  x->add_option("--model", ex.model, "Checkpoint")->required();
  x->add_option("--data", ex.data, "Dataset directory")->required();
  x->add_option("--split", ex.split, "Split name");
  x->add_option("--out", ex.out, "Output directory")->required();
  x->callback([&] { action = [&] { return cmd_export_latents(ex, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    return action();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const OutOfVocabulary& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input record: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace dcond
