#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dcond/cli.hpp"
#include "dcond/ctc.hpp"
#include "dcond/decoder.hpp"
#include "dcond/ensemble.hpp"
#include "dcond/error.hpp"
#include "dcond/lm.hpp"
#include "dcond/metrics.hpp"
#include "dcond/phonemes.hpp"
#include "dcond/subclass.hpp"
#include "dcond/version.hpp"

namespace py = pybind11;
using namespace dcond;

namespace {

PhonemeSeq to_seq(const std::vector<std::string>& symbols) {
  PhonemeSeq out;
  out.reserve(symbols.size());
  for (const auto& s : symbols) out.push_back(Phoneme::from_symbol(s));
  return out;
}

std::vector<std::string> to_symbols(std::span<const Phoneme> seq) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (auto p : seq) out.emplace_back(p.symbol());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diphone-marginalized CTC decoding toolkit";
  m.attr("__version__") = std::string(kVersionString);

  // Translators run newest first, so the base class is registered before its subclasses.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<Unalignable>(m, "Unalignable", PyExc_ValueError);
  py::register_exception<OutOfVocabulary>(m, "OutOfVocabulary", PyExc_KeyError);

  std::vector<std::string> inventory(kPhonemeSymbols.begin(), kPhonemeSymbols.end());
  m.attr("PHONEMES") = inventory;

  m.def("parse_phonemes", [](const std::string& text) { return to_symbols(parse_phoneme_string(text)); },
        "Split a space-separated phoneme string into symbols; a trailing '.' is ignored.");
  m.def(
      "expand_diphones",
      [](const std::vector<std::string>& symbols) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& d : expand_diphones(to_seq(symbols))) out.emplace_back(d.prev.symbol(), d.cur.symbol());
        return out;
      },
      py::arg("phonemes"));
  m.def(
      "collapse_diphones",
      [](const std::vector<std::pair<std::string, std::string>>& pairs) {
        DiphoneSeq d;
        for (const auto& [a, b] : pairs) d.push_back({Phoneme::from_symbol(a), Phoneme::from_symbol(b)});
        return to_symbols(collapse_diphones(d));
      },
      py::arg("diphones"));
  m.def(
      "diphone_index",
      [](const std::string& prev, const std::string& cur) {
        return diphone_index(Phoneme::from_symbol(prev), Phoneme::from_symbol(cur));
      },
      py::arg("prev"), py::arg("cur"));

  m.def(
      "ctc_loss",
      [](const MatrixD& post, const LabelSeq& labels) {
        auto r = ctc_loss(post, labels);
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("log_probs"), py::arg("labels"),
      "Negative log-likelihood and its gradient with respect to the pre-softmax logits. The blank is the last column.");
  m.def("ctc_loss_bruteforce", &ctc_loss_bruteforce, py::arg("log_probs"), py::arg("labels"));
  m.def("best_path_decode", &best_path_decode, py::arg("log_probs"));

  py::class_<SubclassTable>(m, "SubclassTable")
      .def_static("monophone", &SubclassTable::monophone)
      .def_static("diphone", &SubclassTable::diphone)
      .def_static("triphone_grouped", [] { return SubclassTable::triphone_grouped(); })
      .def_property_readonly("name", &SubclassTable::name)
      .def_property_readonly("num_subclasses", &SubclassTable::num_subclasses)
      .def("main_of", &SubclassTable::main_of)
      .def("labels_for", [](const SubclassTable& t, const std::vector<std::string>& p) { return t.labels_for(to_seq(p)); })
      .def("phoneme_targets",
           [](const SubclassTable& t, const std::vector<std::string>& p) { return t.phoneme_targets(to_seq(p)); });

  m.def("marginalize", &marginalize, py::arg("log_probs"), py::arg("table"));
  m.def(
      "combined_loss",
      [](const MatrixD& post, const std::vector<std::string>& phonemes, const SubclassTable& table, double alpha) {
        const PhonemeSeq p = to_seq(phonemes);
        auto r = combined_loss(post, table.labels_for(p), table.phoneme_targets(p), table, alpha);
        return py::make_tuple(r.total, r.mono, r.subclass, r.grad);
      },
      py::arg("log_probs"), py::arg("phonemes"), py::arg("table"), py::arg("alpha"));

  py::class_<DecoderModel>(m, "DecoderModel")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_property_readonly("table", &DecoderModel::table)
      .def(
          "posteriors",
          [](const DecoderModel& model, const MatrixF& features) {
            return forward(model, patch_features(features, model.config().patch));
          },
          py::arg("features"), "Subclass log-posteriors for a T x D feature matrix.")
      .def(
          "greedy",
          [](const DecoderModel& model, const MatrixF& features) {
            return to_symbols(greedy_phonemes(model, patch_features(features, model.config().patch)));
          },
          py::arg("features"));

  m.def(
      "edit_distance", [](const std::vector<int>& ref, const std::vector<int>& hyp) { return edit_align(ref, hyp).distance(); },
      py::arg("ref"), py::arg("hyp"));
  m.def(
      "p_wer", [](double wer_p, double wer_gt) { return p_wer({wer_p, wer_gt}); }, py::arg("wer_p"), py::arg("wer_gt"));

  py::class_<NGramModel>(m, "NGramModel")
      .def_static(
          "train",
          [](const std::vector<std::string>& corpus, int order, double backoff) {
            return train_ngram(corpus, order, backoff);
          },
          py::arg("corpus"), py::arg("order") = 5, py::arg("backoff") = 0.4)
      .def_static("deserialize", [](const std::string& text) { return NGramModel::deserialize(text); })
      .def_property_readonly("order", &NGramModel::order)
      .def("prob", [](const NGramModel& lm, const std::vector<std::string>& history,
                      const std::string& word) { return lm.prob(history, word); })
      .def("score", [](const NGramModel& lm, const std::vector<std::string>& words) { return lm.score_sequence(words); })
      .def("serialize", &NGramModel::serialize);

  m.def(
      "system_prompt",
      [](const std::string& mode) {
        if (mode != "finetune" && mode != "icl") throw InvalidArgument("mode must be finetune or icl");
        return std::string(render_system_prompt(mode == "icl" ? PromptMode::Icl : PromptMode::Finetune));
      },
      py::arg("mode"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"dcond"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a dcond subcommand in-process; returns (exit_code, stdout, stderr).");
}
