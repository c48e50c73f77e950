#include "dcond/ensemble.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dcond/prompts_generated.hpp"
#include "json.hpp"

namespace dcond {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> non_empty_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    if (!line.empty()) out.push_back(line);
    pos = nl + 1;
  }
  return out;
}

std::string normalized(std::string_view sentence) {
  std::string out;
  for (const auto& w : normalize_sentence(sentence)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::size_t max_count(const CandidateSet& cands) {
  std::map<std::string, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& t : cands.transcriptions) best = std::max(best, ++counts[normalized(t)]);
  return best;
}

}  // namespace

std::string_view render_system_prompt(PromptMode mode) {
  return mode == PromptMode::Finetune ? std::string_view(detail::kFinetuneSystemPrompt)
                                      : std::string_view(detail::kIclSystemPrompt);
}

void CandidateSet::validate() const {
  if (transcriptions.size() != phonemes.size()) {
    throw InvalidArgument("candidate set: " + std::to_string(transcriptions.size()) + " transcriptions but " +
                          std::to_string(phonemes.size()) + " phoneme sequences");
  }
  if (transcriptions.empty()) throw InvalidArgument("candidate set is empty");
}

CandidateSet CandidateSet::from_nbest(std::span<const Transcription> nbest, std::size_t size) {
  if (nbest.empty()) throw InvalidArgument("from_nbest: empty N-best list");
  if (size == 0) throw InvalidArgument("from_nbest: size must be >= 1");
  CandidateSet c;
  for (std::size_t i = 0; i < size; ++i) {
    const auto& t = nbest[std::min(i, nbest.size() - 1)];
    c.transcriptions.push_back(t.text() + ".");
    c.phonemes.push_back(t.phonemes);
  }
  return c;
}

std::string render_candidates(const CandidateSet& cands) {
  cands.validate();
  std::string out;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    out += "Transcription candidate " + std::to_string(i + 1) + ": " + cands.transcriptions[i] + "\n";
  }
  for (std::size_t i = 0; i < cands.size(); ++i) {
    out += "Phoneme candidate " + std::to_string(i + 1) + ": " + render_with_boundaries(cands.phonemes[i]) + "\n";
  }
  return out;
}

std::string FinetuneRecord::to_jsonl() const {
  nlohmann::ordered_json j;
  j["system"] = system;
  j["user"] = user;
  j["assistant"] = assistant;
  return j.dump();
}

FinetuneRecord build_finetune_record(const CandidateSet& cands, std::string_view gt_transcription,
                                     std::span<const Phoneme> gt_phonemes) {
  if (trim(gt_transcription).empty() || gt_phonemes.empty()) {
    throw InvalidArgument("finetune record: empty ground truth");
  }
  FinetuneRecord r;
  r.system = std::string(render_system_prompt(PromptMode::Finetune));
  r.user = render_candidates(cands);
  r.assistant = std::string(trim(gt_transcription)) + "\n" + render_with_boundaries(gt_phonemes);
  return r;
}

IclPrompt build_icl_prompt(std::span<const IclExemplar> exemplars, const CandidateSet& query, const IclBudget& budget) {
  if (exemplars.size() > budget.max_exemplars) {
    throw InvalidArgument("ICL prompt: " + std::to_string(exemplars.size()) + " exemplars exceed the limit of " +
                          std::to_string(budget.max_exemplars) + " by " +
                          std::to_string(exemplars.size() - budget.max_exemplars));
  }
  IclPrompt p;
  p.system = std::string(render_system_prompt(PromptMode::Icl));
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto& ex = exemplars[i];
    if (trim(ex.gt_transcription).empty() || ex.gt_phonemes.empty()) {
      throw InvalidArgument("ICL exemplar " + std::to_string(i + 1) + " has an empty ground truth");
    }
    p.user += "Example " + std::to_string(i + 1) + ":\n";
    p.user += render_candidates(ex.candidates);
    p.user += "Ground truth phonemes: " + render_with_boundaries(ex.gt_phonemes) + "\n";
    p.user += "Ground truth transcription: " + std::string(trim(ex.gt_transcription)) + "\n\n";
  }
  p.user += "Query:\n" + render_candidates(query);
  const std::size_t length = p.text().size();
  if (length > budget.max_chars) {
    throw InvalidArgument("ICL prompt: " + std::to_string(length) + " characters exceed the budget of " +
                          std::to_string(budget.max_chars) + " by " + std::to_string(length - budget.max_chars));
  }
  return p;
}

ParsedResponse parse_response(std::string_view text) {
  const auto lines = non_empty_lines(text);
  if (lines.empty()) throw ParseError("empty model response");
  ParsedResponse r;
  r.transcription = std::string(lines[0]);
  if (lines.size() >= 2) {
    try {
      auto seq = strip_boundary_sil(parse_phoneme_string(lines[1]));
      if (!seq.empty()) r.phonemes = std::move(seq);
    } catch (const Error&) {
      // Not a phoneme line; keep the transcription only.
    }
  }
  return r;
}

std::size_t majority_index(const CandidateSet& cands) {
  if (cands.transcriptions.empty()) throw InvalidArgument("majority_vote: empty candidate set");
  std::vector<std::string> keys;
  keys.reserve(cands.size());
  for (const auto& t : cands.transcriptions) keys.push_back(normalized(t));
  std::size_t best = 0;
  long best_count = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const long c = std::count(keys.begin(), keys.end(), keys[i]);
    if (c > best_count) {
      best = i;
      best_count = c;
    }
  }
  return best;
}

std::string majority_vote(const CandidateSet& cands) { return cands.transcriptions[majority_index(cands)]; }

CandidateSet parse_candidates(std::string_view prompt) {
  auto q = prompt.rfind("Query:");
  if (q != std::string_view::npos) prompt = prompt.substr(q);
  std::map<int, std::string> texts;
  std::map<int, PhonemeSeq> phons;
  for (auto line : non_empty_lines(prompt)) {
    for (auto [tag, is_text] : {std::pair{std::string_view("Transcription candidate "), true},
                                std::pair{std::string_view("Phoneme candidate "), false}}) {
      if (!line.starts_with(tag)) continue;
      auto rest = line.substr(tag.size());
      auto colon = rest.find(':');
      if (colon == std::string_view::npos) continue;
      int idx = 0;
      try {
        idx = std::stoi(std::string(rest.substr(0, colon)));
      } catch (const std::exception&) {
        continue;
      }
      auto body = trim(rest.substr(colon + 1));
      if (is_text) {
        texts[idx] = std::string(body);
      } else {
        phons[idx] = strip_boundary_sil(parse_phoneme_string(body));
      }
    }
  }
  CandidateSet c;
  for (const auto& [idx, text] : texts) {
    c.transcriptions.push_back(text);
    auto it = phons.find(idx);
    c.phonemes.push_back(it == phons.end() ? PhonemeSeq{} : it->second);
  }
  return c;
}

std::string MockChatClient::complete(const ChatRequest& request) {
  ++calls_;
  last_ = request;
  auto reply_with = [](const CandidateSet& c, std::size_t i) {
    std::string out = c.transcriptions.at(i);
    if (!c.phonemes.at(i).empty()) out += "\n" + render_with_boundaries(c.phonemes[i]);
    return out;
  };
  switch (mode_) {
    case Mode::Timeout:
      throw ChatError("mock: request timed out");
    case Mode::Malformed:
      return "";
    case Mode::Scripted:
      if (script_.empty()) throw ChatError("mock: no scripted reply left");
      {
        std::string r = std::move(script_.front());
        script_.pop_front();
        return r;
      }
    case Mode::Echo:
    case Mode::Majority: {
      if (request.messages.empty()) throw ChatError("mock: request has no messages");
      const CandidateSet c = parse_candidates(request.messages.back().content);
      if (c.transcriptions.empty()) throw ChatError("mock: no candidates in the prompt");
      if (mode_ == Mode::Majority) return reply_with(c, majority_index(c));
      if (echo_ < 1 || static_cast<std::size_t>(echo_) > c.size()) throw ChatError("mock: echo index out of range");
      return reply_with(c, static_cast<std::size_t>(echo_ - 1));
    }
  }
  throw ChatError("mock: unknown mode");
}

std::string_view to_string(CorrectionSource source) {
  switch (source) {
    case CorrectionSource::Service:
      return "service";
    case CorrectionSource::FallbackMajority:
      return "fallback-majority";
    case CorrectionSource::FallbackTop1:
      return "fallback-top1";
  }
  return "unknown";
}

CorrectionResult correct(const CandidateSet& query, ChatClient& client, std::span<const IclExemplar> exemplars,
                         const CorrectOptions& options) {
  CorrectionResult r;
  if (query.transcriptions.empty()) {
    r.source = CorrectionSource::FallbackTop1;
    r.failure = "empty candidate set";
    return r;
  }
  try {
    ChatRequest req;
    req.model = options.model;
    req.temperature = options.temperature;
    if (options.mode == PromptMode::Finetune) {
      req.messages = {{"system", std::string(render_system_prompt(PromptMode::Finetune))},
                      {"user", render_candidates(query)}};
    } else {
      IclPrompt p = build_icl_prompt(exemplars, query, options.budget);
      req.messages = {{"system", p.system}, {"user", p.user}};
    }
    ParsedResponse parsed = parse_response(client.complete(req));
    r.transcription = std::move(parsed.transcription);
    r.phonemes = std::move(parsed.phonemes);
    r.source = CorrectionSource::Service;
    return r;
  } catch (const std::exception& e) {
    r.failure = e.what();
  }
  const bool has_phonemes = query.phonemes.size() == query.transcriptions.size();
  const std::size_t pick = max_count(query) >= 2 ? majority_index(query) : 0;
  r.source = max_count(query) >= 2 ? CorrectionSource::FallbackMajority : CorrectionSource::FallbackTop1;
  r.transcription = query.transcriptions[pick];
  if (has_phonemes && !query.phonemes[pick].empty()) r.phonemes = query.phonemes[pick];
  return r;
}

ExternalRescorer make_service_rescorer(ChatClient& client, std::string model) {
  return ExternalRescorer([&client, model = std::move(model)](const std::vector<std::string>& words) {
    std::string sentence;
    for (const auto& w : words) sentence += (sentence.empty() ? "" : " ") + w;
    ChatRequest req;
    req.model = model;
    req.messages = {{"system", "Reply with a single number: the natural-log probability of the user's sentence."},
                    {"user", sentence}};
    const std::string reply = client.complete(req);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(std::string(trim(reply)), &used);
    } catch (const std::exception&) {
      throw ChatError("rescorer reply is not a number: " + reply);
    }
    if (used != trim(reply).size()) throw ChatError("rescorer reply is not a number: " + reply);
    return v;
  });
}

}  // namespace dcond
