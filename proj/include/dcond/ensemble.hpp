#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcond/error.hpp"
#include "dcond/lm.hpp"
#include "dcond/phonemes.hpp"

namespace dcond {

enum class PromptMode { Finetune, Icl };

/// The fixed system prompt for each mode, byte-identical to prompts/*.txt.
std::string_view render_system_prompt(PromptMode mode);

/// N candidate transcriptions with parallel phoneme sequences (boundary SILs not stored).
struct CandidateSet {
  std::vector<std::string> transcriptions;
  std::vector<PhonemeSeq> phonemes;

  std::size_t size() const { return transcriptions.size(); }
  /// Throws InvalidArgument on a size mismatch or an empty set.
  void validate() const;

  /// Texts get a terminating '.'; a shorter list is padded by repeating its last entry.
  static CandidateSet from_nbest(std::span<const Transcription> nbest, std::size_t size = 10);
};

struct IclExemplar {
  CandidateSet candidates;
  std::string gt_transcription;
  PhonemeSeq gt_phonemes;
};

/// "Transcription candidate i: ..." lines followed by "Phoneme candidate i: ..." lines.
std::string render_candidates(const CandidateSet& cands);

struct FinetuneRecord {
  std::string system;
  std::string user;
  std::string assistant;  // ground-truth transcription, newline, ground-truth phonemes

  /// One JSONL row {"system", "user", "assistant"} without a trailing newline.
  std::string to_jsonl() const;
};

FinetuneRecord build_finetune_record(const CandidateSet& cands, std::string_view gt_transcription,
                                     std::span<const Phoneme> gt_phonemes);

struct IclBudget {
  std::size_t max_exemplars = 25;
  std::size_t max_chars = 48000;
};

struct IclPrompt {
  std::string system;
  std::string user;  // numbered examples followed by the query
  std::string text() const { return system + "\n\n" + user; }
};

/// Throws InvalidArgument naming the overflow when either budget is exceeded.
IclPrompt build_icl_prompt(std::span<const IclExemplar> exemplars, const CandidateSet& query,
                           const IclBudget& budget = {});

struct ParsedResponse {
  std::string transcription;
  std::optional<PhonemeSeq> phonemes;  // boundary SILs removed
};

/// First non-empty line is the transcription; a second non-empty line made
/// only of phoneme symbols becomes the phoneme sequence. Empty text throws ParseError.
ParsedResponse parse_response(std::string_view text);

/// Most frequent normalized transcription; ties go to the lowest index.
/// Returns the index of the winning candidate.
std::size_t majority_index(const CandidateSet& cands);
std::string majority_vote(const CandidateSet& cands);

// ---------------------------------------------------------------------------
// Completion service

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

/// Transport or protocol failure of a completion service.
class ChatError : public Error {
 public:
  using Error::Error;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the assistant reply text or throws ChatError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

std::string chat_request_json(const ChatRequest& request);
/// Extracts choices[0].message.content; throws ChatError on a malformed body.
std::string parse_chat_response_json(std::string_view body);

struct ServiceConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  double timeout_seconds = 30.0;
  int max_retries = 3;
  double temperature = 0.0;
  double backoff_base_seconds = 0.5;
  std::uint64_t jitter_seed = 0;
  std::string api_key_env = "DCOND_API_KEY";  // bearer token read from this variable when set
};

/// Chat-completion client over plain HTTP. Retries transport errors, 429 and
/// 5xx replies with exponential backoff plus seeded jitter.
class HttpChatClient final : public ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;
  explicit HttpChatClient(ServiceConfig cfg, Sleeper sleeper = {});
  std::string complete(const ChatRequest& request) override;
  const ServiceConfig& config() const { return cfg_; }

 private:
  ServiceConfig cfg_;
  Sleeper sleep_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::string host_;
  int port_ = 80;
  std::string path_;
};

/// Deterministic stand-in for a completion service.
class MockChatClient final : public ChatClient {
 public:
  enum class Mode {
    Majority,   // reply with the majority query candidate and its phonemes
    Echo,       // reply with query candidate `echo_index` (1-based)
    Timeout,    // throw ChatError
    Malformed,  // reply with an empty string
    Scripted,   // pop replies from the queue; throws when exhausted
  };

  explicit MockChatClient(Mode mode = Mode::Majority, int echo_index = 1) : mode_(mode), echo_(echo_index) {}
  void push_reply(std::string reply) { script_.push_back(std::move(reply)); }
  std::string complete(const ChatRequest& request) override;
  int calls() const { return calls_; }
  const ChatRequest& last_request() const { return last_; }

 private:
  Mode mode_;
  int echo_;
  int calls_ = 0;
  ChatRequest last_;
  std::deque<std::string> script_;
};

/// Recovers the query candidates from a rendered prompt (the part after "Query:" when present).
CandidateSet parse_candidates(std::string_view prompt);

enum class CorrectionSource { Service, FallbackMajority, FallbackTop1 };
std::string_view to_string(CorrectionSource source);

struct CorrectionResult {
  std::string transcription;
  std::optional<PhonemeSeq> phonemes;
  CorrectionSource source = CorrectionSource::Service;
  std::string failure;  // why the service path was abandoned, empty on success
};

struct CorrectOptions {
  PromptMode mode = PromptMode::Finetune;
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  IclBudget budget;
};

/// Never throws for service or parsing failures: falls back to the majority
/// candidate when some transcription occurs at least twice, otherwise to candidate 1.
CorrectionResult correct(const CandidateSet& query, ChatClient& client, std::span<const IclExemplar> exemplars = {},
                         const CorrectOptions& options = {});

/// Rescorer that asks the service for a numeric log-score of a sentence.
ExternalRescorer make_service_rescorer(ChatClient& client, std::string model);

}  // namespace dcond
