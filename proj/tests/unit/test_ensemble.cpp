#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "dcond/ensemble.hpp"
#include "dcond/error.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace dcond;
using dcond::test::seq;

namespace {

std::string read_file(const std::string& rel) {
  std::ifstream in(test::source_path(rel), std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Table4 {
  CandidateSet cands;
  std::vector<std::string> phoneme_text;
  std::string gt_text;
  std::string gt_phoneme_text;
};

Table4 load_table4() {
  const auto j = nlohmann::json::parse(read_file("data/table4_example.json"));
  Table4 t;
  for (const auto& s : j.at("transcriptions")) t.cands.transcriptions.push_back(s.get<std::string>());
  for (const auto& s : j.at("phonemes")) {
    t.phoneme_text.push_back(s.get<std::string>());
    t.cands.phonemes.push_back(strip_boundary_sil(parse_phoneme_string(t.phoneme_text.back())));
  }
  t.gt_text = j.at("gt_transcription").get<std::string>();
  t.gt_phoneme_text = j.at("gt_phonemes").get<std::string>();
  return t;
}

CandidateSet make_set(const std::vector<std::string>& texts) {
  CandidateSet c;
  for (const auto& t : texts) {
    c.transcriptions.push_back(t);
    c.phonemes.push_back(seq("AA"));
  }
  return c;
}

IclExemplar exemplar() {
  const Table4 t = load_table4();
  return {t.cands, t.gt_text, strip_boundary_sil(parse_phoneme_string(t.gt_phoneme_text))};
}

int word_errors(const std::string& hyp, const std::string& ref) {
  const auto h = normalize_sentence(hyp), r = normalize_sentence(ref);
  std::vector<std::vector<int>> d(r.size() + 1, std::vector<int>(h.size() + 1));
  for (std::size_t i = 0; i <= r.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= h.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= r.size(); ++i)
    for (std::size_t j = 1; j <= h.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (r[i - 1] == h[j - 1] ? 0 : 1)});
  return d[r.size()][h.size()];
}

}  // namespace

TEST_CASE("system prompts are byte-identical to the fixtures") {
  CHECK(render_system_prompt(PromptMode::Finetune) == read_file("prompts/finetune_system_v1.txt"));
  CHECK(render_system_prompt(PromptMode::Icl) == read_file("prompts/icl_system_v1.txt"));
}

TEST_CASE("finetune record for the worked example") {
  const Table4 t = load_table4();
  REQUIRE(t.cands.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(render_with_boundaries(t.cands.phonemes[i]) == t.phoneme_text[i]);
  const auto gt = strip_boundary_sil(parse_phoneme_string(t.gt_phoneme_text));
  const FinetuneRecord r = build_finetune_record(t.cands, t.gt_text, gt);
  CHECK(r.system == read_file("prompts/finetune_system_v1.txt"));
  std::string expected_user;
  for (int i = 0; i < 10; ++i)
    expected_user += "Transcription candidate " + std::to_string(i + 1) + ": " + t.cands.transcriptions[i] + "\n";
  for (int i = 0; i < 10; ++i)
    expected_user += "Phoneme candidate " + std::to_string(i + 1) + ": " + t.phoneme_text[i] + "\n";
  CHECK(r.user == expected_user);
  CHECK(r.assistant == t.gt_text + "\n" + t.gt_phoneme_text);
  const auto j = nlohmann::json::parse(r.to_jsonl());
  CHECK(j.at("system") == r.system);
  CHECK(j.at("user") == r.user);
  CHECK(j.at("assistant") == r.assistant);
  CHECK(r.to_jsonl().find('\n') == std::string::npos);
  CHECK(parse_candidates(r.user).transcriptions == t.cands.transcriptions);
  CHECK(parse_candidates(r.user).phonemes == t.cands.phonemes);
  CHECK_THROWS_AS(build_finetune_record(t.cands, "  ", gt), InvalidArgument);
}

TEST_CASE("candidate sets from an N-best list") {
  Transcription a, b;
  a.words = {"we", "know"};
  a.phonemes = seq("W IY SIL N OW");
  b.words = {"we", "go"};
  b.phonemes = seq("W IY SIL G OW");
  std::vector<Transcription> nbest{a, b};
  const auto c = CandidateSet::from_nbest(nbest, 4);
  CHECK(c.transcriptions == std::vector<std::string>{"we know.", "we go.", "we go.", "we go."});
  CHECK(c.phonemes[3] == b.phonemes);
  CHECK_THROWS_AS(CandidateSet::from_nbest(std::vector<Transcription>{}), InvalidArgument);
  CandidateSet bad = c;
  bad.phonemes.pop_back();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("ICL prompt budget") {
  const CandidateSet query = load_table4().cands;
  std::vector<IclExemplar> ex(25, exemplar());
  const IclPrompt p = build_icl_prompt(ex, query);
  CHECK(p.system == read_file("prompts/icl_system_v1.txt"));
  CHECK(p.user.find("Example 25:") != std::string::npos);
  CHECK(p.user.find("Example 26:") == std::string::npos);
  CHECK(parse_candidates(p.user).transcriptions == query.transcriptions);
  ex.push_back(exemplar());
  try {
    build_icl_prompt(ex, query);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("by 1") != std::string::npos);
  }
  IclBudget tight;
  tight.max_chars = 100;
  CHECK_THROWS_AS(build_icl_prompt(std::vector<IclExemplar>{}, query, tight), InvalidArgument);
}

TEST_CASE("response parsing and voting") {
  auto r = parse_response("\n  but we don't know that.\nSIL B AH T SIL.\n");
  CHECK(r.transcription == "but we don't know that.");
  REQUIRE(r.phonemes);
  CHECK(*r.phonemes == seq("B AH T"));
  r = parse_response("hello there\nnot phonemes at all");
  CHECK(!r.phonemes);
  CHECK_THROWS_AS(parse_response(" \n "), ParseError);

  CHECK(majority_index(make_set({"a b.", "c.", "C", "a b"})) == 0);
  CHECK(majority_index(make_set({"x", "y", "y"})) == 1);
  CHECK(majority_vote(make_set({"one", "two"})) == "one");
}

TEST_CASE("correct with the mock client") {
  const Table4 t = load_table4();
  SUBCASE("majority reply is labelled as coming from the service") {
    MockChatClient mock;
    auto r = correct(t.cands, mock);
    CHECK(r.source == CorrectionSource::Service);
    CHECK(r.transcription == "but you don't know that.");
    CHECK(mock.last_request().messages[0].content == render_system_prompt(PromptMode::Finetune));
  }
  SUBCASE("ICL mode sends the exemplars") {
    MockChatClient mock(MockChatClient::Mode::Echo, 2);
    std::vector<IclExemplar> ex{exemplar()};
    CorrectOptions opt;
    opt.mode = PromptMode::Icl;
    auto r = correct(t.cands, mock, ex, opt);
    CHECK(r.source == CorrectionSource::Service);
    CHECK(r.transcription == t.cands.transcriptions[1]);
    CHECK(mock.last_request().messages[1].content.starts_with("Example 1:"));
  }
  SUBCASE("timeouts fall back to the majority") {
    MockChatClient mock(MockChatClient::Mode::Timeout);
    auto r = correct(t.cands, mock);
    CHECK(r.source == CorrectionSource::FallbackMajority);
    CHECK(r.transcription == "but you don't know that.");
    CHECK(r.failure.find("timed out") != std::string::npos);
  }
  SUBCASE("no repeated candidate falls back to candidate one") {
    MockChatClient mock(MockChatClient::Mode::Malformed);
    auto r = correct(make_set({"a", "b", "c"}), mock);
    CHECK(r.source == CorrectionSource::FallbackTop1);
    CHECK(r.transcription == "a");
  }
  SUBCASE("an oversized ICL prompt falls back instead of throwing") {
    MockChatClient mock;
    std::vector<IclExemplar> ex(30, exemplar());
    CorrectOptions opt;
    opt.mode = PromptMode::Icl;
    auto r = correct(t.cands, mock, ex, opt);
    CHECK(r.source == CorrectionSource::FallbackMajority);
    CHECK(mock.calls() == 0);
  }
}

TEST_CASE("majority-correct candidate sets never get worse") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> words{"we", "know", "that", "cat", "sat", "go", "home"};
  std::uniform_int_distribution<int> w(0, 6), len(2, 5), correct_count(6, 10);
  long top1_errors = 0, corrected_errors = 0;
  for (int i = 0; i < 300; ++i) {
    auto sentence = [&] {
      std::string s;
      for (int k = len(rng); k > 0; --k) s += (s.empty() ? "" : " ") + words[w(rng)];
      return s;
    };
    const std::string gt = sentence();
    std::vector<std::string> texts(10);
    const int n_ok = correct_count(rng);
    for (int k = 0; k < 10; ++k) texts[k] = k < n_ok ? gt : sentence();
    std::shuffle(texts.begin(), texts.end(), rng);
    MockChatClient mock;
    const auto r = correct(make_set(texts), mock);
    CHECK(r.transcription == gt);
    top1_errors += word_errors(texts[0], gt);
    corrected_errors += word_errors(r.transcription, gt);
  }
  CHECK(corrected_errors <= top1_errors);
}

TEST_CASE("fault injection always yields a truthfully labelled result") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> fault(0, 3);
  const Table4 t = load_table4();
  for (int i = 0; i < 200; ++i) {
    const int kind = fault(rng);
    std::unique_ptr<MockChatClient> mock;
    switch (kind) {
      case 0: mock = std::make_unique<MockChatClient>(MockChatClient::Mode::Timeout); break;
      case 1: mock = std::make_unique<MockChatClient>(MockChatClient::Mode::Malformed); break;
      case 2: mock = std::make_unique<MockChatClient>(MockChatClient::Mode::Scripted); break;
      default:
        mock = std::make_unique<MockChatClient>(MockChatClient::Mode::Scripted);
        mock->push_reply("but we know that.");
    }
    CorrectionResult r;
    CHECK_NOTHROW(r = correct(t.cands, *mock));
    CHECK(!r.transcription.empty());
    if (kind == 3) {
      CHECK(r.source == CorrectionSource::Service);
      CHECK(r.transcription == "but we know that.");
    } else {
      CHECK(r.source == CorrectionSource::FallbackMajority);
      CHECK(!r.failure.empty());
    }
  }
}

TEST_CASE("service rescorer") {
  MockChatClient mock(MockChatClient::Mode::Scripted);
  mock.push_reply(" -3.5 ");
  mock.push_reply("about three");
  auto scorer = make_service_rescorer(mock, "m");
  Transcription t;
  t.words = {"hi"};
  CHECK(scorer.score(t) == -3.5);
  CHECK_THROWS_AS(scorer.score(t), ChatError);
}

TEST_CASE("chat JSON helpers") {
  ChatRequest req{"m", {{"system", "s"}, {"user", "u\n\"q\""}}, 0.0};
  const auto j = nlohmann::json::parse(chat_request_json(req));
  CHECK(j.at("model") == "m");
  CHECK(j.at("messages").at(1).at("content") == "u\n\"q\"");
  CHECK(parse_chat_response_json(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})") == "ok");
  CHECK_THROWS_AS(parse_chat_response_json("{"), ChatError);
  CHECK_THROWS_AS(parse_chat_response_json(R"({"choices":[]})"), ChatError);
}

TEST_CASE("HTTP client against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_body, seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = ++hits;
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    if (n == 1) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"we know that."}}]})", "application/json");
  });
  server.Post("/bad", [&](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::vector<double> sleeps;
  ServiceConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.timeout_seconds = 5;
  cfg.api_key_env = "DCOND_TEST_KEY";
  ::setenv("DCOND_TEST_KEY", "secret", 1);
  HttpChatClient client(cfg, [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); });
  ChatRequest req{"m", {{"user", "hi"}}, 0.0};
  CHECK(client.complete(req) == "we know that.");
  CHECK(hits == 2);
  REQUIRE(sleeps.size() == 1);
  CHECK(sleeps[0] >= cfg.backoff_base_seconds);
  CHECK(sleeps[0] < 2 * cfg.backoff_base_seconds);
  CHECK(seen_body == chat_request_json(req));
  CHECK(seen_auth == "Bearer secret");

  ServiceConfig bad = cfg;
  bad.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/bad";
  HttpChatClient bad_client(bad, [](std::chrono::duration<double>) {});
  CHECK_THROWS_AS(bad_client.complete(req), ChatError);

  server.stop();
  th.join();

  ServiceConfig down = cfg;
  down.max_retries = 2;
  sleeps.clear();
  HttpChatClient down_client(down, [&](std::chrono::duration<double> d) { sleeps.push_back(d.count()); });
  try {
    down_client.complete(req);
    FAIL("expected ChatError");
  } catch (const ChatError& e) {
    CHECK(std::string(e.what()).find("after 3 attempts") != std::string::npos);
  }
  CHECK(sleeps.size() == 2);
  CHECK_THROWS_AS(HttpChatClient(ServiceConfig{.endpoint = "https://example.com/x"}), InvalidArgument);
  ::unsetenv("DCOND_TEST_KEY");
}
