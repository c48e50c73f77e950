#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dcond/ctc.hpp"
#include "dcond/error.hpp"
#include "dcond/lm.hpp"

namespace dcond {
namespace {

std::string join(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

int ngram_order_of(std::string_view key) { return static_cast<int>(std::count(key.begin(), key.end(), ' ')) + 1; }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

NGramModel::NGramModel(int order, double backoff) : order_(order), backoff_(backoff) {
  if (order < 1) throw InvalidArgument("n-gram order must be >= 1");
  if (!(backoff > 0.0 && backoff <= 1.0)) throw InvalidArgument("n-gram backoff factor must lie in (0, 1]");
}

void NGramModel::add(const std::string& key, long n) { counts_[key] += n; }

long NGramModel::count(std::string_view ngram) const {
  auto it = counts_.find(std::string(ngram));
  return it == counts_.end() ? 0 : it->second;
}

bool NGramModel::in_vocabulary(std::string_view word) const {
  return word == kSentenceStart || word == kSentenceEnd || counts_.contains(std::string(word));
}

std::string NGramModel::map_word(std::string_view w) const {
  if (in_vocabulary(w)) return std::string(w);
  return std::string(kUnknownWord);
}

double NGramModel::prob(std::span<const std::string> history, std::string_view word) const {
  const std::string w = map_word(word);
  const std::size_t keep = std::min<std::size_t>(history.size(), static_cast<std::size_t>(order_ - 1));
  std::vector<std::string> h;
  h.reserve(keep);
  for (std::size_t i = history.size() - keep; i < history.size(); ++i) h.push_back(map_word(history[i]));

  double scale = 1.0;
  for (std::size_t start = 0; start < h.size(); ++start) {
    const std::string ctx = join(std::span<const std::string>(h).subspan(start));
    const long c_hw = count(ctx + ' ' + w);
    if (c_hw > 0) return scale * static_cast<double>(c_hw) / static_cast<double>(count(ctx));
    scale *= backoff_;
  }
  const long c = std::max(count(w), 1L);
  return scale * static_cast<double>(c) / static_cast<double>(total_);
}

double NGramModel::log_prob(std::span<const std::string> history, std::string_view word) const {
  return std::log(prob(history, word));
}

double NGramModel::score_sequence(std::span<const std::string> words) const {
  std::vector<std::string> hist{std::string(kSentenceStart)};
  double total = 0.0;
  for (const auto& w : words) {
    total += log_prob(hist, w);
    hist.push_back(w);
  }
  return total + log_prob(hist, kSentenceEnd);
}

NGramModel train_ngram(std::span<const std::string> corpus, int order, double backoff) {
  NGramModel m(order, backoff);
  std::size_t sentences = 0;
  for (const auto& line : corpus) {
    std::vector<std::string> seq{std::string(kSentenceStart)};
    for (auto& w : normalize_sentence(line)) seq.push_back(std::move(w));
    if (seq.size() == 1) continue;
    seq.emplace_back(kSentenceEnd);
    ++sentences;
    m.add(std::string(kSentenceStart), 1);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      for (int k = 1; k <= order && static_cast<std::size_t>(k) <= i + 1; ++k) {
        m.add(join(std::span<const std::string>(seq).subspan(i + 1 - k, k)), 1);
      }
    }
    m.total_ += static_cast<long>(seq.size() - 1);
  }
  if (sentences == 0) throw InvalidArgument("train_ngram: corpus has no sentences");
  return m;
}

std::string NGramModel::serialize() const {
  std::vector<std::pair<int, const std::string*>> keys;
  keys.reserve(counts_.size());
  for (const auto& [k, v] : counts_) keys.emplace_back(ngram_order_of(k), &k);
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : *a.second < *b.second;
  });
  std::string out = "ngram order=" + std::to_string(order_) + " backoff=" + format_double(backoff_) + "\n";
  for (const auto& [k, key] : keys) out += *key + '\t' + std::to_string(counts_.at(*key)) + '\n';
  return out;
}

NGramModel NGramModel::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("n-gram file: empty");
  int order = 0;
  double backoff = 0.0;
  {
    std::istringstream h(line);
    std::string tag, o, b;
    h >> tag >> o >> b;
    if (tag != "ngram" || !o.starts_with("order=") || !b.starts_with("backoff=")) {
      throw ParseError("n-gram file: bad header line: " + line);
    }
    auto parse_num = [&](std::string_view s, auto& value) {
      auto r = std::from_chars(s.data(), s.data() + s.size(), value);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ParseError("n-gram file: bad header value " + std::string(s));
    };
    parse_num(std::string_view(o).substr(6), order);
    parse_num(std::string_view(b).substr(8), backoff);
  }
  NGramModel m(order, backoff);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("n-gram file: missing tab at line " + std::to_string(line_no));
    std::string key = line.substr(0, tab);
    long c = 0;
    auto r = std::from_chars(line.data() + tab + 1, line.data() + line.size(), c);
    if (r.ec != std::errc() || r.ptr != line.data() + line.size() || c <= 0) {
      throw ParseError("n-gram file: bad count at line " + std::to_string(line_no));
    }
    if (ngram_order_of(key) > order) throw ParseError("n-gram file: k-gram longer than order at line " + std::to_string(line_no));
    m.counts_[key] = c;
    if (ngram_order_of(key) == 1 && key != kSentenceStart) m.total_ += c;
  }
  if (m.total_ == 0) throw ParseError("n-gram file: no unigram counts");
  return m;
}

NGramModel load_ngram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open n-gram model " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return NGramModel::deserialize(ss.str());
}

void save_ngram(const NGramModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << model.serialize();
  if (!out) throw IoError("failed writing " + path);
}

MatrixD apply_temperature(const MatrixD& logits, double t) {
  if (!(t > 0.0)) throw InvalidArgument("temperature must be > 0");
  return log_softmax_rows(logits / t);
}

}  // namespace dcond
