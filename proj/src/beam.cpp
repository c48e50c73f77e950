#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "dcond/error.hpp"
#include "dcond/lm.hpp"
#include "dcond/subclass.hpp"

namespace dcond {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Hyp {
  std::vector<int> labels;
  std::vector<int> words;
  int node = LexiconTrie::kRoot;
  double pb = kNegInf;
  double pnb = kNegInf;
  double lm = 0.0;

  double acoustic() const { return log_add(pb, pnb); }
};

struct KeyHash {
  std::size_t operator()(const std::vector<int>& v) const noexcept {
    std::size_t h = v.size();
    for (int x : v) h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

using Beam = std::unordered_map<std::vector<int>, Hyp, KeyHash>;

std::vector<int> full_key(const std::vector<int>& labels, const std::vector<int>& words, std::size_t keep_words) {
  std::vector<int> key(labels);
  key.push_back(-1);
  const std::size_t from = words.size() > keep_words ? words.size() - keep_words : 0;
  key.insert(key.end(), words.begin() + static_cast<std::ptrdiff_t>(from), words.end());
  return key;
}

class Search {
 public:
  Search(const Lexicon& lexicon, const NGramModel& lm, const DecodeConfig& cfg)
      : trie_(lexicon), lm_(lm), cfg_(cfg) {}

  double score(const Hyp& h) const {
    return h.acoustic() + cfg_.lm_weight * h.lm + cfg_.word_bonus * static_cast<double>(h.words.size());
  }

  double word_log_prob(const std::vector<int>& words, std::string_view next) const {
    std::vector<std::string> hist{std::string(kSentenceStart)};
    const std::size_t keep = static_cast<std::size_t>(std::max(lm_.order() - 1, 0));
    const std::size_t from = words.size() > keep ? words.size() - keep : 0;
    for (std::size_t i = from; i < words.size(); ++i) hist.push_back(trie_.word(words[i]));
    return lm_.log_prob(hist, next);
  }

  std::vector<Transcription> run(const Posteriorgram& post) {
    const int frames = static_cast<int>(post.rows());
    const int blank = kNumPhonemes;
    const int sil = kSilIndex;
    const std::size_t all_words = std::numeric_limits<std::size_t>::max();

    std::vector<Hyp> beam(1);
    beam[0].pb = 0.0;
    for (int t = 0; t < frames; ++t) {
      Beam next;
      auto merge = [&](Hyp&& h, double pb, double pnb) {
        auto key = full_key(h.labels, h.words, all_words);
        auto [it, inserted] = next.try_emplace(std::move(key));
        if (inserted) {
          it->second = std::move(h);
          it->second.pb = pb;
          it->second.pnb = pnb;
        } else {
          it->second.pb = log_add(it->second.pb, pb);
          it->second.pnb = log_add(it->second.pnb, pnb);
        }
      };
      for (const Hyp& h : beam) {
        const double total = h.acoustic();
        const int last = h.labels.empty() ? -1 : h.labels.back();
        // Stay: blank, or repeat of the last label.
        {
          Hyp same = h;
          const double pb = total + post(t, blank);
          const double pnb = last >= 0 ? h.pnb + post(t, last) : kNegInf;
          merge(std::move(same), pb, pnb);
        }
        auto extend_from = [&](int c) { return c == last ? h.pb : total; };
        for (int c = 0; c < kNumPhonemes; ++c) {
          if (c == sil) continue;
          const int child = trie_.child(h.node, c);
          if (child < 0 || post(t, c) == kNegInf) continue;
          const double p = extend_from(c) + post(t, c);
          if (p == kNegInf) continue;
          Hyp e;
          e.labels = h.labels;
          e.labels.push_back(c);
          e.words = h.words;
          e.node = child;
          e.lm = h.lm;
          merge(std::move(e), kNegInf, p);
        }
        if (h.node != LexiconTrie::kRoot && post(t, sil) != kNegInf) {
          const double p = extend_from(sil) + post(t, sil);
          for (int w : trie_.words_at(h.node)) {
            Hyp e;
            e.labels = h.labels;
            e.labels.push_back(sil);
            e.lm = h.lm + word_log_prob(h.words, trie_.word(w));
            e.words = h.words;
            e.words.push_back(w);
            e.node = LexiconTrie::kRoot;
            merge(std::move(e), kNegInf, p);
          }
        }
      }
      beam = prune(std::move(next));
    }
    return finish(beam, post);
  }

 private:
  struct Ranked {
    double score;
    std::vector<int> key;
    Hyp hyp;
  };

  std::vector<Hyp> prune(Beam&& next) const {
    // Recombine on (labels, LM state): the future score increments are identical, keep the best.
    const std::size_t state_words = static_cast<std::size_t>(std::max(lm_.order() - 1, 0));
    std::unordered_map<std::vector<int>, Ranked, KeyHash> best;
    for (auto& [key, h] : next) {
      const double s = score(h);
      if (s == kNegInf) continue;
      auto state = full_key(h.labels, h.words, state_words);
      auto it = best.find(state);
      if (it == best.end()) {
        best.emplace(std::move(state), Ranked{s, key, std::move(h)});
      } else if (s > it->second.score || (s == it->second.score && key < it->second.key)) {
        it->second = Ranked{s, key, std::move(h)};
      }
    }
    std::vector<Ranked> ranked;
    ranked.reserve(best.size());
    for (auto& [state, r] : best) ranked.push_back(std::move(r));
    const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(cfg_.beam_width));
    auto cmp = [](const Ranked& a, const Ranked& b) { return a.score != b.score ? a.score > b.score : a.key < b.key; };
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), cmp);
    std::vector<Hyp> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(std::move(ranked[i].hyp));
    return out;
  }

  Transcription make(const Hyp& h, const std::vector<int>& words, double lm) const {
    Transcription t;
    for (int w : words) t.words.push_back(trie_.word(w));
    for (int l : h.labels) t.phonemes.push_back(Phoneme(l));
    if (!t.phonemes.empty() && t.phonemes.back().is_sil()) t.phonemes.pop_back();
    t.acoustic_score = h.acoustic();
    t.lm_score = lm;
    t.total = t.acoustic_score + cfg_.lm_weight * lm + cfg_.word_bonus * static_cast<double>(words.size());
    return t;
  }

  std::vector<Transcription> finish(const std::vector<Hyp>& beam, const Posteriorgram& post) const {
    std::vector<Transcription> out;
    for (const Hyp& h : beam) {
      if (h.node == LexiconTrie::kRoot) {
        // A trailing SIL already closed the last word.
        if (!h.words.empty()) out.push_back(make(h, h.words, h.lm + word_log_prob(h.words, kSentenceEnd)));
        continue;
      }
      for (int w : trie_.words_at(h.node)) {
        std::vector<int> words = h.words;
        words.push_back(w);
        double lm = h.lm + word_log_prob(h.words, trie_.word(w));
        lm += word_log_prob(words, kSentenceEnd);
        out.push_back(make(h, words, lm));
      }
    }
    if (out.empty()) {
      Transcription t;
      t.acoustic_score = post.col(kNumPhonemes).sum();
      t.total = t.acoustic_score;
      out.push_back(std::move(t));
      return out;
    }
    std::stable_sort(out.begin(), out.end(), [](const Transcription& a, const Transcription& b) {
      if (a.total != b.total) return a.total > b.total;
      if (a.words != b.words) return a.words < b.words;
      return phoneme_labels(a.phonemes) < phoneme_labels(b.phonemes);
    });
    // With and without a trailing SIL the same transcription can appear twice; keep the better.
    std::set<std::pair<std::vector<std::string>, LabelSeq>> seen;
    std::erase_if(out, [&](const Transcription& t) { return !seen.emplace(t.words, phoneme_labels(t.phonemes)).second; });
    if (out.size() > static_cast<std::size_t>(cfg_.nbest_size)) out.resize(cfg_.nbest_size);
    return out;
  }

  LexiconTrie trie_;
  const NGramModel& lm_;
  const DecodeConfig& cfg_;
};

}  // namespace

std::string Transcription::text() const {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

LexiconTrie::LexiconTrie(const Lexicon& lexicon) {
  Node root;
  root.next.fill(-1);
  nodes_.push_back(root);
  for (const auto& [word, prons] : lexicon.entries()) {
    const int id = static_cast<int>(words_.size());
    words_.push_back(word);
    for (const auto& pron : prons) {
      int node = kRoot;
      for (Phoneme p : pron) {
        if (p.is_sil()) throw InvalidArgument("lexicon pronunciation of '" + word + "' contains SIL");
        int nxt = nodes_[node].next[p.index()];
        if (nxt < 0) {
          nxt = static_cast<int>(nodes_.size());
          Node n;
          n.next.fill(-1);
          nodes_.push_back(n);
          nodes_[node].next[p.index()] = nxt;
        }
        node = nxt;
      }
      auto& ws = nodes_[node].words;
      if (node != kRoot && std::find(ws.begin(), ws.end(), id) == ws.end()) ws.push_back(id);
    }
  }
}

std::vector<Transcription> lexicon_beam_decode(const Posteriorgram& phoneme_post, const Lexicon& lexicon,
                                               const NGramModel& lm, const DecodeConfig& cfg) {
  if (phoneme_post.cols() != kNumPhonemes + 1) {
    throw InvalidArgument("lexicon_beam_decode: expects a " + std::to_string(kNumPhonemes + 1) +
                          "-class phoneme posteriorgram, got " + std::to_string(phoneme_post.cols()));
  }
  if (phoneme_post.rows() < 1) throw InvalidArgument("lexicon_beam_decode: no frames");
  if (cfg.beam_width < 1) throw InvalidArgument("beam_width must be >= 1");
  if (cfg.nbest_size < 1) throw InvalidArgument("nbest_size must be >= 1");
  const Posteriorgram scaled = apply_temperature(phoneme_post, cfg.temperature);
  Search search(lexicon, lm, cfg);
  return search.run(scaled);
}

RescoreResult rescore(std::vector<Transcription> nbest, SentenceScorer& scorer, double weight) {
  if (nbest.empty()) throw InvalidArgument("rescore: empty N-best list");
  RescoreResult r;
  std::vector<Transcription> updated = nbest;
  try {
    for (auto& t : updated) {
      const double s = scorer.score(t);
      if (!std::isfinite(s)) throw Error("rescorer returned a non-finite score");
      t.total = t.acoustic_score + weight * s;
    }
  } catch (const std::exception& e) {
    r.nbest = std::move(nbest);
    r.warning = true;
    r.message = std::string("rescorer failed, keeping original order: ") + e.what();
    return r;
  }
  std::stable_sort(updated.begin(), updated.end(),
                   [](const Transcription& a, const Transcription& b) { return a.total > b.total; });
  r.nbest = std::move(updated);
  return r;
}

}  // namespace dcond
