#include "dcond/subclass.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

#include "dcond/error.hpp"

namespace dcond {

void SubclassTable::build_members() {
  members_.assign(kNumPhonemes, {});
  for (int s = 0; s < num_subclasses(); ++s) members_[main_of_[s]].push_back(s);
}

SubclassTable SubclassTable::monophone() {
  SubclassTable t;
  t.scheme_ = SubclassScheme::Monophone;
  t.main_of_.resize(kNumPhonemes);
  std::iota(t.main_of_.begin(), t.main_of_.end(), 0);
  t.build_members();
  return t;
}

SubclassTable SubclassTable::diphone() {
  SubclassTable t;
  t.scheme_ = SubclassScheme::Diphone;
  t.main_of_.resize(kNumDiphones);
  for (int s = 0; s < kNumDiphones; ++s) t.main_of_[s] = diphone_from_index(s).cur.index();
  t.build_members();
  return t;
}

SubclassTable SubclassTable::from_ranked_contexts(int k, std::vector<Triphone> ranked) {
  if (k < 1) throw InvalidArgument("triphone top-K requires K >= 1");
  if (static_cast<int>(ranked.size()) != kNumPhonemes * k) {
    throw InvalidArgument("triphone top-K table must hold 40*K contexts");
  }
  SubclassTable t;
  t.scheme_ = SubclassScheme::TriphoneTopK;
  t.k_ = k;
  t.ranked_ = std::move(ranked);
  const int n = kNumPhonemes * k;
  t.main_of_.resize(n + kNumPhonemes);
  t.topk_lookup_.assign(kNumPhonemes * kNumDiphones, -1);
  for (int s = 0; s < n; ++s) {
    const Triphone& tri = t.ranked_[s];
    if (tri.cur.index() != s / k) throw InvalidArgument("triphone top-K context listed under the wrong phoneme");
    t.main_of_[s] = tri.cur.index();
    t.topk_lookup_[tri.cur.index() * kNumDiphones + tri.prev.index() * kNumPhonemes + tri.next.index()] = s;
  }
  for (int c = 0; c < kNumPhonemes; ++c) t.main_of_[n + c] = c;
  t.build_members();
  return t;
}

SubclassTable SubclassTable::triphone_top_k(std::span<const PhonemeSeq> corpus, int k) {
  if (k < 1) throw InvalidArgument("triphone top-K requires K >= 1");
  if (k > kNumDiphones) throw InvalidArgument("triphone top-K: K exceeds the 1600 possible contexts");
  if (corpus.empty()) throw InvalidArgument("triphone top-K requires a non-empty corpus");
  // counts[cur][prev*40+next]
  std::vector<std::vector<long>> counts(kNumPhonemes, std::vector<long>(kNumDiphones, 0));
  for (const auto& seq : corpus) {
    if (seq.empty()) continue;
    for (const Triphone& tri : expand_triphones(seq)) {
      ++counts[tri.cur.index()][tri.prev.index() * kNumPhonemes + tri.next.index()];
    }
  }
  std::vector<Triphone> ranked;
  ranked.reserve(kNumPhonemes * k);
  std::vector<int> order(kNumDiphones);
  for (int c = 0; c < kNumPhonemes; ++c) {
    std::iota(order.begin(), order.end(), 0);
    const auto& cc = counts[c];
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cc[a] > cc[b]; });
    for (int r = 0; r < k; ++r) {
      ranked.push_back({Phoneme(order[r] / kNumPhonemes), Phoneme(c), Phoneme(order[r] % kNumPhonemes)});
    }
  }
  return from_ranked_contexts(k, std::move(ranked));
}

SubclassTable SubclassTable::triphone_grouped(const ArticulatoryGroups& groups) {
  SubclassTable t;
  t.scheme_ = SubclassScheme::TriphoneGrouped;
  t.groups_ = groups;
  constexpr int g = kNumArticulatoryGroups;
  t.main_of_.resize(g * kNumPhonemes * g);
  for (int s = 0; s < static_cast<int>(t.main_of_.size()); ++s) t.main_of_[s] = (s / g) % kNumPhonemes;
  t.build_members();
  return t;
}

int SubclassTable::triphone_id(const Triphone& tri) const {
  switch (scheme_) {
    case SubclassScheme::TriphoneTopK: {
      int id = topk_lookup_[tri.cur.index() * kNumDiphones + tri.prev.index() * kNumPhonemes + tri.next.index()];
      return id >= 0 ? id : kNumPhonemes * k_ + tri.cur.index();
    }
    case SubclassScheme::TriphoneGrouped: {
      constexpr int g = kNumArticulatoryGroups;
      return (groups_.group_of(tri.prev) * kNumPhonemes + tri.cur.index()) * g + groups_.group_of(tri.next);
    }
    default:
      throw InvalidArgument("triphone_id called on a non-triphone table");
  }
}

LabelSeq SubclassTable::labels_for(std::span<const Phoneme> seq) const {
  LabelSeq out;
  switch (scheme_) {
    case SubclassScheme::Monophone:
      return phoneme_labels(seq);
    case SubclassScheme::Diphone:
      for (const Diphone& d : expand_diphones(seq)) out.push_back(diphone_index(d.prev, d.cur));
      return out;
    case SubclassScheme::TriphoneTopK:
    case SubclassScheme::TriphoneGrouped:
      for (const Triphone& t : expand_triphones(seq)) out.push_back(triphone_id(t));
      return out;
  }
  return out;
}

LabelSeq SubclassTable::phoneme_targets(std::span<const Phoneme> seq) const {
  LabelSeq out = phoneme_labels(seq);
  // The diphone expansion ends in (z_n -> SIL), whose main class is SIL.
  if (scheme_ == SubclassScheme::Diphone && !seq.empty()) out.push_back(kSilIndex);
  return out;
}

std::string SubclassTable::name() const {
  switch (scheme_) {
    case SubclassScheme::Monophone:
      return "mono";
    case SubclassScheme::Diphone:
      return "diphone";
    case SubclassScheme::TriphoneTopK:
      return "triphone-topk:" + std::to_string(k_);
    case SubclassScheme::TriphoneGrouped:
      return "triphone-grouped";
  }
  return "unknown";
}

SchemeSpec parse_scheme(std::string_view text) {
  if (text == "mono") return {SubclassScheme::Monophone, 0};
  if (text == "diphone") return {SubclassScheme::Diphone, 0};
  if (text == "triphone-grouped") return {SubclassScheme::TriphoneGrouped, 0};
  constexpr std::string_view prefix = "triphone-topk:";
  if (text.starts_with(prefix)) {
    auto digits = text.substr(prefix.size());
    int k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && k >= 1) {
      return {SubclassScheme::TriphoneTopK, k};
    }
  }
  throw InvalidArgument("unknown subclass scheme '" + std::string(text) +
                        "' (expected mono, diphone, triphone-topk:K or triphone-grouped)");
}

SubclassTable build_subclass_table(const SchemeSpec& spec, std::span<const PhonemeSeq> corpus) {
  switch (spec.scheme) {
    case SubclassScheme::Monophone:
      return SubclassTable::monophone();
    case SubclassScheme::Diphone:
      return SubclassTable::diphone();
    case SubclassScheme::TriphoneTopK:
      return SubclassTable::triphone_top_k(corpus, spec.k);
    case SubclassScheme::TriphoneGrouped:
      return SubclassTable::triphone_grouped();
  }
  throw InvalidArgument("unknown subclass scheme");
}

LabelSeq phoneme_labels(std::span<const Phoneme> seq) {
  LabelSeq out;
  out.reserve(seq.size());
  for (Phoneme p : seq) out.push_back(p.index());
  return out;
}

}  // namespace dcond
