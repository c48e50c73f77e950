#pragma once

#include <span>
#include <string>
#include <vector>

#include "dcond/phonemes.hpp"
#include "dcond/types.hpp"

namespace dcond {

enum class SubclassScheme {
  Monophone,        // identity table: the NPTL-style baseline head
  Diphone,          // (prev, cur)
  TriphoneTopK,     // K most frequent (prev, next) contexts per phoneme + overflow
  TriphoneGrouped,  // (group(prev), cur, group(next))
};

/// Maps context-dependent subclasses onto the 40 main phoneme classes.
///
/// `members_of` partitions [0, num_subclasses). Label sequences produced by
/// `labels_for` index into the subclass alphabet; the CTC blank is
/// `num_subclasses()` and is not part of the table.
class SubclassTable {
 public:
  static SubclassTable monophone();
  static SubclassTable diphone();
  /// Ranks every (prev, next) context of each main phoneme by corpus count,
  /// ties by prev*40+next. Ids [0, 40K) hold main*K + rank; ids 40K + main
  /// are the per-phoneme overflow subclasses for unranked contexts.
  static SubclassTable triphone_top_k(std::span<const PhonemeSeq> corpus, int k);
  static SubclassTable triphone_grouped(const ArticulatoryGroups& groups = ArticulatoryGroups::standard());

  SubclassScheme scheme() const { return scheme_; }
  int k() const { return k_; }
  int num_subclasses() const { return static_cast<int>(main_of_.size()); }
  int main_of(int subclass) const { return main_of_.at(subclass); }
  std::span<const int> members_of(int phoneme) const { return members_[phoneme]; }

  /// Subclass id of a triphone context (TriphoneTopK / TriphoneGrouped only).
  int triphone_id(const Triphone& t) const;
  /// Subclass label sequence for a ground-truth phoneme sequence.
  LabelSeq labels_for(std::span<const Phoneme> seq) const;
  /// Phoneme-space CTC targets matching the main classes of labels_for: the
  /// phoneme labels, plus a trailing SIL for the diphone scheme.
  LabelSeq phoneme_targets(std::span<const Phoneme> seq) const;
  /// Human-readable scheme name, e.g. "diphone" or "triphone-topk:8".
  std::string name() const;

  /// TopK context ranking as (prev, cur, next) per non-overflow id, for serialization.
  const std::vector<Triphone>& ranked_contexts() const { return ranked_; }
  /// Group table backing TriphoneGrouped.
  const ArticulatoryGroups& groups() const { return groups_; }
  static SubclassTable from_ranked_contexts(int k, std::vector<Triphone> ranked);

 private:
  void build_members();

  SubclassScheme scheme_ = SubclassScheme::Monophone;
  int k_ = 0;
  std::vector<int> main_of_;
  std::vector<std::vector<int>> members_;
  std::vector<Triphone> ranked_;
  std::vector<int> topk_lookup_;  // cur*1600 + prev*40 + next -> id
  ArticulatoryGroups groups_;
};

struct SchemeSpec {
  SubclassScheme scheme = SubclassScheme::Diphone;
  int k = 0;
};

/// Parses "mono", "diphone", "triphone-topk:K" or "triphone-grouped".
SchemeSpec parse_scheme(std::string_view text);

SubclassTable build_subclass_table(const SchemeSpec& spec, std::span<const PhonemeSeq> corpus);

LabelSeq phoneme_labels(std::span<const Phoneme> seq);

}  // namespace dcond
