#include <set>

#include "dcond/error.hpp"
#include "dcond/phonemes.hpp"
#include "dcond/subclass.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dcond;
using dcond::test::seq;

namespace {

// Independent statement of the expansion rule used as an oracle.
std::vector<std::pair<std::string, std::string>> expand_oracle(const std::vector<std::string>& p) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string prev = "SIL";
  for (const auto& cur : p) {
    out.emplace_back(prev, cur);
    out.emplace_back(cur, cur);
    prev = cur;
  }
  out.emplace_back(prev, "SIL");
  return out;
}

std::vector<std::string> symbols(const PhonemeSeq& p) {
  std::vector<std::string> out;
  for (auto x : p) out.emplace_back(x.symbol());
  return out;
}

}  // namespace

TEST_CASE("inventory is a 40-symbol bijection with SIL last") {
  CHECK(kPhonemeSymbols.size() == 40);
  std::set<std::string_view> seen;
  for (int i = 0; i < kNumPhonemes; ++i) {
    Phoneme p(i);
    CHECK(Phoneme::from_symbol(p.symbol()).index() == i);
    seen.insert(p.symbol());
    if (i > 0 && i < kSilIndex) CHECK(kPhonemeSymbols[i - 1] < kPhonemeSymbols[i]);
  }
  CHECK(seen.size() == 40);
  CHECK(Phoneme::from_symbol("SIL").index() == 39);
  CHECK_THROWS_AS(Phoneme::from_symbol("QX"), ParseError);
}

TEST_CASE("parse_lexicon") {
  SUBCASE("two words") {
    auto lex = parse_lexicon("HI HH AY\nHOPE HH OW P");
    CHECK(lex.vocabulary() == std::vector<std::string>{"hi", "hope"});
    CHECK(lex.pronunciations("hope")[0] == seq("HH OW P"));
  }
  SUBCASE("alternates and stress digits") {
    auto lex = parse_lexicon("READ R IY1 D\nREAD(1) R EH1 D");
    REQUIRE(lex.pronunciations("read").size() == 2);
    CHECK(lex.pronunciations("read")[0] == seq("R IY D"));
    CHECK(lex.pronunciations("read")[1] == seq("R EH D"));
    CHECK(lex.pronunciations("READ").size() == 2);
  }
  SUBCASE("comments and blank lines") {
    auto lex = parse_lexicon(";;; header\n\nHI HH AY\n");
    CHECK(lex.size() == 1);
  }
  SUBCASE("unknown phoneme names the line and symbol") {
    try {
      parse_lexicon("FOO QX AA");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()) == "unknown phoneme QX at line 1");
    }
  }
  SUBCASE("committed lexicon loads") {
    auto lex = load_lexicon(test::source_path("data/lexicon.dict"));
    CHECK(lex.size() >= 50);
  }
}

TEST_CASE("sentence_to_phonemes") {
  auto lex = load_lexicon(test::source_path("data/lexicon.dict"));
  CHECK(sentence_to_phonemes("hope", lex) == seq("HH OW P"));
  CHECK(to_string(sentence_to_phonemes("But we don't know that.", lex)) ==
        "B AH T SIL W IY SIL D OW N T SIL N OW SIL DH AE T");
  try {
    sentence_to_phonemes("qwertyuiop", lex);
    FAIL("expected OutOfVocabulary");
  } catch (const OutOfVocabulary& e) {
    CHECK(e.word() == "qwertyuiop");
  }
}

TEST_CASE("diphone expansion") {
  SUBCASE("hope listing") {
    DiphoneSeq d = expand_diphones(seq("HH OW P"));
    std::vector<std::string> got;
    for (auto x : d) got.push_back(std::string(x.prev.symbol()) + ">" + std::string(x.cur.symbol()));
    CHECK(got == std::vector<std::string>{"SIL>HH", "HH>HH", "HH>OW", "OW>OW", "OW>P", "P>P", "P>SIL"});
  }
  SUBCASE("single token") {
    DiphoneSeq d = expand_diphones(seq("AH"));
    REQUIRE(d.size() == 3);
    CHECK(d[0] == Diphone{Phoneme::sil(), Phoneme::from_symbol("AH")});
    CHECK(d[2] == Diphone{Phoneme::from_symbol("AH"), Phoneme::sil()});
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(expand_diphones(PhonemeSeq{}), InvalidArgument); }
  SUBCASE("collapse rejects a missing self token") {
    DiphoneSeq bad{{Phoneme::sil(), Phoneme::from_symbol("HH")}, {Phoneme::from_symbol("HH"), Phoneme::from_symbol("OW")}};
    CHECK_THROWS_AS(collapse_diphones(bad), ParseError);
  }
  SUBCASE("round trip through the hand-applied rule") {
    auto p = seq("B AH T SIL W IY");
    auto oracle = expand_oracle(symbols(p));
    auto d = expand_diphones(p);
    REQUIRE(d.size() == oracle.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(d[i].prev.symbol() == oracle[i].first);
      CHECK(d[i].cur.symbol() == oracle[i].second);
    }
    CHECK(collapse_diphones(d) == p);
  }
  SUBCASE("random sequences") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
      auto p = test::random_phonemes(rng, 20);
      auto d = expand_diphones(p);
      CHECK(d.size() == 2 * p.size() + 1);
      CHECK(collapse_diphones(d) == p);
      CHECK(expand_triphones(p).size() == p.size());
    }
  }
}

TEST_CASE("diphone_index") {
  CHECK(diphone_index(Phoneme::from_symbol("AA"), Phoneme::from_symbol("AA")) == 0);
  CHECK(diphone_index(Phoneme::sil(), Phoneme::from_symbol("AA")) == 1560);
  std::set<int> seen;
  for (int a = 0; a < kNumPhonemes; ++a) {
    for (int b = 0; b < kNumPhonemes; ++b) {
      const int idx = diphone_index(Phoneme(a), Phoneme(b));
      CHECK(diphone_from_index(idx) == Diphone{Phoneme(a), Phoneme(b)});
      seen.insert(idx);
    }
  }
  CHECK(seen.size() == 1600);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 1599);
}

TEST_CASE("triphone expansion") {
  auto t = expand_triphones(seq("HH OW P"));
  REQUIRE(t.size() == 3);
  CHECK(t[0] == Triphone{Phoneme::sil(), Phoneme::from_symbol("HH"), Phoneme::from_symbol("OW")});
  CHECK(t[1] == Triphone{Phoneme::from_symbol("HH"), Phoneme::from_symbol("OW"), Phoneme::from_symbol("P")});
  CHECK(t[2] == Triphone{Phoneme::from_symbol("OW"), Phoneme::from_symbol("P"), Phoneme::sil()});
  CHECK(expand_triphones(seq("AH")) == std::vector<Triphone>{{Phoneme::sil(), Phoneme::from_symbol("AH"), Phoneme::sil()}});
  CHECK_THROWS_AS(expand_triphones(PhonemeSeq{}), InvalidArgument);
}

TEST_CASE("articulatory groups") {
  const auto& g = ArticulatoryGroups::standard();
  CHECK(g.group_names().size() == 14);
  CHECK(g.group_names()[g.group_of(Phoneme::from_symbol("P"))] == "Bilabial Sounds");
  CHECK(g.group_names()[g.group_of(Phoneme::sil())] == "SIL");
  for (int i = 0; i < kSilIndex; ++i) CHECK(g.group_of(Phoneme(i)) != g.group_of(Phoneme::sil()));
  CHECK(ArticulatoryGroups::from_csv(g.to_csv()) == g);
  CHECK_THROWS_AS(ArticulatoryGroups::from_csv("phoneme,group_name\nAA,Back Vowels\n"), ParseError);
}

namespace {

void check_partition(const SubclassTable& t) {
  std::vector<int> owner(t.num_subclasses(), -1);
  for (int c = 0; c < kNumPhonemes; ++c) {
    for (int s : t.members_of(c)) {
      REQUIRE(s >= 0);
      REQUIRE(s < t.num_subclasses());
      CHECK(owner[s] == -1);
      owner[s] = c;
      CHECK(t.main_of(s) == c);
    }
  }
  for (int o : owner) CHECK(o >= 0);
}

}  // namespace

TEST_CASE("subclass tables") {
  SUBCASE("diphone") {
    auto t = SubclassTable::diphone();
    CHECK(t.num_subclasses() == 1600);
    check_partition(t);
    auto m = t.members_of(Phoneme::from_symbol("OW").index());
    CHECK(m.size() == 40);
    for (int s : m) CHECK(diphone_from_index(s).cur == Phoneme::from_symbol("OW"));
    CHECK(t.labels_for(seq("HH OW P")).size() == 7);
    CHECK(t.phoneme_targets(seq("HH OW P")) == LabelSeq{15, 24, 26, kSilIndex});
  }
  SUBCASE("monophone") {
    auto t = SubclassTable::monophone();
    CHECK(t.num_subclasses() == 40);
    check_partition(t);
    CHECK(t.labels_for(seq("HH OW P")) == LabelSeq{15, 24, 26});
    CHECK(t.phoneme_targets(seq("HH OW P")) == LabelSeq{15, 24, 26});
  }
  SUBCASE("grouped") {
    auto t = SubclassTable::triphone_grouped();
    CHECK(t.num_subclasses() == 7840);
    check_partition(t);
    auto labels = t.labels_for(seq("HH OW P"));
    REQUIRE(labels.size() == 3);
    CHECK(t.main_of(labels[1]) == Phoneme::from_symbol("OW").index());
  }
  SUBCASE("top-K toy corpus") {
    const Phoneme a = Phoneme::from_symbol("AA"), b = Phoneme::from_symbol("B");
    std::vector<PhonemeSeq> corpus{{a, b, a, b}};
    auto t = SubclassTable::triphone_top_k(corpus, 1);
    CHECK(t.num_subclasses() == 40 + 40);
    check_partition(t);
    // B occurs in contexts (AA, AA) and (AA, SIL), once each; the tie goes to the lower context index.
    CHECK(t.triphone_id({a, b, a}) == b.index());
    CHECK(t.triphone_id({a, b, Phoneme::sil()}) == 40 + b.index());
    CHECK_THROWS_AS(SubclassTable::triphone_top_k(std::vector<PhonemeSeq>{}, 1), InvalidArgument);
  }
  SUBCASE("scheme parsing") {
    CHECK(parse_scheme("triphone-topk:8").k == 8);
    CHECK(parse_scheme("mono").scheme == SubclassScheme::Monophone);
    CHECK_THROWS_AS(parse_scheme("quadphone"), InvalidArgument);
    CHECK_THROWS_AS(parse_scheme("triphone-topk:0"), InvalidArgument);
  }
}

TEST_CASE("boundary rendering") {
  CHECK(render_with_boundaries(seq("HH OW P")) == "SIL HH OW P SIL.");
  CHECK(strip_boundary_sil(seq("SIL HH SIL OW SIL")) == seq("HH SIL OW"));
  CHECK(parse_phoneme_string("SIL HH OW P SIL.") == seq("SIL HH OW P SIL"));
}
