#include <cmath>

#include "dcond/ctc.hpp"
#include "dcond/error.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dcond;

namespace {

MatrixD log_rows(std::initializer_list<std::initializer_list<double>> rows) {
  MatrixD m(rows.size(), rows.begin()->size());
  int t = 0;
  for (auto r : rows) {
    int c = 0;
    for (double v : r) m(t, c++) = std::log(v);
    ++t;
  }
  return m;
}

// One-hot posteriorgram (up to a tiny floor) along a frame path.
MatrixD path_posteriorgram(const std::vector<int>& path, int classes, double floor = 0.0) {
  MatrixD m = MatrixD::Constant(path.size(), classes, floor);
  for (std::size_t t = 0; t < path.size(); ++t) m(t, path[t]) = 1.0 - floor * (classes - 1);
  return m.array().log();
}

}  // namespace

TEST_CASE("ctc_loss worked examples") {
  SUBCASE("single frame") {
    auto r = ctc_loss(log_rows({{0.2, 0.5, 0.3}}), {1});
    CHECK(r.loss == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("two uniform frames, three alignments") {
    auto r = ctc_loss(log_rows({{0.5, 0.5}, {0.5, 0.5}}), {0});
    CHECK(r.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  }
  SUBCASE("repeat needs a blank") {
    CHECK_THROWS_AS(ctc_loss(log_rows({{0.2, 0.5, 0.3}}), {0, 0}), Unalignable);
    CHECK_THROWS_AS(ctc_loss_bruteforce(log_rows({{0.2, 0.5, 0.3}}), {0, 0}), Unalignable);
  }
  SUBCASE("labels longer than frames") {
    CHECK_THROWS_AS(ctc_loss(log_rows({{0.2, 0.5, 0.3}}), {0, 1}), Unalignable);
  }
  SUBCASE("zero-probability alignments are unalignable") {
    MatrixD post = log_rows({{1.0, 0.0, 0.0}});
    CHECK_THROWS_AS(ctc_loss(post, {1}), Unalignable);
  }
}

TEST_CASE("ctc_loss matches brute force on random instances") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> frames(1, 6), classes(2, 4);
  int checked = 0;
  for (int i = 0; i < 600; ++i) {
    const int t = frames(rng), c = classes(rng);
    std::uniform_int_distribution<int> len(1, 3), lab(0, c - 2);
    LabelSeq labels(len(rng));
    for (auto& l : labels) l = lab(rng);
    if (ctc_min_frames(labels) > t) {
      CHECK_THROWS_AS(ctc_loss(test::random_posteriorgram(rng, t, c), labels), Unalignable);
      continue;
    }
    MatrixD post = test::random_posteriorgram(rng, t, c);
    CHECK(std::abs(ctc_loss(post, labels).loss - ctc_loss_bruteforce(post, labels)) <= 1e-9);
    ++checked;
  }
  CHECK(checked > 300);
}

TEST_CASE("ctc gradient matches central differences") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = 5, c = 6;
    std::normal_distribution<double> n(0.0, 1.5);
    MatrixD logits(t, c);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < c; ++j) logits(i, j) = n(rng);
    const LabelSeq labels{1, 3, 3};
    auto r = ctc_loss(log_softmax_rows(logits), labels);
    for (int i = 0; i < t; ++i) CHECK(std::abs(r.grad.row(i).sum()) <= 1e-8);
    const double h = 1e-5;
    double max_rel = 0.0;
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < c; ++j) {
        MatrixD up = logits, down = logits;
        up(i, j) += h;
        down(i, j) -= h;
        const double fd = (ctc_loss(log_softmax_rows(up), labels).loss - ctc_loss(log_softmax_rows(down), labels).loss) / (2 * h);
        max_rel = std::max(max_rel, std::abs(fd - r.grad(i, j)) / std::max(1e-6, std::abs(fd) + std::abs(r.grad(i, j))));
      }
    }
    CHECK(max_rel <= 1e-4);
  }
}

TEST_CASE("occupancy agrees with the gradient") {
  std::mt19937_64 rng(9);
  MatrixD post = test::random_posteriorgram(rng, 7, 5);
  const LabelSeq labels{0, 2, 0};
  double loss = 0.0;
  MatrixD occ = ctc_log_occupancy(post, labels, &loss);
  auto r = ctc_loss(post, labels);
  CHECK(loss == doctest::Approx(r.loss).epsilon(1e-12));
  for (int t = 0; t < 7; ++t) {
    CHECK(occ.row(t).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int c = 0; c < 5; ++c) CHECK(r.grad(t, c) == doctest::Approx(std::exp(post(t, c)) - std::exp(occ(t, c))).epsilon(1e-9));
  }
  CHECK(ctc_neg_log_likelihood(post, labels) == doctest::Approx(r.loss).epsilon(1e-12));
}

TEST_CASE("certain alignment has zero loss") {
  // classes a=0, b=1, blank=2; path [-, a, a, -, b]
  MatrixD post = path_posteriorgram({2, 0, 0, 2, 1}, 3);
  CHECK(std::abs(ctc_loss(post, {0, 1}).loss) <= 1e-9);
  CHECK(best_path_decode(post) == LabelSeq{0, 1});
}

TEST_CASE("best path decoding") {
  CHECK(best_path_decode(path_posteriorgram({2, 0, 0, 2, 1}, 3, 0.01)) == LabelSeq{0, 1});
  CHECK(best_path_decode(path_posteriorgram({0, 0, 2, 0}, 3, 0.01)) == LabelSeq{0, 0});
  CHECK(best_path_decode(path_posteriorgram({2, 2, 2}, 3, 0.01)).empty());
  CHECK(timestamps_of_best_path(path_posteriorgram({2, 0, 0, 2, 1}, 3, 0.01)) == std::vector<int>{1, 4});
  CHECK(timestamps_of_best_path(path_posteriorgram({2, 2}, 3, 0.01)).empty());
  CHECK(timestamps_of_best_path(path_posteriorgram({0, 1}, 3, 0.01)) == std::vector<int>{0, 1});
  // Ties go to the lowest index.
  MatrixD tie = MatrixD::Constant(1, 3, std::log(1.0 / 3));
  CHECK(best_path_decode(tie) == LabelSeq{0});
}

TEST_CASE("posteriorgram helpers") {
  std::mt19937_64 rng(3);
  MatrixD post = test::random_posteriorgram(rng, 4, 6);
  CHECK_NOTHROW(check_posteriorgram(post));
  MatrixD bad = post;
  bad(0, 0) += 1.0;
  CHECK_THROWS_AS(check_posteriorgram(bad), InvalidArgument);
  MatrixD ls = log_softmax_rows(post.array() + 3.0);
  CHECK((ls - post).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(ctc_loss_bruteforce(test::random_posteriorgram(rng, 12, 4), {0}), InvalidArgument);
}
