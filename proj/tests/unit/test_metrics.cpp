#include <cmath>
#include <vector>

#include "doctest.h"
#include "fmp/error.hpp"
#include "fmp/fmp.hpp"
#include "fmp/metrics.hpp"
#include "fmp/rng.hpp"
#include "oracle/oracle.hpp"

using fmp::Matrix;

TEST_SUITE("metrics") {

TEST_CASE("demographic parity") {
  const std::vector<int> s{1, 1, -1, -1};
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const std::vector<int> equal{1, 0, 1, 0}, skew{1, 1, 1, 0}, same{1, 1, 1, 1};
  CHECK(fmp::demographic_parity(equal, s, all) == 0.0);
  CHECK(fmp::demographic_parity(skew, s, all) == 0.5);
  CHECK(fmp::demographic_parity(same, s, all) == 0.0);
  const std::vector<std::size_t> one_group{0, 1};
  try {
    fmp::demographic_parity(skew, s, one_group);
    FAIL("expected empty group");
  } catch (const fmp::Error& e) {
    CHECK(e.code() == fmp::ErrorCode::empty_group);
  }
}

TEST_CASE("equal opportunity") {
  const std::vector<int> y{1, 1};
  const std::vector<int> s{1, -1};
  const std::vector<std::size_t> all{0, 1};
  const std::vector<int> pred{1, 0};
  CHECK(fmp::equal_opportunity(pred, y, s, all) == 1.0);
  CHECK(fmp::equal_opportunity(y, y, s, all) == 0.0);
  const std::vector<int> y4{1, 0, 1, 0}, s4{1, 1, -1, -1}, p4{1, 1, 1, 1};
  const std::vector<std::size_t> all4{0, 1, 2, 3};
  CHECK(fmp::equal_opportunity(p4, y4, s4, all4) == 0.0);
  const std::vector<int> no_pos{1, 0};
  CHECK_THROWS_AS(fmp::equal_opportunity(pred, no_pos, s, all), fmp::Error);
}

TEST_CASE("accuracy") {
  const std::vector<int> y{1, 0, 1, 1};
  const std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(fmp::accuracy(y, y, all) == 1.0);
  const std::vector<int> wrong{0, 1, 0, 0}, three{1, 0, 1, 0};
  CHECK(fmp::accuracy(wrong, y, all) == 0.0);
  CHECK(fmp::accuracy(three, y, all) == 0.75);
  CHECK_THROWS_AS(fmp::accuracy(y, y, std::vector<std::size_t>{}), fmp::Error);
}

TEST_CASE("argmax ties go to the lower class") {
  CHECK(fmp::predict_labels(Matrix::from_rows({{1, 1}, {0, 2}, {3, -1}})) == std::vector<int>{0, 1, 0});
}

TEST_CASE("group relabeling and permutation invariance") {
  fmp::Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(30);
    auto s = oracle::random_groups(rng, n);
    std::vector<int> y(n), yh(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
      yh[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    y[0] = y[n - 1] = 1;
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const double dp = fmp::demographic_parity(yh, s, all);
    const double eo = fmp::equal_opportunity(yh, y, s, all);
    std::vector<int> flipped = s;
    for (int& v : flipped) v = -v;
    CHECK(fmp::demographic_parity(yh, flipped, all) == dp);
    CHECK(fmp::equal_opportunity(yh, y, flipped, all) == eo);
    const auto d = fmp::incident_vector(s), fd = fmp::incident_vector(flipped);
    for (std::size_t i = 0; i < n; ++i) CHECK(fd.values[i] == -d.values[i]);

    std::vector<std::size_t> perm = all;
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<int> ps(n), py(n), pyh(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = s[perm[i]];
      py[i] = y[perm[i]];
      pyh[i] = yh[perm[i]];
    }
    CHECK(fmp::demographic_parity(pyh, ps, all) == doctest::Approx(dp).epsilon(1e-15));
    CHECK(fmp::equal_opportunity(pyh, py, ps, all) == doctest::Approx(eo).epsilon(1e-15));
  }
}

TEST_CASE("group-mean identity of the fairness objective") {
  fmp::Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(40), d = 1 + rng.below(4);
    const auto s = oracle::random_groups(rng, n);
    const Matrix f = oracle::random_matrix(rng, n, d, 3.0);
    const Matrix p = fmp::fairness_objective(f, fmp::incident_vector(s), 1.0).p;
    const oracle::Mat y = oracle::softmax_rows(oracle::to_eigen(f));
    for (std::size_t j = 0; j < d; ++j) {
      double pos = 0, neg = 0, np = 0, nn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = y(static_cast<long>(i), static_cast<long>(j));
        if (s[i] == 1) {
          pos += v;
          np += 1;
        } else {
          neg += v;
          nn += 1;
        }
      }
      CHECK(std::abs(p(0, j) - (pos / np - neg / nn)) <= 1e-12);
    }
  }
}

TEST_CASE("compute_metrics marks undefined gaps as NaN") {
  const Matrix logits = Matrix::from_rows({{1, 0}, {0, 1}, {0, 1}});
  const std::vector<int> y{0, 1, 1}, s{1, 1, -1};
  const std::vector<std::size_t> subset{0, 1};
  const auto r = fmp::compute_metrics(logits, y, s, subset);
  CHECK(r.accuracy == 1.0);
  CHECK(std::isnan(r.dp));
  CHECK(std::isnan(r.eo));
  CHECK(std::isnan(r.fairness_obj));
  const std::vector<std::size_t> all{0, 1, 2};
  const auto full = fmp::compute_metrics(logits, y, s, all);
  CHECK(full.dp == 0.5);
  CHECK(full.n_eval == 3);
}

}  // TEST_SUITE
