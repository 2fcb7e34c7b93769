#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "sfd/error.hpp"
#include "sfd/matrix.hpp"
#include "sfd/rng.hpp"
#include "sfd/threading.hpp"

using sfd::Matrix;
using sfd::RngStream;

namespace {

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

void check_close(const Matrix& a, const Matrix& b, double tol) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(tol));
  }
}

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.next_normal();
  return m;
}

}  // namespace

TEST_CASE("rng: same seed, same sequence; different seed, different") {
  RngStream a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 16; ++i) {
    const auto va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng: children keyed by identity, not consumption") {
  RngStream root(7);
  RngStream before = root.child("model");
  root.next_u64();
  root.next_u64();
  root.next_u64();
  RngStream after = root.child("model");
  for (int i = 0; i < 8; ++i) CHECK(before.next_u64() == after.next_u64());
}

TEST_CASE("rng: distinct labels and indices give distinct streams") {
  RngStream root(7);
  CHECK(root.child("a").key() != root.child("b").key());
  CHECK(root.child("a", 0).key() != root.child("a", 1).key());
  CHECK(root.child(0).key() != root.child(1).key());
  // Two-argument child is exactly label-then-index chaining.
  CHECK(root.child("a", 3).key() == root.child("a").child(3).key());
  CHECK(root.child("a", 3).next_u64() == root.child("a").child(3).next_u64());
}

TEST_CASE("rng: next_double range and mean") {
  RngStream rng(11);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("rng: next_normal moments") {
  RngStream rng(13);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.next_normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng: next_below bounds, coverage, and error") {
  RngStream rng(17);
  CHECK_THROWS_AS(rng.next_below(0), sfd::ParameterError);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.next_below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) {
    CHECK(c > 800);
    CHECK(c < 1200);
  }
}

TEST_CASE("rng: shuffle permutes and is deterministic") {
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  RngStream a(3), b(3), c(4);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(20);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
  std::vector<int> u = expect;
  c.shuffle(u);
  CHECK(u != v);
}

TEST_CASE("rng: pick gives distinct in-range indices") {
  RngStream rng(5);
  CHECK_THROWS_AS(rng.pick(3, 4), sfd::ParameterError);
  const auto ids = rng.pick(100, 10);
  REQUIRE(ids.size() == 10);
  std::set<std::uint32_t> uniq(ids.begin(), ids.end());
  CHECK(uniq.size() == 10);
  for (auto i : ids) CHECK(i < 100);
  // k = n is a full permutation.
  const auto all = rng.pick(8, 8);
  std::set<std::uint32_t> full(all.begin(), all.end());
  CHECK(full.size() == 8);
}

TEST_CASE("matmul: hand oracle") {
  Matrix a(2, 2), b(2, 2);
  a.data = {1, 2, 3, 4};
  b.data = {5, 6, 7, 8};
  const Matrix c = matmul(a, b);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
}

TEST_CASE("matmul variants agree with explicit transposition") {
  RngStream rng(23);
  const Matrix a = random_matrix(5, 4, rng);
  const Matrix b = random_matrix(6, 4, rng);
  check_close(matmul_nt(a, b), matmul(a, transpose(b)), 1e-12);
  const Matrix c = random_matrix(5, 3, rng);
  check_close(matmul_tn(a, c), matmul(transpose(a), c), 1e-12);
  CHECK_THROWS_AS(matmul(a, c), sfd::ShapeError);
}

TEST_CASE("gaussian_gram: unit diagonal, exact symmetry, hand value") {
  RngStream rng(29);
  const Matrix x = random_matrix(6, 3, rng);
  const Matrix g = gaussian_gram(x, x, 0.7);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(g.at(i, i) == 1.0);
    for (std::size_t j = 0; j < 6; ++j) CHECK(g.at(i, j) == g.at(j, i));
  }

  Matrix p(1, 1), q(1, 1);
  p.at(0, 0) = 0.0;
  q.at(0, 0) = 1.0;
  CHECK(gaussian_gram(p, q, 1.0).at(0, 0) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-15));

  CHECK_THROWS_AS(gaussian_gram(p, q, 0.0), sfd::ParameterError);
  Matrix wide(1, 2);
  CHECK_THROWS_AS(gaussian_gram(p, wide, 1.0), sfd::ShapeError);
}

TEST_CASE("gaussian_gram: sampled positive semidefiniteness") {
  RngStream rng(31);
  const Matrix x = random_matrix(8, 2, rng);
  const Matrix g = gaussian_gram(x, x, 1.1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(8);
    for (double& e : v) e = rng.next_normal();
    double quad = 0.0;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) quad += v[i] * g.at(i, j) * v[j];
    CHECK(quad >= -1e-10);
  }
}

TEST_CASE("solve_spd: hand oracle") {
  Matrix a(2, 2);
  a.data = {4, 1, 1, 3};
  const std::vector<double> b = {1, 2};
  const auto v = solve_spd(a, b);
  CHECK(v[0] == doctest::Approx(1.0 / 11).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(7.0 / 11).epsilon(1e-12));
}

TEST_CASE("solve_spd: residual contract on random SPD systems") {
  RngStream rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_below(30);
    const Matrix m = random_matrix(n, n, rng);
    Matrix a = matmul_tn(m, m);
    for (std::size_t i = 0; i < n; ++i) a.at(i, i) += 0.1;
    std::vector<double> b(n);
    for (double& e : b) e = rng.next_normal();
    const auto v = solve_spd(a, b);
    double bmax = 0.0;
    for (double e : b) bmax = std::max(bmax, std::abs(e));
    for (std::size_t i = 0; i < n; ++i) {
      double r = -b[i];
      for (std::size_t j = 0; j < n; ++j) r += a.at(i, j) * v[j];
      CHECK(std::abs(r) <= 1e-8 * std::max(1.0, bmax));
    }
  }
}

TEST_CASE("solve_spd: indefinite and asymmetric inputs are rejected") {
  Matrix indef(2, 2);
  indef.data = {1, 0, 0, -1};
  const std::vector<double> b = {1, 1};
  try {
    solve_spd(indef, b);
    FAIL("expected NumericalError");
  } catch (const sfd::NumericalError& e) {
    CHECK(e.pivot_index == 1);
  }

  Matrix asym(2, 2);
  asym.data = {1, 2, 0, 1};
  CHECK_THROWS_AS(solve_spd(asym, b), sfd::ParameterError);

  Matrix rect(2, 3);
  CHECK_THROWS_AS(solve_spd(rect, b), sfd::ShapeError);
}

TEST_CASE("quantile: lower empirical rule on {1,2,3,4}") {
  const std::vector<double> v = {3, 1, 4, 2};  // unsorted on purpose
  CHECK(sfd::quantile(v, 0.0) == 1);
  CHECK(sfd::quantile(v, 0.25) == 1);
  CHECK(sfd::quantile(v, 0.26) == 2);
  CHECK(sfd::quantile(v, 0.5) == 2);
  CHECK(sfd::quantile(v, 0.75) == 3);
  CHECK(sfd::quantile(v, 1.0) == 4);
}

TEST_CASE("quantile: monotone in q, errors on bad input") {
  RngStream rng(41);
  std::vector<double> v(57);
  for (double& e : v) e = rng.next_normal();
  double prev = sfd::quantile(v, 0.0);
  for (double q = 0.05; q <= 1.0; q += 0.05) {
    const double cur = sfd::quantile(v, q);
    CHECK(cur >= prev);
    prev = cur;
  }
  CHECK_THROWS_AS(sfd::quantile(std::vector<double>{}, 0.5),
                  sfd::ParameterError);
  CHECK_THROWS_AS(sfd::quantile(v, -0.1), sfd::ParameterError);
  CHECK_THROWS_AS(sfd::quantile(v, 1.1), sfd::ParameterError);
  CHECK_THROWS_AS(sfd::quantile(v, std::nan("")), sfd::ParameterError);
}

TEST_CASE("softmax: oracle values, shift invariance, overflow safety") {
  const std::vector<double> logits = {0.0, std::log(2.0)};
  const auto p = sfd::softmax(logits);
  CHECK(p[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));

  const std::vector<double> equal = {5.0, 5.0, 5.0, 5.0};
  for (double e : sfd::softmax(equal)) CHECK(e == doctest::Approx(0.25));

  const std::vector<double> shifted = {1000.0, 1000.0 + std::log(2.0)};
  const auto ps = sfd::softmax(shifted);
  CHECK(ps[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(ps[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));

  const std::vector<double> huge = {1000.0, 0.0};
  const auto ph = sfd::softmax(huge);
  CHECK(std::isfinite(ph[0]));
  CHECK(ph[0] + ph[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax_rows matches per-row softmax; argmax breaks ties low") {
  RngStream rng(43);
  const Matrix logits = random_matrix(4, 5, rng);
  const Matrix p = softmax_rows(logits);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto row = sfd::softmax(logits.row_span(i));
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(p.at(i, j) == doctest::Approx(row[j]).epsilon(1e-15));
    CHECK(sfd::argmax(p.row_span(i)) == sfd::argmax(logits.row_span(i)));
  }
  const std::vector<double> ties = {1.0, 3.0, 3.0, 2.0};
  CHECK(sfd::argmax(ties) == 1);
}

TEST_CASE("threading: SFD_THREADS parsing and schedule independence") {
  setenv("SFD_THREADS", "3", 1);
  CHECK(sfd::max_threads() == 3);
  setenv("SFD_THREADS", "abc", 1);
  CHECK_THROWS_AS(sfd::max_threads(), sfd::ConfigError);
  setenv("SFD_THREADS", "0", 1);
  CHECK_THROWS_AS(sfd::max_threads(), sfd::ConfigError);
  unsetenv("SFD_THREADS");
  CHECK(sfd::max_threads() >= 1);

  for (const char* threads : {"1", "4"}) {
    setenv("SFD_THREADS", threads, 1);
    std::vector<int> slots(100, -1);
    sfd::parallel_for(100, [&](std::size_t i) {
      slots[i] = static_cast<int>(i * i);
    });
    for (int i = 0; i < 100; ++i) REQUIRE(slots[i] == i * i);
  }

  setenv("SFD_THREADS", "4", 1);
  CHECK_THROWS_AS(sfd::parallel_for(
                      10,
                      [](std::size_t i) {
                        if (i == 5) throw sfd::StateError("boom");
                      }),
                  sfd::StateError);
  unsetenv("SFD_THREADS");
}
