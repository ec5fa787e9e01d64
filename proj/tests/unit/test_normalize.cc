#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "svid/error.h"
#include "svid/normalize.h"

using namespace svid;

namespace {

FeatureMatrix Track(const Matrix& m) { return {m, "", 8.0, std::vector<std::uint8_t>(m.rows(), 0)}; }

Matrix RandomMatrix(int t, int d, std::uint64_t seed) {
  Rng r(seed);
  Matrix m(t, d);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = 3.0 * r.Normal() + j;
  }
  return m;
}

double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double Corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(NormalQuantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(NormalQuantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(NormalQuantile(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-12));
  // Phi(x) loses digits near 1, so the upper tail is covered by symmetry.
  for (double x = -6.0; x <= 0.0; x += 0.25) {
    CHECK(NormalQuantile(Phi(x)) == doctest::Approx(x).epsilon(1e-9));
    CHECK(NormalQuantile(1.0 - Phi(x)) == doctest::Approx(-x).epsilon(1e-6));
  }
  CHECK(NormalQuantile(0.2) == doctest::Approx(-NormalQuantile(0.8)).epsilon(1e-14));
}

TEST_CASE("cms zeroes the mean and is idempotent") {
  const auto f = Cms(Track(RandomMatrix(200, 6, 1)));
  CHECK(f.values.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
  const auto g = Cms(f);
  CHECK((g.values - f.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("cvn gives zero mean unit variance and is affine invariant") {
  const Matrix x = RandomMatrix(300, 5, 2);
  const auto f = Cvn(Track(x));
  CHECK(f.values.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
  for (int d = 0; d < 5; ++d) {
    CHECK(f.values.col(d).squaredNorm() / 300.0 == doctest::Approx(1.0).epsilon(1e-8));
  }
  Matrix y = x;
  for (int d = 0; d < 5; ++d) y.col(d) = (2.0 + d) * x.col(d).array() - 7.0;
  CHECK((Cvn(Track(y)).values - f.values).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((Cvn(f).values - f.values).cwiseAbs().maxCoeff() <= 1e-9);

  Matrix c = x;
  c.col(2).setConstant(4.0);
  const auto h = Cvn(Track(c));
  CHECK(h.values.col(2).isZero(0.0));
}

TEST_CASE("rasta matches the difference equation") {
  Rng r(3);
  Matrix x(60, 3);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = r.Normal();
  }
  x(0, 0) = 1.0;
  const auto out = RastaFilter(x);
  CHECK_FALSE(out.passthrough);
  for (int j = 0; j < 3; ++j) {
    auto in = [&](int n) { return n < 0 ? 0.0 : x(n, j); };
    double prev = 0.0;
    for (int n = 0; n < 60; ++n) {
      const double y = 0.98 * prev + 0.1 * (2.0 * in(n) + in(n - 1) - in(n - 3) - 2.0 * in(n - 4));
      CHECK(out.values(n, j) == doctest::Approx(y).epsilon(1e-12));
      prev = y;
    }
  }
}

TEST_CASE("rasta impulse response and dc rejection") {
  Matrix impulse = Matrix::Zero(10, 1);
  impulse(0, 0) = 1.0;
  const auto h = RastaFilter(impulse).values;
  CHECK(h(0, 0) == doctest::Approx(0.2));
  CHECK(h(1, 0) == doctest::Approx(0.98 * 0.2 + 0.1));
  CHECK(h(2, 0) == doctest::Approx(0.98 * h(1, 0)));

  const auto c = RastaFilter(Matrix::Constant(600, 2, 5.0)).values;
  for (int t = 500; t < 600; ++t) CHECK(std::abs(c(t, 0)) < 1e-3);

  const Matrix a = Matrix::Random(40, 2), b = Matrix::Random(40, 2);
  const Matrix lin = RastaFilter(3.0 * a + b).values - 3.0 * RastaFilter(a).values - RastaFilter(b).values;
  CHECK(lin.cwiseAbs().maxCoeff() <= 1e-12);

  const Matrix tiny = Matrix::Random(4, 3);
  const auto p = RastaFilter(tiny);
  CHECK(p.passthrough);
  CHECK(p.values == tiny);
}

TEST_CASE("feature warp small windows") {
  Matrix x(3, 1);
  x << 1.0, 5.0, 9.0;
  // Centre frame of a 3-frame window: 5 is the median, rank 2 -> Phi^-1(0.5).
  auto w = FeatureWarp(Track(x), 3);
  CHECK(w.features.values(1, 0) == doctest::Approx(0.0).epsilon(1e-15));

  Matrix y(5, 1);
  y << 3.0, 4.0, 0.5, 8.0, 9.0;
  w = FeatureWarp(Track(y), 5);
  CHECK(w.features.values(2, 0) == doctest::Approx(NormalQuantile(0.1)));
  CHECK(w.features.values(2, 0) == doctest::Approx(-1.2815515655446004).epsilon(1e-10));
  CHECK(w.features.values(4, 0) == doctest::Approx(-NormalQuantile(0.1)));
}

TEST_CASE("feature warp is invariant to monotone maps and uses the quantile set") {
  const Matrix x = RandomMatrix(120, 3, 4);
  const auto a = FeatureWarp(Track(x), 31);
  CHECK_FALSE(a.shrunk);
  const Matrix y = x.array().exp() * 2.0 + 1.0;
  const auto b = FeatureWarp(Track(y), 31);
  CHECK(a.features.values == b.features.values);
  std::set<double> allowed;
  for (int r = 1; r <= 31; ++r) allowed.insert(NormalQuantile((r - 0.5) / 31.0));
  for (Eigen::Index i = 0; i < a.features.values.size(); ++i) {
    const double v = a.features.values.data()[i];
    const auto it = allowed.lower_bound(v - 1e-12);
    REQUIRE(it != allowed.end());
    CHECK(std::abs(*it - v) <= 1e-12);
  }
}

TEST_CASE("feature warp shrinks an oversized window") {
  const auto w = FeatureWarp(Track(RandomMatrix(20, 2, 5)), 301);
  CHECK(w.shrunk);
  CHECK(w.window == 19);
  CHECK(FeatureWarp(Track(RandomMatrix(21, 2, 5)), 301).window == 21);
  CHECK_THROWS_AS(FeatureWarp(Track(RandomMatrix(20, 2, 5)), 4), Error);
  CHECK_THROWS_AS(FeatureWarp(Track(RandomMatrix(2, 2, 5)), 3), Error);
}

TEST_CASE("gaussianization whitens and keeps the ordering") {
  Rng r(6);
  const int t = 5000;
  Matrix x(t, 3);
  for (int i = 0; i < t; ++i) {
    const double u = r.Uniform();
    const double e = std::exp(r.Normal());
    x(i, 0) = u;
    x(i, 1) = e;
    x(i, 2) = 0.8 * u + 0.2 * r.Normal();
  }
  const auto g = ShortTimeGaussianize(Track(x), 1);
  const Matrix& v = g.values;
  CHECK(v.colwise().mean().cwiseAbs().maxCoeff() <= 1e-8);
  for (int d = 0; d < 3; ++d) {
    const double var = (v.col(d).array() - v.col(d).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Dimension 1 is almost independent of the others, so whitening barely
  // rotates it and the marginal map is monotone.
  CHECK(std::abs(Corr(x.col(1), v.col(1))) >= 0.7);
  CHECK(Corr(x.col(1).array().log().matrix(), v.col(1)) >= 0.99);

  double before = 0.0, after = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      before = std::max(before, std::abs(Corr(x.col(i), x.col(j))));
      after = std::max(after, std::abs(Corr(v.col(i), v.col(j))));
    }
  }
  CHECK(after <= before);
  CHECK(after <= 0.05);
  CHECK_THROWS_AS(ShortTimeGaussianize(Track(RandomMatrix(3, 3, 1)), 1), Error);
}
