#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <Eigen/Dense>

#include "svid/error.h"
#include "svid/svm.h"
#include "oracles.h"

using namespace svid;
using svid::testing::DualObjective;
using svid::testing::ExhaustiveDual;

namespace {

Matrix Blobs(const std::vector<std::vector<double>>& centres, int per, double sd, std::uint64_t seed) {
  Rng r(seed);
  const int d = static_cast<int>(centres[0].size());
  Matrix m(static_cast<int>(centres.size()) * per, d);
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < d; ++j) m(c * per + i, j) = centres[c][j] + sd * r.Normal();
    }
  }
  return m;
}

std::vector<int> TwoClass(int per) {
  std::vector<int> y(2 * per, -1);
  std::fill(y.begin() + per, y.end(), 1);
  return y;
}

std::span<const double> Row(const Matrix& m, Eigen::Index i, Vector& buf) {
  buf = m.row(i).transpose();
  return {buf.data(), static_cast<std::size_t>(buf.size())};
}

double Score(const SvmModel& m, const Vector& x) {
  return PredictBinary(m, {x.data(), static_cast<std::size_t>(x.size())}).score;
}

std::vector<std::string> Labels(const std::vector<std::string>& names, int per) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    for (int i = 0; i < per; ++i) out.push_back(n);
  }
  return out;
}

}  // namespace

TEST_CASE("kernel examples") {
  const std::vector<double> x = {1, 2, 2};
  KernelSpec lin;
  CHECK(KernelEval(lin, x, x) == 9.0);
  KernelSpec rbf{KernelKind::kRbf, 2.0, false};
  CHECK(KernelEval(rbf, x, x) == 1.0);
  const std::vector<double> v = {1, 0, 2};
  CHECK(KernelEval(rbf, x, v) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  KernelSpec conv{KernelKind::kRbf, 2.0, true};
  CHECK(KernelEval(conv, x, v) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  CHECK_THROWS_AS(KernelEval(lin, x, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS((KernelSpec{KernelKind::kRbf, 0.0, false}.Validate()), Error);
}

TEST_CASE("kernel contracts over random vectors") {
  Rng r(1);
  for (int trial = 0; trial < 500; ++trial) {
    const int d = 1 + static_cast<int>(r.Index(40));
    std::vector<double> x(d), v(d);
    for (int j = 0; j < d; ++j) {
      x[j] = 3.0 * r.Normal();
      v[j] = 3.0 * r.Normal();
    }
    const double a = r.Uniform(-5.0, 5.0);
    std::vector<double> ax(d);
    for (int j = 0; j < d; ++j) ax[j] = a * x[j];
    KernelSpec lin;
    CHECK(KernelEval(lin, x, v) == KernelEval(lin, v, x));
    CHECK(KernelEval(lin, ax, v) == doctest::Approx(a * KernelEval(lin, x, v)).epsilon(1e-12).scale(1.0));
    const KernelSpec rbf{KernelKind::kRbf, r.Uniform(0.1, 100.0), trial % 2 == 1};
    const double k = KernelEval(rbf, x, v);
    CHECK(k == KernelEval(rbf, v, x));
    double d2 = 0.0;
    for (int j = 0; j < d; ++j) d2 += (x[j] - v[j]) * (x[j] - v[j]);
    const double expo = d2 / (2.0 * (rbf.conventional ? rbf.sigma * rbf.sigma : rbf.sigma));
    // Beyond exp(-700) the value underflows in double.
    if (expo < 700.0) CHECK(k > 0.0);
    else CHECK(k >= 0.0);
    CHECK(k <= 1.0);
    CHECK(KernelEval(rbf, x, x) == 1.0);
  }
}

TEST_CASE("gram matrix agrees with pointwise evaluation") {
  const Matrix x = Blobs({{0, 0, 0}, {2, 2, 2}}, 5, 1.0, 2);
  for (const KernelSpec spec : {KernelSpec{}, KernelSpec{KernelKind::kRbf, 3.0, false}}) {
    const Matrix g = GramMatrix(spec, x);
    Vector a, b;
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) {
        CHECK(g(i, j) == doctest::Approx(KernelEval(spec, Row(x, i, a), Row(x, j, b))).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("two point hand solution") {
  Matrix x(2, 1);
  x << -1.0, 1.0;
  const std::vector<int> y = {-1, 1};
  const auto m = TrainBinary(x, y, {}, 10.0);
  CHECK(m.support_vectors.rows() == 2);
  CHECK(m.dual_coefs.cwiseAbs().maxCoeff() == doctest::Approx(0.5));
  CHECK(m.dual_coefs.cwiseAbs().minCoeff() == doctest::Approx(0.5));
  CHECK(std::abs(m.bias) <= 1e-12);
  for (double p : {-3.0, -0.25, 0.7, 2.0}) CHECK(Score(m, Vector::Constant(1, p)) == doctest::Approx(p));
  const auto zero = PredictBinary(m, std::vector<double>{0.0});
  CHECK(zero.score == doctest::Approx(0.0).scale(1.0));
  CHECK(zero.label == 1);
  CHECK_THROWS_AS(PredictBinary(m, std::vector<double>{0.0, 1.0}), Error);
}

TEST_CASE("training errors") {
  Matrix x(3, 1);
  x << 0, 1, 2;
  try {
    TrainBinary(x, std::vector<int>{1, 1, 1}, {}, 1.0);
    FAIL("expected SingleClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingleClass);
  }
  CHECK_THROWS_AS(TrainBinary(x, std::vector<int>{-1, 1, 1}, {}, 0.0), Error);
}

TEST_CASE("separable blobs are classified perfectly") {
  const Matrix x = Blobs({{-3, -3}, {3, 3}}, 30, 1.0, 3);
  const auto y = TwoClass(30);
  const auto m = TrainBinary(x, y, {}, 1.0);
  CHECK(m.converged);
  Vector buf;
  for (int i = 0; i < 60; ++i) CHECK(PredictBinary(m, Row(x, i, buf)).label == y[i]);
}

TEST_CASE("dual feasibility and KKT conditions") {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    // Overlapping classes so some multipliers sit at C.
    const Matrix x = Blobs({{-1, 0, 0}, {1, 0, 0}}, 25, 1.2, seed);
    const auto y = TwoClass(25);
    for (const KernelSpec spec : {KernelSpec{}, KernelSpec{KernelKind::kRbf, 4.0, false}}) {
      const double c = 2.0;
      const Matrix g = GramMatrix(spec, x);
      std::vector<Eigen::Index> idx(50);
      std::iota(idx.begin(), idx.end(), 0);
      const auto sol = SolveDual(g, idx, y, c);
      CHECK(sol.converged);
      double balance = 0.0;
      for (int i = 0; i < 50; ++i) {
        CHECK(sol.alpha[i] >= 0.0);
        CHECK(sol.alpha[i] <= c);
        balance += sol.alpha[i] * y[i];
      }
      CHECK(std::abs(balance) <= 1e-6);
      for (int i = 0; i < 50; ++i) {
        double f = sol.bias;
        for (int j = 0; j < 50; ++j) f += sol.alpha[j] * y[j] * g(i, j);
        const double margin = y[i] * f;
        if (sol.alpha[i] <= 1e-8) CHECK(margin >= 1.0 - 1e-3);
        else if (sol.alpha[i] >= c - 1e-8) CHECK(margin <= 1.0 + 1e-3);
        else CHECK(std::abs(margin - 1.0) <= 1e-3);
      }
      CHECK(sol.objective == doctest::Approx(DualObjective(g, y, sol.alpha)).epsilon(1e-9));
    }
  }
}

TEST_CASE("hard margin support vectors sit on the margin") {
  const Matrix x = Blobs({{-2, 0}, {2, 0}}, 20, 0.7, 20);
  const auto m = TrainBinary(x, TwoClass(20), {}, 1e6);
  REQUIRE(m.support_vectors.rows() >= 2);
  for (int i = 0; i < m.support_vectors.rows(); ++i) {
    CHECK(std::abs(Score(m, m.support_vectors.row(i).transpose())) >= 1.0 - 1e-3);
  }
}

TEST_CASE("dual objective matches an exhaustive oracle on tiny instances") {
  Rng r(30);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(r.Index(3));
    Matrix x(n, 2);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = r.Normal();
      x(i, 1) = r.Normal();
      y[i] = i == 0 ? -1 : (i == 1 ? 1 : (r.Uniform() < 0.5 ? -1 : 1));
    }
    const double c = std::vector<double>{0.1, 1.0, 10.0}[trial % 3];
    const KernelSpec spec = trial % 2 == 0 ? KernelSpec{} : KernelSpec{KernelKind::kRbf, 0.5 + r.Uniform(), false};
    const auto m = TrainBinary(x, y, spec, c);
    const double oracle = ExhaustiveDual(GramMatrix(spec, x), y, c);
    CHECK(std::abs(m.objective - oracle) <= 1e-3 * std::max(1.0, std::abs(oracle)));
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("training order and duplication do not change the decision function") {
  const Matrix x = Blobs({{-2, 1, 0}, {2, -1, 0}}, 15, 0.8, 40);
  const auto y = TwoClass(15);
  const Matrix probes = Blobs({{0, 0, 0}}, 50, 3.0, 41);
  for (const KernelSpec spec : {KernelSpec{}, KernelSpec{KernelKind::kRbf, 6.0, false}}) {
    const auto base = TrainBinary(x, y, spec, 10.0);

    std::vector<int> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    Rng r(42);
    r.Shuffle(perm.begin(), perm.end());
    Matrix xp(30, 3);
    std::vector<int> yp(30);
    for (int i = 0; i < 30; ++i) {
      xp.row(i) = x.row(perm[i]);
      yp[i] = y[perm[i]];
    }
    const auto shuffled = TrainBinary(xp, yp, spec, 10.0);

    Matrix xd(60, 3);
    xd << x, x;
    std::vector<int> yd = y;
    yd.insert(yd.end(), y.begin(), y.end());
    const auto doubled = TrainBinary(xd, yd, spec, 10.0);

    for (int i = 0; i < probes.rows(); ++i) {
      const Vector p = probes.row(i).transpose();
      CHECK(std::abs(Score(base, p) - Score(shuffled, p)) <= 1e-6);
      CHECK(std::abs(Score(base, p) - Score(doubled, p)) <= 1e-6);
    }
  }
}

TEST_CASE("rbf decision values are lipschitz") {
  const Matrix x = Blobs({{-1, 0}, {1, 0}}, 20, 1.0, 50);
  const double sigma = 0.8;
  const auto m = TrainBinary(x, TwoClass(20), {KernelKind::kRbf, sigma, false}, 5.0);
  const double lip = m.dual_coefs.cwiseAbs().sum() / std::sqrt(sigma * std::exp(1.0));
  Rng r(51);
  for (int i = 0; i < 500; ++i) {
    Vector a(2), b(2);
    a << 2.0 * r.Normal(), 2.0 * r.Normal();
    b = a + Vector::Constant(2, 0.05 * r.Normal());
    CHECK(std::abs(Score(m, a) - Score(m, b)) <= lip * (a - b).norm() + 1e-12);
  }
}

TEST_CASE("standardizer") {
  Matrix x(4, 2);
  x << 1, 5, 3, 5, 5, 5, 7, 5;
  const auto s = Standardizer::Fit(x);
  CHECK(s.mean[0] == 4.0);
  CHECK(s.scale[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(s.scale[1] == 1.0);
  const Matrix z = s.Apply(x);
  CHECK(z.col(1).isZero(0.0));
  CHECK(z.col(0).squaredNorm() / 4.0 == doctest::Approx(1.0));
}

TEST_CASE("multiclass pair counts and agreement with the binary model") {
  std::vector<std::vector<double>> centres;
  std::vector<std::string> names;
  for (int i = 0; i < 14; ++i) {
    centres.push_back({10.0 * std::cos(0.45 * i), 10.0 * std::sin(0.45 * i)});
    names.push_back("spk" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  }
  const Matrix x = Blobs(centres, 3, 0.3, 60);
  const auto m = TrainMulticlass(x, Labels(names, 3), {}, 1.0);
  CHECK(m.pairs.size() == 91);
  CHECK(m.classes == names);

  const Matrix two = Blobs({{-2, 0}, {2, 0}}, 10, 1.0, 61);
  const auto mc = TrainMulticlass(two, Labels({"a", "b"}, 10), {}, 1.0);
  REQUIRE(mc.pairs.size() == 1);
  const auto bin = TrainBinary(two, TwoClass(10), {}, 1.0);
  Rng r(62);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> p = {3.0 * r.Normal(), 3.0 * r.Normal()};
    const bool pos = PredictBinary(bin, p).label == 1;
    // Class 0 ("a") is the positive side of the pair.
    CHECK(mc.PredictLabel(p) == (pos ? "b" : "a"));
  }
}

TEST_CASE("multiclass resubstitution on three blobs") {
  const Matrix x = Blobs({{0, 5}, {5, -3}, {-5, -3}}, 12, 0.8, 70);
  const auto labels = Labels({"x", "y", "z"}, 12);
  Vector buf;
  for (const KernelSpec spec : {KernelSpec{}, KernelSpec{KernelKind::kRbf, 2.0, false}}) {
    const auto m = TrainMulticlass(x, labels, spec, 10.0);
    for (int i = 0; i < 36; ++i) CHECK(m.PredictLabel(Row(x, i, buf)) == labels[i]);
  }
}

TEST_CASE("stratified folds") {
  std::vector<std::string> names;
  for (int i = 0; i < 14; ++i) names.push_back("s" + std::to_string(i));
  const auto labels = Labels(names, 8);
  const auto folds = StratifiedFolds(labels, 10, 42);
  std::vector<int> sizes(10, 0);
  for (int f : folds) ++sizes.at(f);
  for (int s : sizes) CHECK((s == 11 || s == 12));
  CHECK(std::accumulate(sizes.begin(), sizes.end(), 0) == 112);
  CHECK(StratifiedFolds(labels, 10, 42) == folds);
  // No class puts more than one sample in a fold when it has fewer than 10.
  for (int c = 0; c < 14; ++c) {
    std::vector<int> used(10, 0);
    for (int i = 0; i < 8; ++i) CHECK(++used[folds[c * 8 + i]] == 1);
  }
}

TEST_CASE("cross validation") {
  const Matrix x = Blobs({{-4, 0}, {4, 0}, {0, 6}}, 10, 0.7, 80);
  const auto labels = Labels({"a", "b", "c"}, 10);
  CvGrid single = CvGrid::Parse("C=3;sigma=1.5");
  single.folds = 5;
  const auto one = CrossValidate(x, labels, single, KernelKind::kRbf);
  CHECK(one.best_c == 3.0);
  CHECK(one.best_sigma == 1.5);
  CHECK(one.scores.size() == 1);
  CHECK(one.fold_accuracies.size() == 5);

  CvGrid grid;
  grid.folds = 5;
  const auto lin = CrossValidate(x, labels, grid, KernelKind::kLinear);
  CHECK(lin.best_accuracy == 1.0);
  CHECK(lin.best_c == 0.1);  // ties go to the smallest C
  const auto rbf = CrossValidate(x, labels, grid, KernelKind::kRbf);
  CHECK(rbf.best_accuracy == 1.0);
  CHECK(rbf.scores.size() == 16);
  CHECK(CrossValidate(x, labels, grid, KernelKind::kRbf, false, 3).scores.size() == 16);

  const auto parsed = CvGrid::Parse(grid.ToString());
  CHECK(parsed.c_values == grid.c_values);
  CHECK(parsed.sigma_auto);
  CHECK_THROWS_AS(CvGrid::Parse("C=;sigma=auto"), Error);
}

TEST_CASE("median pairwise squared distance") {
  Matrix x(4, 1);
  x << 0, 1, 3, 7;
  // Distances^2: 1 9 49 4 36 16 -> median of six values (9 + 16) / 2.
  CHECK(MedianPairwiseSquaredDistance(x) == 12.5);
}

TEST_CASE("model file round trip") {
  const Matrix x = Blobs({{0, 5}, {5, -3}, {-5, -3}}, 6, 0.8, 90);
  const auto labels = Labels({"x", "y", "z"}, 6);
  const auto m = TrainMulticlass(x, labels, {KernelKind::kRbf, 2.0, true}, 10.0);
  const auto path = std::filesystem::temp_directory_path() / "svid_test.svsm";
  WriteSvm(path, m);
  const auto back = ReadSvm(path);
  CHECK(back.classes == m.classes);
  CHECK(back.kernel.conventional);
  Rng r(91);
  for (int i = 0; i < 30; ++i) {
    const std::vector<double> p = {4.0 * r.Normal(), 4.0 * r.Normal()};
    CHECK(back.Predict(p).score_sums == m.Predict(p).score_sums);
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) + 1);
  CHECK_THROWS_AS(ReadSvm(path), Error);
}
