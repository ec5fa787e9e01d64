// src/normalize.cc

#include "svid/normalize.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>

#include "svid/error.h"

namespace svid {

double NormalQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) Fail(ErrorCode::kInvalidParam, "quantile probability outside (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

FeatureMatrix Cms(FeatureMatrix f) {
  if (f.values.rows() < 1) return f;
  const Eigen::RowVectorXd mean = f.values.colwise().mean();
  f.values.rowwise() -= mean;
  return f;
}

FeatureMatrix Cvn(FeatureMatrix f) {
  if (f.values.rows() < 1) return f;
  f = Cms(std::move(f));
  const double n = static_cast<double>(f.values.rows());
  for (Eigen::Index d = 0; d < f.values.cols(); ++d) {
    const double sd = std::sqrt(f.values.col(d).squaredNorm() / n);
    if (sd > 0.0) {
      f.values.col(d) /= sd;
    } else {
      f.values.col(d).setZero();
    }
  }
  return f;
}

RastaResult RastaFilter(const Matrix& x) {
  RastaResult out;
  const Eigen::Index t_count = x.rows();
  if (t_count < 5) {
    out.values = x;
    out.passthrough = true;
    return out;
  }
  static constexpr double kNumerator[5] = {0.2, 0.1, 0.0, -0.1, -0.2};
  static constexpr double kPole = 0.98;
  out.values = Matrix::Zero(t_count, x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    double prev = 0.0;
    for (Eigen::Index t = 0; t < t_count; ++t) {
      double acc = kPole * prev;
      for (Eigen::Index k = 0; k < 5 && k <= t; ++k) acc += kNumerator[k] * x(t - k, b);
      out.values(t, b) = acc;
      prev = acc;
    }
  }
  return out;
}

namespace {

// Rank (1-based) of column value at `t` among rows [lo, lo + w), ties by index.
int WindowRank(const Matrix& v, Eigen::Index d, Eigen::Index t, Eigen::Index lo, Eigen::Index w) {
  const double x = v(t, d);
  int rank = 1;
  for (Eigen::Index j = lo; j < lo + w; ++j) {
    const double y = v(j, d);
    if (y < x || (y == x && j < t)) ++rank;
  }
  return rank;
}

std::vector<double> QuantileTable(int w) {
  std::vector<double> q(static_cast<std::size_t>(w));
  for (int r = 1; r <= w; ++r) {
    q[static_cast<std::size_t>(r - 1)] = NormalQuantile((r - 0.5) / w);
  }
  return q;
}

// Full-utterance rank Gaussianization of every column, rescaled to unit
// population variance.
void MarginalGaussianize(Matrix& v) {
  const Eigen::Index t_count = v.rows();
  const auto table = QuantileTable(static_cast<int>(t_count));
  double mean = 0.0;
  for (double q : table) mean += q;
  mean /= static_cast<double>(t_count);
  double var = 0.0;
  for (double q : table) var += (q - mean) * (q - mean);
  const double sd = std::sqrt(var / static_cast<double>(t_count));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(t_count));
  for (Eigen::Index d = 0; d < v.cols(); ++d) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return v(a, d) < v(b, d); });
    for (std::size_t r = 0; r < order.size(); ++r) {
      v(order[r], d) = (table[r] - mean) / sd;
    }
  }
}

}  // namespace

WarpResult FeatureWarp(const FeatureMatrix& f, int window) {
  const Eigen::Index t_count = f.values.rows();
  if (t_count < 3) Fail(ErrorCode::kTooFewFrames, "feature warping needs at least 3 frames");
  if (window < 3 || window % 2 == 0) Fail(ErrorCode::kInvalidParam, "warp window must be odd and >= 3");
  WarpResult out;
  out.window = window;
  if (window > t_count) {
    out.window = static_cast<int>(t_count % 2 == 1 ? t_count : t_count - 1);
    out.shrunk = true;
  }
  const Eigen::Index w = out.window;
  const auto table = QuantileTable(out.window);
  out.features = f;
  for (Eigen::Index d = 0; d < f.values.cols(); ++d) {
    for (Eigen::Index t = 0; t < t_count; ++t) {
      const Eigen::Index lo = std::clamp<Eigen::Index>(t - w / 2, 0, t_count - w);
      const int rank = WindowRank(f.values, d, t, lo, w);
      out.features.values(t, d) = table[static_cast<std::size_t>(rank - 1)];
    }
  }
  return out;
}

FeatureMatrix ShortTimeGaussianize(const FeatureMatrix& f, int iters) {
  if (iters < 1) Fail(ErrorCode::kInvalidParam, "gaussianize iterations must be >= 1");
  const Eigen::Index t_count = f.values.rows();
  const Eigen::Index dim = f.values.cols();
  if (t_count <= dim) {
    Fail(ErrorCode::kTooFewFrames, "gaussianization needs more frames than dimensions");
  }
  FeatureMatrix out = f;
  Matrix& v = out.values;
  for (int it = 0; it < iters; ++it) {
    const Eigen::RowVectorXd mean = v.colwise().mean();
    v.rowwise() -= mean;
    const Eigen::MatrixXd cov = (v.transpose() * v) / static_cast<double>(t_count);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd inv_sqrt =
        eig.eigenvalues().array().max(1e-8).rsqrt().matrix();
    // Symmetric whitening: rotate into the eigenbasis, scale, rotate back.
    const Eigen::MatrixXd whitener =
        eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    v = v * whitener;
    MarginalGaussianize(v);
  }
  return out;
}

FeatureMatrix ApplyNormalizer(const FeatureMatrix& f, const NormalizerSpec& spec) {
  switch (spec.kind) {
    case NormalizerKind::kCms: return Cms(f);
    case NormalizerKind::kCvn: return Cvn(f);
    case NormalizerKind::kRasta: return f;
    case NormalizerKind::kWarp: return FeatureWarp(f, spec.warp_window).features;
    case NormalizerKind::kGaussianize: return ShortTimeGaussianize(f, spec.gaussianize_iters);
  }
  return f;
}

}  // namespace svid
