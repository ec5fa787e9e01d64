// src/gmm.cc

#include "svid/gmm.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>

#include "svid/error.h"

namespace svid {

namespace {

// Fixed block size: per-block statistics are reduced in block order, so the
// result is identical for any worker count.
constexpr Eigen::Index kBlockRows = 1024;

std::size_t NumBlocks(Eigen::Index rows) {
  return static_cast<std::size_t>((rows + kBlockRows - 1) / kBlockRows);
}

std::pair<Eigen::Index, Eigen::Index> BlockRange(std::size_t b, Eigen::Index rows) {
  const Eigen::Index lo = static_cast<Eigen::Index>(b) * kBlockRows;
  return {lo, std::min(kBlockRows, rows - lo)};
}

constexpr double kLog2Pi = 1.8378770664093454836;

// Log of w_k N(x; m_k, diag v_k) for every row of x and component k.
class ComponentScorer {
 public:
  explicit ComponentScorer(const GmmModel& m) {
    inv_var_ = m.variances.cwiseInverse();
    mean_over_var_ = m.means.cwiseProduct(inv_var_);
    constant_.resize(m.num_components());
    for (int k = 0; k < m.num_components(); ++k) {
      const double w = m.weights[k];
      const double log_w = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
      double c = 0.0;
      for (int d = 0; d < m.dim(); ++d) {
        c += kLog2Pi + std::log(m.variances(k, d)) + m.means(k, d) * mean_over_var_(k, d);
      }
      constant_[k] = log_w - 0.5 * c;
    }
  }

  Matrix Score(const Eigen::Ref<const Matrix>& x) const {
    Matrix out = x * mean_over_var_.transpose();
    out -= 0.5 * (x.array().square().matrix() * inv_var_.transpose());
    out.rowwise() += constant_.transpose();
    return out;
  }

 private:
  Matrix inv_var_;
  Matrix mean_over_var_;
  Vector constant_;
};

// Converts row-wise log scores into posteriors in place; returns sum of the
// per-row log normalizers.
double NormalizeRows(Matrix& logp) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < logp.rows(); ++t) {
    const double mx = logp.row(t).maxCoeff();
    const double lse = mx + std::log((logp.row(t).array() - mx).exp().sum());
    // Posteriors below e^-700 are zeroed; subnormals would stall the products.
    const auto shifted = (logp.row(t).array() - lse).eval();
    logp.row(t) = (shifted < -700.0).select(0.0, shifted.exp()).matrix();
    total += lse;
  }
  return total;
}

void CheckFrames(const GmmModel& model, const Matrix& frames) {
  if (frames.cols() != model.dim()) {
    Fail(ErrorCode::kDimMismatch, "frames have dim " + std::to_string(frames.cols()) +
                                      ", model has " + std::to_string(model.dim()));
  }
}

struct Stats {
  Vector occupancy;  // K
  Matrix first;      // K x D
  Matrix second;     // K x D
  double log_likelihood = 0.0;
};

Stats Accumulate(const GmmModel& model, const Matrix& data, int jobs, bool need_second) {
  const ComponentScorer scorer(model);
  const std::size_t n_blocks = NumBlocks(data.rows());
  std::vector<Stats> partial(n_blocks);
  ParallelFor(n_blocks, jobs, [&](std::size_t b) {
    const auto [lo, len] = BlockRange(b, data.rows());
    const auto x = data.middleRows(lo, len);
    Matrix post = scorer.Score(x);
    Stats& s = partial[b];
    s.log_likelihood = NormalizeRows(post);
    s.occupancy = post.colwise().sum().transpose();
    s.first = post.transpose() * x;
    if (need_second) s.second = post.transpose() * x.array().square().matrix();
  });
  Stats total;
  total.occupancy = Vector::Zero(model.num_components());
  total.first = Matrix::Zero(model.num_components(), model.dim());
  if (need_second) total.second = Matrix::Zero(model.num_components(), model.dim());
  for (const auto& s : partial) {
    total.occupancy += s.occupancy;
    total.first += s.first;
    if (need_second) total.second += s.second;
    total.log_likelihood += s.log_likelihood;
  }
  return total;
}

}  // namespace

void GmmModel::Validate() const {
  const auto k = weights.size();
  if (k < 1 || means.rows() != k || variances.rows() != k || means.cols() != variances.cols() ||
      means.cols() < 1) {
    Fail(ErrorCode::kShapeMismatch, "inconsistent GMM shapes");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-8 || (weights.array() < 0.0).any()) {
    Fail(ErrorCode::kInvalidParam, "GMM weights must be a probability vector");
  }
  if (!(variances.array() > 0.0).all()) Fail(ErrorCode::kInvalidParam, "GMM variances must be positive");
}

Matrix KMeansInit(const Matrix& data, int num_components, std::uint64_t seed, int jobs) {
  const Eigen::Index n = data.rows();
  if (num_components < 1) Fail(ErrorCode::kInvalidParam, "K must be >= 1");
  if (n < num_components) {
    Fail(ErrorCode::kTooFewPoints, std::to_string(n) + " points for K=" +
                                       std::to_string(num_components));
  }
  const auto k_count = static_cast<Eigen::Index>(num_components);

  // Seed-deterministic initial centres drawn without replacement.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < k_count; ++i) {
    const auto j = static_cast<Eigen::Index>(i + static_cast<Eigen::Index>(rng.Index(static_cast<std::size_t>(n - i))));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Matrix centers(k_count, data.cols());
  for (Eigen::Index i = 0; i < k_count; ++i) centers.row(i) = data.row(idx[static_cast<std::size_t>(i)]);

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  const std::size_t n_blocks = NumBlocks(n);
  for (int iter = 0; iter < 100; ++iter) {
    const Vector center_norms = centers.rowwise().squaredNorm();
    std::vector<char> changed(n_blocks, 0);
    ParallelFor(n_blocks, jobs, [&](std::size_t b) {
      const auto [lo, len] = BlockRange(b, n);
      const auto x = data.middleRows(lo, len);
      Matrix d2 = -2.0 * (x * centers.transpose());
      d2.rowwise() += center_norms.transpose();
      for (Eigen::Index r = 0; r < len; ++r) {
        Eigen::Index best;
        d2.row(r).minCoeff(&best);
        const auto t = static_cast<std::size_t>(lo + r);
        if (assign[t] != best) changed[b] = 1;
        assign[t] = best;
        dist[t] = (data.row(lo + r) - centers.row(best)).squaredNorm();
      }
    });
    const bool any_change = std::any_of(changed.begin(), changed.end(), [](char c) { return c != 0; });
    if (!any_change && iter > 0) break;

    Matrix sums = Matrix::Zero(k_count, data.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k_count), 0);
    for (Eigen::Index t = 0; t < n; ++t) {
      sums.row(assign[static_cast<std::size_t>(t)]) += data.row(t);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(t)])];
    }
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (counts[static_cast<std::size_t>(k)] > 0) {
        centers.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
        continue;
      }
      // Empty cluster: move it to the point worst served by its centre.
      const auto far = static_cast<Eigen::Index>(
          std::max_element(dist.begin(), dist.end()) - dist.begin());
      centers.row(k) = data.row(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
    }
  }
  return centers;
}

TrainResult TrainUbm(const Matrix& data, const TrainConfig& cfg) {
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();
  if (cfg.num_components < 1) Fail(ErrorCode::kInvalidParam, "K must be >= 1");
  if (!(cfg.rel_tol > 0.0)) Fail(ErrorCode::kInvalidParam, "rel_tol must be > 0");
  if (cfg.max_iters < 1) Fail(ErrorCode::kInvalidParam, "max_iters must be >= 1");
  if (dim < 1) Fail(ErrorCode::kInvalidParam, "feature dimension must be >= 1");
  if (n < cfg.num_components) {
    Fail(ErrorCode::kTooFewPoints, std::to_string(n) + " frames for K=" +
                                       std::to_string(cfg.num_components));
  }

  const Eigen::RowVectorXd global_mean = data.colwise().mean();
  const Eigen::RowVectorXd global_var =
      (data.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(n);
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (!(global_var[d] > 0.0)) {
      Fail(ErrorCode::kDegenerateData, "zero variance in dimension " + std::to_string(d));
    }
  }
  const Eigen::RowVectorXd floor = cfg.variance_floor_factor * global_var;

  TrainResult result;
  result.few_points = n < 10 * static_cast<Eigen::Index>(cfg.num_components);
  GmmModel& model = result.model;
  const Eigen::Index k_count = cfg.num_components;
  model.means = KMeansInit(data, cfg.num_components, cfg.seed, cfg.jobs);
  model.weights = Vector::Constant(k_count, 1.0 / static_cast<double>(k_count));
  model.variances = global_var.replicate(k_count, 1).cwiseMax(floor.replicate(k_count, 1));

  const double inv_n = 1.0 / static_cast<double>(n);
  for (int iter = 0;; ++iter) {
    const Stats s = Accumulate(model, data, cfg.jobs, /*need_second=*/true);
    const double ll = s.log_likelihood * inv_n;
    if (!result.ll_trace.empty()) {
      const double prev = result.ll_trace.back();
      if ((ll - prev) / std::abs(prev) < cfg.rel_tol) {
        result.ll_trace.push_back(ll);
        break;
      }
    }
    result.ll_trace.push_back(ll);
    if (iter == cfg.max_iters) break;

    for (Eigen::Index k = 0; k < k_count; ++k) {
      const double occ = s.occupancy[k];
      model.weights[k] = occ * inv_n;
      if (occ <= 1e-10) continue;  // keep a starved component's parameters
      const Eigen::RowVectorXd mean = s.first.row(k) / occ;
      const Eigen::RowVectorXd var = s.second.row(k) / occ - mean.array().square().matrix();
      model.means.row(k) = mean;
      model.variances.row(k) = var.cwiseMax(floor);
    }
    model.weights /= model.weights.sum();
    result.iterations = iter + 1;
  }
  return result;
}

double LogLikelihood(const GmmModel& model, const Matrix& frames) {
  CheckFrames(model, frames);
  if (frames.rows() < 1) Fail(ErrorCode::kEmpty, "no frames");
  return Accumulate(model, frames, 1, false).log_likelihood / static_cast<double>(frames.rows());
}

Matrix Posteriors(const GmmModel& model, const Matrix& frames) {
  CheckFrames(model, frames);
  Matrix post = ComponentScorer(model).Score(frames);
  NormalizeRows(post);
  return post;
}

GmmModel MapAdaptMeans(const GmmModel& ubm, const Matrix& frames, double relevance) {
  CheckFrames(ubm, frames);
  if (frames.rows() < 1) Fail(ErrorCode::kEmpty, "no frames to adapt on");
  if (!(relevance > 0.0)) Fail(ErrorCode::kInvalidParam, "relevance factor must be > 0");
  const Stats s = Accumulate(ubm, frames, 1, false);
  GmmModel adapted = ubm;
  for (Eigen::Index k = 0; k < ubm.weights.size(); ++k) {
    const double occ = s.occupancy[k];
    if (!(occ > 0.0)) continue;
    const double alpha = occ / (occ + relevance);
    adapted.means.row(k) = alpha * (s.first.row(k) / occ) + (1.0 - alpha) * ubm.means.row(k);
  }
  return adapted;
}

Supervector MakeSupervector(const GmmModel& model, const GmmModel& ubm,
                            SupervectorScaling scaling) {
  if (model.num_components() != ubm.num_components() || model.dim() != ubm.dim()) {
    Fail(ErrorCode::kShapeMismatch, "model and UBM shapes differ");
  }
  const Eigen::Index k_count = model.num_components();
  const Eigen::Index dim = model.dim();
  Supervector sv;
  sv.scaling = scaling;
  sv.values.resize(k_count * dim);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      double v = model.means(k, d);
      if (scaling == SupervectorScaling::kKl) {
        v *= std::sqrt(ubm.weights[k]) / std::sqrt(ubm.variances(k, d));
      }
      sv.values[k * dim + d] = v;
    }
  }
  return sv;
}

// ---------------------------------------------------------------------------
// Binary files

namespace {

constexpr std::uint32_t kGmmVersion = 1;

class Writer {
 public:
  explicit Writer(const char (&magic)[5]) : out_(magic, 4) {}
  template <typename T>
  void Put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void Save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f.write(out_.data(), static_cast<std::streamsize>(out_.size()))) {
      Fail(ErrorCode::kIoError, "cannot write " + path.string());
    }
  }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::filesystem::path& path, const char (&magic)[5]) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) Fail(ErrorCode::kIoError, "cannot open " + path.string());
    in_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    if (in_.size() < 4 || std::memcmp(in_.data(), magic, 4) != 0) {
      Fail(ErrorCode::kFormatError, "bad magic in " + path.string());
    }
    pos_ = 4;
  }
  template <typename T>
  T Take() {
    if (pos_ + sizeof(T) > in_.size()) Fail(ErrorCode::kFormatError, "truncated " + path_.string());
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void ExpectEnd() const {
    if (pos_ != in_.size()) Fail(ErrorCode::kFormatError, "trailing bytes in " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::string in_;
  std::size_t pos_ = 0;
};

}  // namespace

void WriteGmm(const std::filesystem::path& path, const GmmModel& model) {
  Writer w("SVGM");
  w.Put<std::uint32_t>(kGmmVersion);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(model.num_components()));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(model.dim()));
  for (Eigen::Index k = 0; k < model.weights.size(); ++k) w.Put<double>(model.weights[k]);
  for (Eigen::Index i = 0; i < model.means.size(); ++i) w.Put<double>(model.means.data()[i]);
  for (Eigen::Index i = 0; i < model.variances.size(); ++i) w.Put<double>(model.variances.data()[i]);
  w.Save(path);
}

GmmModel ReadGmm(const std::filesystem::path& path) {
  Reader r(path, "SVGM");
  if (r.Take<std::uint32_t>() != kGmmVersion) Fail(ErrorCode::kFormatError, "unsupported GMM version");
  const auto k = r.Take<std::uint32_t>();
  const auto d = r.Take<std::uint32_t>();
  if (k == 0 || d == 0 || k > (1u << 20) || d > (1u << 16)) Fail(ErrorCode::kFormatError, "implausible GMM shape");
  GmmModel m;
  m.weights.resize(k);
  m.means.resize(k, d);
  m.variances.resize(k, d);
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) m.weights[i] = r.Take<double>();
  for (Eigen::Index i = 0; i < m.means.size(); ++i) m.means.data()[i] = r.Take<double>();
  for (Eigen::Index i = 0; i < m.variances.size(); ++i) m.variances.data()[i] = r.Take<double>();
  r.ExpectEnd();
  m.Validate();
  return m;
}

void WriteSupervector(const std::filesystem::path& path, const Supervector& sv) {
  Writer w("SVSV");
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(sv.values.size()));
  w.Put<std::uint8_t>(static_cast<std::uint8_t>(sv.scaling));
  for (Eigen::Index i = 0; i < sv.values.size(); ++i) w.Put<double>(sv.values[i]);
  w.Save(path);
}

Supervector ReadSupervector(const std::filesystem::path& path) {
  Reader r(path, "SVSV");
  const auto len = r.Take<std::uint32_t>();
  const auto tag = r.Take<std::uint8_t>();
  if (tag > 1) Fail(ErrorCode::kFormatError, "unknown supervector scaling tag");
  Supervector sv;
  sv.scaling = static_cast<SupervectorScaling>(tag);
  sv.values.resize(len);
  for (Eigen::Index i = 0; i < sv.values.size(); ++i) sv.values[i] = r.Take<double>();
  r.ExpectEnd();
  sv.source = path.stem().string();
  return sv;
}

}  // namespace svid
