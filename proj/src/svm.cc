// src/svm.cc

#include "svid/svm.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "svid/error.h"

namespace svid {

void KernelSpec::Validate() const {
  if (kind == KernelKind::kRbf && !(sigma > 0.0)) {
    Fail(ErrorCode::kInvalidParam, "rbf sigma must be positive");
  }
}

double KernelSpec::FromSquaredDistance(double d2) const {
  const double denom = conventional ? 2.0 * sigma * sigma : 2.0 * sigma;
  return std::exp(-d2 / denom);
}

double KernelEval(const KernelSpec& spec, std::span<const double> x, std::span<const double> v) {
  if (x.size() != v.size()) {
    Fail(ErrorCode::kLengthMismatch, "kernel arguments of length " + std::to_string(x.size()) +
                                         " and " + std::to_string(v.size()));
  }
  spec.Validate();
  double acc = 0.0;
  if (spec.kind == KernelKind::kLinear) {
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * v[i];
    return acc;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - v[i];
    acc += diff * diff;
  }
  return spec.FromSquaredDistance(acc);
}

Matrix GramMatrix(const KernelSpec& spec, const Matrix& x) {
  spec.Validate();
  Matrix dots = x * x.transpose();
  if (spec.kind == KernelKind::kLinear) return dots;
  const Vector norms = dots.diagonal();
  Matrix gram(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    gram(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      const double d2 = std::max(0.0, norms[i] + norms[j] - 2.0 * dots(i, j));
      gram(i, j) = gram(j, i) = spec.FromSquaredDistance(d2);
    }
  }
  return gram;
}

// ---------------------------------------------------------------------------
// Dual solver

DualSolution SolveDual(const Matrix& gram, std::span<const Eigen::Index> idx,
                       std::span<const int> y, double c, const SolverOptions& opts) {
  const std::size_t n = idx.size();
  if (y.size() != n) Fail(ErrorCode::kLengthMismatch, "labels and samples differ in count");
  if (!(c > 0.0)) Fail(ErrorCode::kInvalidParam, "C must be positive");
  bool has_pos = false, has_neg = false;
  for (int label : y) {
    if (label == 1) {
      has_pos = true;
    } else if (label == -1) {
      has_neg = true;
    } else {
      Fail(ErrorCode::kInvalidParam, "binary labels must be +1 or -1");
    }
  }
  if (!has_pos || !has_neg) Fail(ErrorCode::kSingleClass, "both classes are required");

  constexpr double kTau = 1e-12;
  auto k = [&](std::size_t a, std::size_t b) { return gram(idx[a], idx[b]); };
  auto q = [&](std::size_t a, std::size_t b) { return static_cast<double>(y[a] * y[b]) * k(a, b); };

  DualSolution sol;
  std::vector<double>& alpha = sol.alpha;
  alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto at_upper = [&](std::size_t t) { return alpha[t] >= c; };
  auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  sol.converged = false;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    // Second-order working-set selection.
    double g_max = -std::numeric_limits<double>::infinity();
    double g_max2 = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!at_upper(t) && -grad[t] >= g_max) {
          g_max = -grad[t];
          i = t;
        }
      } else if (!at_lower(t) && grad[t] >= g_max) {
        g_max = grad[t];
        i = t;
      }
    }
    std::size_t j = n;
    double best_obj = std::numeric_limits<double>::infinity();
    if (i != n) {
      const double k_ii = k(i, i);
      for (std::size_t t = 0; t < n; ++t) {
        if (y[t] == 1) {
          if (at_lower(t)) continue;
          const double diff = g_max + grad[t];
          g_max2 = std::max(g_max2, grad[t]);
          if (diff > 0.0) {
            double quad = k_ii + k(t, t) - 2.0 * y[i] * k(i, t);
            if (quad <= 0.0) quad = kTau;
            const double obj = -(diff * diff) / quad;
            if (obj <= best_obj) {
              best_obj = obj;
              j = t;
            }
          }
        } else {
          if (at_upper(t)) continue;
          const double diff = g_max - grad[t];
          g_max2 = std::max(g_max2, -grad[t]);
          if (diff > 0.0) {
            double quad = k_ii + k(t, t) + 2.0 * y[i] * k(i, t);
            if (quad <= 0.0) quad = kTau;
            const double obj = -(diff * diff) / quad;
            if (obj <= best_obj) {
              best_obj = obj;
              j = t;
            }
          }
        }
      }
    }
    if (i == n || j == n || g_max + g_max2 < opts.kkt_tolerance) {
      sol.converged = true;
      sol.iterations = iter;
      break;
    }

    // Analytic two-variable update with clipping to the box.
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double q_ij = q(i, j);
    if (y[i] != y[j]) {
      double quad = k(i, i) + k(j, j) + 2.0 * q_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = k(i, i) + k(j, j) - 2.0 * q_ij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double d_i = alpha[i] - old_i;
    const double d_j = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * d_i + q(j, t) * d_j;
    sol.iterations = iter + 1;
  }

  // Bias: average over free vectors, else the midpoint of the feasible range.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] == -1) upper = std::min(upper, yg); else lower = std::max(lower, yg);
    } else if (at_lower(t)) {
      if (y[t] == 1) upper = std::min(upper, yg); else lower = std::max(lower, yg);
    } else {
      ++n_free;
      free_sum += yg;
    }
  }
  const double rho = n_free > 0 ? free_sum / n_free : 0.5 * (upper + lower);
  sol.bias = -rho;

  double obj = 0.0;
  for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (1.0 - grad[t]);
  sol.objective = 0.5 * obj;
  return sol;
}

namespace {

constexpr double kSupportThreshold = 1e-8;

// Lexicographic row order, so a training set is solved identically whatever
// order it arrives in.
void CanonicalOrder(const Matrix& x, std::vector<Eigen::Index>& idx) {
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      if (x(a, d) != x(b, d)) return x(a, d) < x(b, d);
    }
    return false;
  });
}

SvmModel ModelFromSolution(const Matrix& x, std::span<const Eigen::Index> idx,
                           std::span<const int> y, const DualSolution& sol,
                           const KernelSpec& kernel, double c) {
  std::vector<std::size_t> sv;
  for (std::size_t t = 0; t < idx.size(); ++t) {
    if (sol.alpha[t] > kSupportThreshold) sv.push_back(t);
  }
  SvmModel m;
  m.kernel = kernel;
  m.c = c;
  m.bias = sol.bias;
  m.objective = sol.objective;
  m.converged = sol.converged;
  m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  m.dual_coefs.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    m.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(idx[sv[s]]);
    m.dual_coefs[static_cast<Eigen::Index>(s)] = sol.alpha[sv[s]] * y[sv[s]];
  }
  return m;
}

}  // namespace

SvmModel TrainBinary(const Matrix& x, std::span<const int> y, const KernelSpec& kernel, double c) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    Fail(ErrorCode::kLengthMismatch, "samples and labels differ in count");
  }
  kernel.Validate();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  CanonicalOrder(x, idx);
  std::vector<int> labels(idx.size());
  for (std::size_t t = 0; t < idx.size(); ++t) labels[t] = y[static_cast<std::size_t>(idx[t])];
  const Matrix gram = GramMatrix(kernel, x);
  const DualSolution sol = SolveDual(gram, idx, labels, c);
  return ModelFromSolution(x, idx, labels, sol, kernel, c);
}

BinaryDecision PredictBinary(const SvmModel& model, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != model.support_vectors.cols()) {
    Fail(ErrorCode::kLengthMismatch, "input dimension " + std::to_string(x.size()) +
                                         " != model dimension " +
                                         std::to_string(model.support_vectors.cols()));
  }
  double score = model.bias;
  const auto dim = static_cast<std::size_t>(model.support_vectors.cols());
  for (Eigen::Index s = 0; s < model.support_vectors.rows(); ++s) {
    const std::span<const double> sv(model.support_vectors.data() + s * model.support_vectors.cols(), dim);
    score += model.dual_coefs[s] * KernelEval(model.kernel, x, sv);
  }
  return {score, score >= 0.0 ? 1 : -1};
}

// ---------------------------------------------------------------------------
// Standardization

Standardizer Standardizer::Fit(const Matrix& x) {
  Standardizer s;
  s.enabled = true;
  const double n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    const double var = (x.col(d).array() - s.mean[d]).square().sum() / n;
    s.scale[d] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::Apply(const Matrix& x) const {
  if (!enabled) return x;
  Matrix out = x.rowwise() - mean.transpose();
  out.array().rowwise() /= scale.transpose().array();
  return out;
}

Vector Standardizer::Apply(std::span<const double> x) const {
  Vector v = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  if (!enabled) return v;
  return ((v - mean).array() / scale.array()).matrix();
}

// ---------------------------------------------------------------------------
// One-vs-one multiclass

namespace {

struct PairSolution {
  int positive;
  int negative;
  std::vector<Eigen::Index> idx;  // rows of the shared gram matrix
  std::vector<double> coefs;      // alpha * y, same order as idx
  double bias;
};

// Trains every class pair on the rows `subset` of a shared kernel matrix.
std::vector<PairSolution> TrainPairs(const Matrix& x, const Matrix& gram,
                                     std::span<const Eigen::Index> subset,
                                     const std::vector<int>& class_of, int n_classes, double c) {
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(n_classes));
  for (Eigen::Index r : subset) members[static_cast<std::size_t>(class_of[static_cast<std::size_t>(r)])].push_back(r);
  std::vector<PairSolution> out;
  for (int a = 0; a < n_classes; ++a) {
    for (int b = a + 1; b < n_classes; ++b) {
      const auto& ma = members[static_cast<std::size_t>(a)];
      const auto& mb = members[static_cast<std::size_t>(b)];
      if (ma.empty() || mb.empty()) continue;
      PairSolution p{a, b, {}, {}, 0.0};
      std::vector<Eigen::Index> idx(ma);
      idx.insert(idx.end(), mb.begin(), mb.end());
      CanonicalOrder(x, idx);
      std::vector<int> y(idx.size());
      for (std::size_t t = 0; t < idx.size(); ++t) {
        y[t] = class_of[static_cast<std::size_t>(idx[t])] == a ? 1 : -1;
      }
      const DualSolution sol = SolveDual(gram, idx, y, c);
      for (std::size_t t = 0; t < idx.size(); ++t) {
        if (sol.alpha[t] > kSupportThreshold) {
          p.idx.push_back(idx[t]);
          p.coefs.push_back(sol.alpha[t] * y[t]);
        }
      }
      p.bias = sol.bias;
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <typename ScoreFn>
MulticlassPrediction Vote(int n_classes, std::size_t n_pairs, ScoreFn score_of,
                          const std::function<std::pair<int, int>(std::size_t)>& classes_of) {
  MulticlassPrediction pred;
  pred.votes.assign(static_cast<std::size_t>(n_classes), 0);
  pred.score_sums.assign(static_cast<std::size_t>(n_classes), 0.0);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const double s = score_of(p);
    const auto [pos, neg] = classes_of(p);
    const int winner = s >= 0.0 ? pos : neg;
    ++pred.votes[static_cast<std::size_t>(winner)];
    pred.score_sums[static_cast<std::size_t>(winner)] += std::abs(s);
  }
  for (int k = 0; k < n_classes; ++k) {
    if (pred.class_index < 0) {
      pred.class_index = k;
      continue;
    }
    const auto best = static_cast<std::size_t>(pred.class_index);
    const auto cand = static_cast<std::size_t>(k);
    if (pred.votes[cand] > pred.votes[best] ||
        (pred.votes[cand] == pred.votes[best] && pred.score_sums[cand] > pred.score_sums[best])) {
      pred.class_index = k;
    }
  }
  return pred;
}

struct LabelIndex {
  std::vector<std::string> classes;
  std::vector<int> class_of;
};

LabelIndex IndexLabels(const std::vector<std::string>& labels) {
  LabelIndex li;
  li.classes = labels;
  std::sort(li.classes.begin(), li.classes.end());
  li.classes.erase(std::unique(li.classes.begin(), li.classes.end()), li.classes.end());
  li.class_of.reserve(labels.size());
  for (const auto& l : labels) {
    li.class_of.push_back(static_cast<int>(
        std::lower_bound(li.classes.begin(), li.classes.end(), l) - li.classes.begin()));
  }
  return li;
}

}  // namespace

int MulticlassSvm::dim() const {
  return pairs.empty() ? 0 : static_cast<int>(pairs.front().model.support_vectors.cols());
}

MulticlassPrediction MulticlassSvm::Predict(std::span<const double> x) const {
  if (pairs.empty()) Fail(ErrorCode::kInvalidParam, "empty multiclass model");
  const Vector z = standardizer.Apply(x);
  const std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
  return Vote(
      static_cast<int>(classes.size()), pairs.size(),
      [&](std::size_t p) { return PredictBinary(pairs[p].model, zs).score; },
      [&](std::size_t p) { return std::pair{pairs[p].positive, pairs[p].negative}; });
}

const std::string& MulticlassSvm::PredictLabel(std::span<const double> x) const {
  return classes[static_cast<std::size_t>(Predict(x).class_index)];
}

MulticlassSvm TrainMulticlass(const Matrix& x, const std::vector<std::string>& labels,
                              const KernelSpec& kernel, double c) {
  return TrainMulticlass(x, labels, kernel, c, kernel.kind == KernelKind::kRbf);
}

MulticlassSvm TrainMulticlass(const Matrix& x, const std::vector<std::string>& labels,
                              const KernelSpec& kernel, double c, bool standardize) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    Fail(ErrorCode::kLengthMismatch, "samples and labels differ in count");
  }
  kernel.Validate();
  const LabelIndex li = IndexLabels(labels);
  if (li.classes.size() < 2) Fail(ErrorCode::kSingleClass, "need at least two classes");

  MulticlassSvm model;
  model.classes = li.classes;
  model.kernel = kernel;
  model.c = c;
  if (standardize) model.standardizer = Standardizer::Fit(x);
  const Matrix z = model.standardizer.Apply(x);
  const Matrix gram = GramMatrix(kernel, z);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(x.rows()));
  std::iota(all.begin(), all.end(), 0);
  const int n_classes = static_cast<int>(li.classes.size());
  for (auto& p : TrainPairs(z, gram, all, li.class_of, n_classes, c)) {
    PairModel pm{p.positive, p.negative, {}};
    pm.model.kernel = kernel;
    pm.model.c = c;
    pm.model.bias = p.bias;
    pm.model.support_vectors.resize(static_cast<Eigen::Index>(p.idx.size()), z.cols());
    pm.model.dual_coefs.resize(static_cast<Eigen::Index>(p.idx.size()));
    for (std::size_t s = 0; s < p.idx.size(); ++s) {
      pm.model.support_vectors.row(static_cast<Eigen::Index>(s)) = z.row(p.idx[s]);
      pm.model.dual_coefs[static_cast<Eigen::Index>(s)] = p.coefs[s];
    }
    model.pairs.push_back(std::move(pm));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Cross-validation

CvGrid CvGrid::Parse(std::string_view text) {
  CvGrid grid;
  grid.c_values.clear();
  bool saw_c = false;
  auto parse_list = [](std::string_view s, std::string_view key) {
    std::vector<double> out;
    std::string item;
    std::istringstream in{std::string(s)};
    while (std::getline(in, item, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size() || !(v > 0.0)) throw std::invalid_argument(item);
        out.push_back(v);
      } catch (const std::exception&) {
        Fail(ErrorCode::kConfigError, "bad value '" + item + "' in grid key " + std::string(key));
      }
    }
    if (out.empty()) Fail(ErrorCode::kEmptyGrid, "no values for " + std::string(key));
    return out;
  };
  std::string part;
  std::istringstream in{std::string(text)};
  while (std::getline(in, part, ';')) {
    part.erase(std::remove_if(part.begin(), part.end(), ::isspace), part.end());
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) Fail(ErrorCode::kConfigError, "grid entry without '=': " + part);
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    if (key == "C" || key == "c") {
      grid.c_values = parse_list(value, key);
      saw_c = true;
    } else if (key == "sigma") {
      if (value == "auto") {
        grid.sigma_auto = true;
        grid.sigma_values.clear();
      } else {
        grid.sigma_auto = false;
        grid.sigma_values = parse_list(value, key);
      }
    } else {
      Fail(ErrorCode::kConfigError, "unknown grid key '" + key + "'");
    }
  }
  if (!saw_c) grid.c_values = CvGrid{}.c_values;
  return grid;
}

std::string CvGrid::ToString() const {
  std::ostringstream out;
  out << "C=";
  for (std::size_t i = 0; i < c_values.size(); ++i) out << (i ? "," : "") << c_values[i];
  out << ";sigma=";
  if (sigma_auto) {
    out << "auto";
  } else {
    for (std::size_t i = 0; i < sigma_values.size(); ++i) out << (i ? "," : "") << sigma_values[i];
  }
  return out.str();
}

std::vector<int> StratifiedFolds(const std::vector<std::string>& labels, int folds,
                                 std::uint64_t seed) {
  if (folds < 2) Fail(ErrorCode::kInvalidParam, "need at least 2 folds");
  const LabelIndex li = IndexLabels(labels);
  std::vector<int> fold_of(labels.size(), 0);
  int next = 0;
  for (std::size_t k = 0; k < li.classes.size(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (li.class_of[t] == static_cast<int>(k)) members.push_back(t);
    }
    Rng rng(MixSeed(seed, k));
    rng.Shuffle(members.begin(), members.end());
    for (std::size_t m : members) {
      fold_of[m] = next;
      next = (next + 1) % folds;
    }
  }
  return fold_of;
}

double MedianPairwiseSquaredDistance(const Matrix& x) {
  if (x.rows() < 2) Fail(ErrorCode::kTooFewPoints, "need two points for pairwise distances");
  const Matrix dots = x * x.transpose();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(x.rows() * (x.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      d2.push_back(std::max(0.0, dots(i, i) + dots(j, j) - 2.0 * dots(i, j)));
    }
  }
  std::sort(d2.begin(), d2.end());
  const std::size_t m = d2.size();
  return m % 2 == 1 ? d2[m / 2] : 0.5 * (d2[m / 2 - 1] + d2[m / 2]);
}

CvResult CrossValidate(const Matrix& x, const std::vector<std::string>& labels,
                       const CvGrid& grid, KernelKind kind, bool conventional, int jobs) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    Fail(ErrorCode::kLengthMismatch, "samples and labels differ in count");
  }
  if (grid.c_values.empty()) Fail(ErrorCode::kEmptyGrid, "no C values");
  if (kind == KernelKind::kRbf && !grid.sigma_auto && grid.sigma_values.empty()) {
    Fail(ErrorCode::kEmptyGrid, "no sigma values");
  }
  const LabelIndex li = IndexLabels(labels);
  if (li.classes.size() < 2) Fail(ErrorCode::kSingleClass, "need at least two classes");

  CvResult result;
  for (std::size_t k = 0; k < li.classes.size(); ++k) {
    const auto count = std::count(li.class_of.begin(), li.class_of.end(), static_cast<int>(k));
    if (count < grid.folds) result.few_samples = true;
  }

  const Matrix z = kind == KernelKind::kRbf ? Standardizer::Fit(x).Apply(x) : x;
  std::vector<double> c_values = grid.c_values;
  std::sort(c_values.begin(), c_values.end());
  std::vector<double> sigmas{0.0};
  if (kind == KernelKind::kRbf) {
    if (grid.sigma_auto) {
      double scale = MedianPairwiseSquaredDistance(z);
      if (!(scale > 0.0)) scale = 1.0;
      if (conventional) scale = std::sqrt(scale);
      sigmas = {0.5 * scale, scale, 2.0 * scale, 4.0 * scale};
    } else {
      sigmas = grid.sigma_values;
      std::sort(sigmas.begin(), sigmas.end());
    }
  }

  const std::vector<int> fold_of = StratifiedFolds(labels, grid.folds, grid.seed);
  const int n_classes = static_cast<int>(li.classes.size());

  // Grid order: C ascending, then sigma ascending.
  struct Point {
    double c;
    std::size_t sigma_index;
  };
  std::vector<Point> points;
  for (double c : c_values) {
    for (std::size_t s = 0; s < sigmas.size(); ++s) points.push_back({c, s});
  }
  std::vector<Matrix> grams(sigmas.size());
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    KernelSpec spec{kind, kind == KernelKind::kRbf ? sigmas[s] : 1.0, conventional};
    grams[s] = GramMatrix(spec, z);
  }

  result.scores.resize(points.size());
  ParallelFor(points.size(), jobs, [&](std::size_t pi) {
    const Point& pt = points[pi];
    const Matrix& gram = grams[pt.sigma_index];
    GridScore& score = result.scores[pi];
    score.c = pt.c;
    score.sigma = sigmas[pt.sigma_index];
    for (int f = 0; f < grid.folds; ++f) {
      std::vector<Eigen::Index> train, held;
      for (std::size_t t = 0; t < fold_of.size(); ++t) {
        (fold_of[t] == f ? held : train).push_back(static_cast<Eigen::Index>(t));
      }
      if (held.empty()) continue;
      const auto pairs = TrainPairs(z, gram, train, li.class_of, n_classes, pt.c);
      int correct = 0;
      for (Eigen::Index h : held) {
        const auto pred = Vote(
            n_classes, pairs.size(),
            [&](std::size_t p) {
              double s = pairs[p].bias;
              for (std::size_t v = 0; v < pairs[p].idx.size(); ++v) {
                s += pairs[p].coefs[v] * gram(h, pairs[p].idx[v]);
              }
              return s;
            },
            [&](std::size_t p) { return std::pair{pairs[p].positive, pairs[p].negative}; });
        if (pred.class_index == li.class_of[static_cast<std::size_t>(h)]) ++correct;
      }
      score.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(held.size()));
    }
    double sum = 0.0;
    for (double a : score.fold_accuracies) sum += a;
    score.accuracy = score.fold_accuracies.empty() ? 0.0 : sum / static_cast<double>(score.fold_accuracies.size());
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.scores.size(); ++i) {
    if (result.scores[i].accuracy > result.scores[best].accuracy) best = i;
  }
  result.best_c = result.scores[best].c;
  result.best_sigma = result.scores[best].sigma;
  result.best_accuracy = result.scores[best].accuracy;
  result.fold_accuracies = result.scores[best].fold_accuracies;
  return result;
}

// ---------------------------------------------------------------------------
// SVSM files

namespace {

constexpr std::uint32_t kSvmVersion = 1;

template <typename T>
void Put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct ByteReader {
  const std::string& in;
  const std::filesystem::path& path;
  std::size_t pos = 4;

  template <typename T>
  T Take() {
    if (pos + sizeof(T) > in.size()) Fail(ErrorCode::kFormatError, "truncated " + path.string());
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string TakeString(std::uint32_t len) {
    if (pos + len > in.size()) Fail(ErrorCode::kFormatError, "truncated " + path.string());
    std::string s = in.substr(pos, len);
    pos += len;
    return s;
  }
};

}  // namespace

void WriteSvm(const std::filesystem::path& path, const MulticlassSvm& model) {
  const auto dim = static_cast<std::uint32_t>(model.dim());
  std::string out = "SVSM";
  Put<std::uint32_t>(out, kSvmVersion);
  Put<std::uint8_t>(out, static_cast<std::uint8_t>(model.kernel.kind));
  Put<std::uint8_t>(out, model.kernel.conventional ? 1 : 0);
  Put<double>(out, model.kernel.sigma);
  Put<double>(out, model.c);
  Put<std::uint32_t>(out, dim);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(model.classes.size()));
  for (const auto& name : model.classes) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(model.pairs.size()));
  for (const auto& p : model.pairs) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(p.positive));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(p.negative));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(p.model.support_vectors.rows()));
    for (Eigen::Index i = 0; i < p.model.support_vectors.size(); ++i) {
      Put<double>(out, p.model.support_vectors.data()[i]);
    }
    for (Eigen::Index i = 0; i < p.model.dual_coefs.size(); ++i) Put<double>(out, p.model.dual_coefs[i]);
    Put<double>(out, p.model.bias);
  }
  Put<std::uint8_t>(out, model.standardizer.enabled ? 1 : 0);
  for (std::uint32_t d = 0; d < dim; ++d) {
    Put<double>(out, model.standardizer.enabled ? model.standardizer.mean[d] : 0.0);
  }
  for (std::uint32_t d = 0; d < dim; ++d) {
    Put<double>(out, model.standardizer.enabled ? model.standardizer.scale[d] : 1.0);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f.write(out.data(), static_cast<std::streamsize>(out.size()))) {
    Fail(ErrorCode::kIoError, "cannot write " + path.string());
  }
}

MulticlassSvm ReadSvm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) Fail(ErrorCode::kIoError, "cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 4 || in.compare(0, 4, "SVSM") != 0) {
    Fail(ErrorCode::kFormatError, "not an SVM model: " + path.string());
  }
  ByteReader r{in, path};
  if (r.Take<std::uint32_t>() != kSvmVersion) Fail(ErrorCode::kFormatError, "unsupported SVM version");
  MulticlassSvm m;
  const auto kind = r.Take<std::uint8_t>();
  if (kind > 1) Fail(ErrorCode::kFormatError, "unknown kernel tag");
  m.kernel.kind = static_cast<KernelKind>(kind);
  m.kernel.conventional = r.Take<std::uint8_t>() != 0;
  m.kernel.sigma = r.Take<double>();
  m.c = r.Take<double>();
  const auto dim = r.Take<std::uint32_t>();
  const auto n_classes = r.Take<std::uint32_t>();
  if (n_classes < 2 || n_classes > 100000) Fail(ErrorCode::kFormatError, "implausible class count");
  for (std::uint32_t k = 0; k < n_classes; ++k) m.classes.push_back(r.TakeString(r.Take<std::uint32_t>()));
  const auto n_pairs = r.Take<std::uint32_t>();
  for (std::uint32_t p = 0; p < n_pairs; ++p) {
    PairModel pm{};
    pm.positive = static_cast<int>(r.Take<std::uint32_t>());
    pm.negative = static_cast<int>(r.Take<std::uint32_t>());
    if (pm.positive >= static_cast<int>(n_classes) || pm.negative >= static_cast<int>(n_classes)) {
      Fail(ErrorCode::kFormatError, "pair refers to unknown class");
    }
    const auto n_sv = r.Take<std::uint32_t>();
    if (static_cast<std::size_t>(n_sv) * dim * sizeof(double) > in.size()) {
      Fail(ErrorCode::kFormatError, "implausible support vector count");
    }
    pm.model.kernel = m.kernel;
    pm.model.c = m.c;
    pm.model.support_vectors.resize(n_sv, dim);
    for (Eigen::Index i = 0; i < pm.model.support_vectors.size(); ++i) {
      pm.model.support_vectors.data()[i] = r.Take<double>();
    }
    pm.model.dual_coefs.resize(n_sv);
    for (Eigen::Index i = 0; i < pm.model.dual_coefs.size(); ++i) pm.model.dual_coefs[i] = r.Take<double>();
    pm.model.bias = r.Take<double>();
    m.pairs.push_back(std::move(pm));
  }
  m.standardizer.enabled = r.Take<std::uint8_t>() != 0;
  m.standardizer.mean.resize(dim);
  m.standardizer.scale.resize(dim);
  for (std::uint32_t d = 0; d < dim; ++d) m.standardizer.mean[d] = r.Take<double>();
  for (std::uint32_t d = 0; d < dim; ++d) m.standardizer.scale[d] = r.Take<double>();
  if (r.pos != in.size()) Fail(ErrorCode::kFormatError, "trailing bytes in " + path.string());
  return m;
}

}  // namespace svid
