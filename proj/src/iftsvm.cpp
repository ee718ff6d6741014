#include "vsm/iftsvm.hpp"

#include "vsm/noise.hpp"  // reflect101

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace vsm {

namespace {

constexpr double kRadiusDelta = 1e-6;
constexpr double kDualTolerance = 1e-8;
constexpr int kMaxSweeps = 10000;
constexpr double kMarginCap = 1e12;

// Dual of one twin problem: max e'a - 1/2 a'Qa subject to 0 <= a <= box.
Eigen::VectorXd solve_box_dual(const Eigen::MatrixXd& q, const Eigen::VectorXd& box,
                               int* sweeps_out) {
  const Eigen::Index m = q.rows();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd grad_cache = Eigen::VectorXd::Zero(m);  // Q * alpha
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double step = (1.0 - grad_cache(j)) / q(j, j);
      const double updated = std::min(box(j), std::max(0.0, alpha(j) + step));
      const double delta = updated - alpha(j);
      if (delta != 0.0) {
        alpha(j) = updated;
        grad_cache.noalias() += delta * q.col(j);
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < kDualTolerance) break;
  }
  if (sweeps_out) *sweeps_out = sweep + 1;
  return alpha;
}

void write_vector(std::ofstream& out, const char* name, const Eigen::VectorXd& v) {
  out << name;
  char buf[64];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, " %.17g", v(i));
    out << buf;
  }
  out << "\n";
}

Eigen::VectorXd read_vector(std::ifstream& in, const std::string& name, Eigen::Index d,
                            const std::string& path) {
  std::string tag;
  in >> tag;
  if (tag != name) throw std::runtime_error(path + ": expected '" + name + "' in model file");
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(in >> v(i))) throw std::runtime_error(path + ": truncated model file");
  return v;
}

}  // namespace

bool TwinModel::trained() const {
  if (w_pos.size() == 0 || w_pos.size() != w_neg.size()) return false;
  const double n1 = w_pos.norm(), n2 = w_neg.norm();
  return std::isfinite(n1) && std::isfinite(n2) && n1 > 0.0 && n2 > 0.0 &&
         std::isfinite(b_pos) && std::isfinite(b_neg);
}

std::vector<FuzzySample> assign_fuzzy_degrees(const std::vector<Eigen::VectorXd>& features,
                                              const std::vector<int>& labels, int k_nn) {
  const std::size_t n = features.size();
  if (labels.size() != n)
    throw std::invalid_argument("assign_fuzzy_degrees: feature/label count mismatch");
  if (k_nn < 1) throw std::invalid_argument("assign_fuzzy_degrees: k_nn must be >= 1");

  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == +1)
      ++n_pos;
    else if (y == -1)
      ++n_neg;
    else
      throw std::invalid_argument("assign_fuzzy_degrees: labels must be +1 or -1");
  }
  if (n_pos < 2 || n_neg < 2)
    throw std::invalid_argument("assign_fuzzy_degrees: need >= 2 samples per class");

  const Eigen::Index d = features[0].size();
  Eigen::VectorXd centroid_pos = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd centroid_neg = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d)
      throw std::invalid_argument("assign_fuzzy_degrees: inconsistent feature dimension");
    (labels[i] == +1 ? centroid_pos : centroid_neg) += features[i];
  }
  centroid_pos /= static_cast<double>(n_pos);
  centroid_neg /= static_cast<double>(n_neg);

  double radius_pos = 0.0, radius_neg = 0.0;
  std::vector<double> dist_to_own(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = labels[i] == +1 ? centroid_pos : centroid_neg;
    dist_to_own[i] = (features[i] - c).norm();
    (labels[i] == +1 ? radius_pos : radius_neg) =
        std::max(labels[i] == +1 ? radius_pos : radius_neg, dist_to_own[i]);
  }

  std::vector<FuzzySample> out(n);
  std::vector<std::pair<double, std::size_t>> neighbors;
  neighbors.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double radius = labels[i] == +1 ? radius_pos : radius_neg;
    const double mu = 1.0 - dist_to_own[i] / (radius + kRadiusDelta);

    neighbors.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) neighbors.emplace_back((features[i] - features[j]).norm(), j);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_nn), neighbors.size());
    std::partial_sort(neighbors.begin(), neighbors.begin() + k, neighbors.end());
    std::size_t opposite = 0;
    for (std::size_t t = 0; t < k; ++t)
      if (labels[neighbors[t].second] != labels[i]) ++opposite;
    const double nu = (static_cast<double>(opposite) / static_cast<double>(k)) * (1.0 - mu);

    out[i].features = features[i];
    out[i].label = labels[i];
    out[i].membership = mu;
    out[i].nonmembership = nu;
  }
  return out;
}

TwinModel train_iftsvm(const std::vector<FuzzySample>& samples, double c_pos, double c_neg,
                       double ridge, TrainDiagnostics* diag) {
  if (!(c_pos > 0.0) || !(c_neg > 0.0))
    throw std::invalid_argument("train_iftsvm: regularization must be > 0");
  if (samples.empty()) throw std::invalid_argument("train_iftsvm: no samples");
  const Eigen::Index d = samples[0].features.size();
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());

  Eigen::Index n_pos = 0, n_neg = 0;
  for (const auto& s : samples) {
    if (s.features.size() != d)
      throw std::invalid_argument("train_iftsvm: inconsistent feature dimension");
    (s.label == +1 ? n_pos : n_neg)++;
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("train_iftsvm: both classes must be present");

  // Standardize; constant features keep scale 1 so they contribute nothing.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) mean += s.features;
  mean /= static_cast<double>(n);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) var += (s.features - mean).array().square().matrix();
  var /= static_cast<double>(n);
  Eigen::VectorXd scale = var.array().sqrt();
  bool any_varying = false;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (scale(j) > 1e-12)
      any_varying = true;
    else
      scale(j) = 1.0;
  }
  if (!any_varying) throw std::invalid_argument("train_iftsvm: degenerate data (all features identical)");

  Eigen::MatrixXd pos(n_pos, d), neg(n_neg, d);
  Eigen::VectorXd score_pos(n_pos), score_neg(n_neg);
  Eigen::Index ip = 0, in_ = 0;
  for (const auto& s : samples) {
    const Eigen::VectorXd z = (s.features - mean).array() / scale.array();
    if (s.label == +1) {
      pos.row(ip) = z.transpose();
      score_pos(ip++) = s.score();
    } else {
      neg.row(in_) = z.transpose();
      score_neg(in_++) = s.score();
    }
  }

  auto augmented = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd g(m.rows(), m.cols() + 1);
    g.leftCols(m.cols()) = m;
    g.col(m.cols()).setOnes();
    return g;
  };
  const Eigen::MatrixXd g_pos = augmented(pos);   // [A e]
  const Eigen::MatrixXd g_neg = augmented(neg);   // [B e]

  TwinModel model;
  model.feature_mean = mean;
  model.feature_scale = scale;
  TrainDiagnostics local;
  TrainDiagnostics& dg = diag ? *diag : local;

  // Plane for class +1: constraints come from class -1 rows, slacks weighted
  // by the opposite-class fuzzy scores.
  {
    Eigen::MatrixXd m = g_pos.transpose() * g_pos;
    m.diagonal().array() += ridge;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    const Eigen::MatrixXd solved = ldlt.solve(g_neg.transpose());  // (d+1) x n_neg
    const Eigen::MatrixXd q = g_neg * solved;
    dg.box_pos = c_pos * score_neg;
    dg.alpha_pos = solve_box_dual(q, dg.box_pos, &dg.sweeps_pos);
    const Eigen::VectorXd u = -(solved * dg.alpha_pos);
    model.w_pos = u.head(d);
    model.b_pos = u(d);
  }
  // Plane for class -1.
  {
    Eigen::MatrixXd m = g_neg.transpose() * g_neg;
    m.diagonal().array() += ridge;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    const Eigen::MatrixXd solved = ldlt.solve(g_pos.transpose());
    const Eigen::MatrixXd q = g_pos * solved;
    dg.box_neg = c_neg * score_pos;
    dg.alpha_neg = solve_box_dual(q, dg.box_neg, &dg.sweeps_neg);
    const Eigen::VectorXd u = solved * dg.alpha_neg;
    model.w_neg = u.head(d);
    model.b_neg = u(d);
  }

  if (!model.trained())
    throw std::runtime_error("train_iftsvm: training produced a degenerate model");
  return model;
}

Classification classify(const TwinModel& model, const Eigen::VectorXd& x) {
  if (!model.trained()) throw std::invalid_argument("classify: model is untrained or degenerate");
  if (x.size() != model.w_pos.size())
    throw std::invalid_argument("classify: feature dimension mismatch");
  const Eigen::VectorXd z = (x - model.feature_mean).array() / model.feature_scale.array();
  const double dist_pos = std::abs(model.w_pos.dot(z) + model.b_pos) / model.w_pos.norm();
  const double dist_neg = std::abs(model.w_neg.dot(z) + model.b_neg) / model.w_neg.norm();
  Classification out;
  out.label = dist_pos <= dist_neg ? +1 : -1;
  const double near = std::min(dist_pos, dist_neg), far = std::max(dist_pos, dist_neg);
  out.margin_ratio = near == 0.0 ? kMarginCap : std::min(far / near, kMarginCap);
  return out;
}

Eigen::VectorXd PatchFeatures::vector() const {
  Eigen::VectorXd v(kDim);
  v << mean, variance, gradient_mean, laplacian_mean, range;
  return v;
}

PatchFeatures patch_features(const Plane& lum, Eigen::Index row, Eigen::Index col, int halfwidth) {
  if (halfwidth < 1) throw std::invalid_argument("patch_features: halfwidth must be >= 1");
  const Eigen::Index h = lum.rows(), w = lum.cols();
  auto at = [&](Eigen::Index r, Eigen::Index c) { return lum(reflect101(r, h), reflect101(c, w)); };

  const int n = (2 * halfwidth + 1) * (2 * halfwidth + 1);
  double sum = 0.0, sum_sq = 0.0, sum_grad = 0.0, sum_lap = 0.0;
  double lo = 1e300, hi = -1e300;
  for (Eigen::Index r = row - halfwidth; r <= row + halfwidth; ++r) {
    for (Eigen::Index c = col - halfwidth; c <= col + halfwidth; ++c) {
      const double v = at(r, c);
      sum += v;
      sum_sq += v * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      const double gx = 0.5 * (at(r, c + 1) - at(r, c - 1));
      const double gy = 0.5 * (at(r + 1, c) - at(r - 1, c));
      sum_grad += std::sqrt(gx * gx + gy * gy);
      sum_lap += std::abs(at(r + 1, c) + at(r - 1, c) + at(r, c + 1) + at(r, c - 1) - 4.0 * v);
    }
  }
  PatchFeatures f;
  f.mean = sum / n;
  f.variance = std::max(0.0, sum_sq / n - f.mean * f.mean);
  f.gradient_mean = sum_grad / n;
  f.laplacian_mean = sum_lap / n;
  f.range = hi - lo;
  return f;
}

void save_twin_model(const TwinModel& model, const std::string& path) {
  if (!model.trained()) throw std::invalid_argument("save_twin_model: model is untrained");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "iftsvm-model v1\n";
  out << "d " << model.w_pos.size() << "\n";
  write_vector(out, "mean", model.feature_mean);
  write_vector(out, "scale", model.feature_scale);
  write_vector(out, "w_pos", model.w_pos);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", model.b_pos);
  out << "b_pos " << buf << "\n";
  write_vector(out, "w_neg", model.w_neg);
  std::snprintf(buf, sizeof buf, "%.17g", model.b_neg);
  out << "b_neg " << buf << "\n";
  if (!out) throw std::runtime_error(path + ": write failed");
}

TwinModel load_twin_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string line;
  std::getline(in, line);
  if (line != "iftsvm-model v1") throw std::runtime_error(path + ": not an iftsvm model file");
  std::string tag;
  Eigen::Index d = 0;
  in >> tag >> d;
  if (tag != "d" || d < 1) throw std::runtime_error(path + ": bad dimension line");
  TwinModel model;
  model.feature_mean = read_vector(in, "mean", d, path);
  model.feature_scale = read_vector(in, "scale", d, path);
  model.w_pos = read_vector(in, "w_pos", d, path);
  in >> tag >> model.b_pos;
  if (tag != "b_pos") throw std::runtime_error(path + ": bad b_pos line");
  model.w_neg = read_vector(in, "w_neg", d, path);
  in >> tag >> model.b_neg;
  if (tag != "b_neg") throw std::runtime_error(path + ": bad b_neg line");
  if (!model.trained()) throw std::runtime_error(path + ": model file holds a degenerate model");
  return model;
}

}  // namespace vsm
