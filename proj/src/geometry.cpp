#include "segsim/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "segsim/error.hpp"

namespace segsim {

namespace {

void check_distribution(std::span<const double> p, const char* which) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw Error(ErrorCode::InvalidDistribution, std::string(which) + " has a negative entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidDistribution, std::string(which) + " does not sum to 1");
  }
}

}  // namespace

double emd_1d(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::LengthMismatch, "EMD inputs differ in length");
  if (p.empty()) throw Error(ErrorCode::LengthMismatch, "EMD inputs are empty");
  check_distribution(p, "p");
  check_distribution(q, "q");
  double cdf_p = 0.0, cdf_q = 0.0, cost = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    cdf_p += p[k];
    cdf_q += q[k];
    cost += std::abs(cdf_p - cdf_q);
  }
  return cost;
}

double nemd(std::span<const double> p, std::span<const double> q) {
  const double cost = emd_1d(p, q);
  if (p.size() < 2) return 0.0;
  return std::clamp(cost / static_cast<double>(p.size() - 1), 0.0, 1.0);
}

std::vector<double> DistanceMatrix::upper_triangle() const {
  std::vector<double> out;
  const auto n = static_cast<Eigen::Index>(labels.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(d(i, j));
  }
  return out;
}

DistanceMatrix pairwise_matrix(const std::map<std::string, Distribution, std::less<>>& subgroup_dists) {
  if (subgroup_dists.size() < 2) {
    throw Error(ErrorCode::TooFewSubgroups, "need at least two subgroups, got " + std::to_string(subgroup_dists.size()));
  }
  DistanceMatrix m;
  std::vector<const Distribution*> dists;
  for (const auto& [label, dist] : subgroup_dists) {
    m.labels.push_back(label);
    dists.push_back(&dist);
  }
  const auto n = static_cast<Eigen::Index>(m.labels.size());
  m.d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = nemd(*dists[static_cast<std::size_t>(i)], *dists[static_cast<std::size_t>(j)]);
      m.d(i, j) = v;
      m.d(j, i) = v;
    }
  }
  return m;
}

double upper_triangle_median(const DistanceMatrix& m) {
  auto values = m.upper_triangle();
  if (values.empty()) throw Error(ErrorCode::TooFewSubgroups, "matrix has no off-diagonal entries");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

void require_same_labels(std::span<const DistanceMatrix> matrices) {
  if (matrices.empty()) throw Error(ErrorCode::EmptyList, "no distance matrices");
  for (const auto& m : matrices) {
    if (m.labels != matrices.front().labels) {
      throw Error(ErrorCode::LabelMismatch, "distance matrices have different subgroup labels");
    }
  }
}

}  // namespace

double aggregate_nemd(std::span<const DistanceMatrix> matrices) {
  require_same_labels(matrices);
  double sum = 0.0;
  for (const auto& m : matrices) sum += upper_triangle_median(m);
  return sum / static_cast<double>(matrices.size());
}

DistanceMatrix mean_matrix(std::span<const DistanceMatrix> matrices) {
  require_same_labels(matrices);
  DistanceMatrix out{matrices.front().labels, Eigen::MatrixXd::Zero(matrices.front().d.rows(), matrices.front().d.cols())};
  for (const auto& m : matrices) out.d += m.d;
  out.d /= static_cast<double>(matrices.size());
  return out;
}

Embedding classical_mds(const DistanceMatrix& dmatrix) {
  const auto n = static_cast<Eigen::Index>(dmatrix.labels.size());
  if (n < 2) throw Error(ErrorCode::TooFewSubgroups, "MDS needs at least two subgroups");
  if (dmatrix.d.rows() != n || dmatrix.d.cols() != n) {
    throw Error(ErrorCode::LengthMismatch, "distance matrix shape does not match its labels");
  }

  Embedding e;
  e.labels = dmatrix.labels;
  e.coords = Eigen::MatrixX2d::Zero(n, 2);
  if (dmatrix.d.cwiseAbs().maxCoeff() == 0.0) {
    e.degenerate = true;
    return e;
  }

  const Eigen::MatrixXd d2 = dmatrix.d.array().square().matrix();
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd b = -0.5 * centering * d2 * centering;
  b = 0.5 * (b + b.transpose());

  // Ascending eigenvalues; the last two are retained.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const double tolerance = 1e-12 * std::max(1.0, values.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) e.negative_eigenvalues += values(i) < -tolerance ? 1 : 0;

  for (int axis = 0; axis < 2; ++axis) {
    const Eigen::Index idx = n - 1 - axis;
    if (idx < 0) break;
    const double lambda = values(idx);
    e.eigenvalues(axis) = lambda;
    if (lambda <= tolerance) {
      if (lambda < -tolerance) ++e.clamped;
      continue;
    }
    Eigen::VectorXd column = vectors.col(idx) * std::sqrt(lambda);
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(column(i)) > std::abs(column(pivot)) + 1e-12) pivot = i;
    }
    if (column(pivot) < 0.0) column = -column;
    e.coords.col(axis) = column;
  }
  return e;
}

ProcrustesResult procrustes(const Embedding& reference, const Embedding& target) {
  if (reference.labels != target.labels) {
    throw Error(ErrorCode::LabelMismatch, "Procrustes configurations have different labels");
  }
  const auto n = reference.coords.rows();
  if (n < 2 || target.coords.rows() != n) throw Error(ErrorCode::TooFewSubgroups, "Procrustes needs at least two points");

  const Eigen::RowVector2d mean_x = reference.coords.colwise().mean();
  const Eigen::RowVector2d mean_y = target.coords.colwise().mean();
  const Eigen::MatrixX2d xc = reference.coords.rowwise() - mean_x;
  const Eigen::MatrixX2d yc = target.coords.rowwise() - mean_y;
  const double norm_x = xc.norm();
  const double norm_y = yc.norm();
  if (!(norm_x > 1e-300)) throw Error(ErrorCode::ZeroSpreadReference, "reference configuration has no spread");

  ProcrustesResult r;
  const Eigen::MatrixX2d xn = xc / norm_x;
  if (!(norm_y > 1e-300)) {
    // Every target point coincides: the best fit collapses onto the
    // reference centroid.
    r.distance = xn.squaredNorm();
    r.scale = 1.0;
    r.translation = mean_x - mean_y;
    r.aligned_coords = Eigen::MatrixX2d(n, 2);
    r.aligned_coords.rowwise() = mean_x;
    return r;
  }
  const Eigen::MatrixX2d yn = yc / norm_y;

  const Eigen::Matrix2d cross = yn.transpose() * xn;
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix2d rotation = svd.matrixU() * svd.matrixV().transpose();
  const double s = svd.singularValues().sum();

  const Eigen::MatrixX2d fitted = s * yn * rotation;
  r.distance = std::clamp((xn - fitted).squaredNorm(), 0.0, 1.0);
  r.rotation = rotation;
  r.scale = s * norm_x / norm_y;
  r.translation = mean_x - r.scale * mean_y * rotation;
  r.aligned_coords = (r.scale * target.coords * rotation).rowwise() + r.translation;
  return r;
}

}  // namespace segsim
