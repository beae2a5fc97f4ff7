#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "segsim/dataset.hpp"

namespace segsim {

// Exact 1-D optimal transport cost between two distributions on an ordinal
// support with unit spacing: sum over k < K of |CDF_p(k) - CDF_q(k)|.
double emd_1d(std::span<const double> p, std::span<const double> q);
// emd_1d divided by K - 1, the largest achievable cost; lies in [0, 1].
double nemd(std::span<const double> p, std::span<const double> q);

struct DistanceMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd d;

  std::size_t size() const { return labels.size(); }
  // Entries above the diagonal, row-major.
  std::vector<double> upper_triangle() const;
};

// Pairwise nEMD between subgroups, labels in map order.
DistanceMatrix pairwise_matrix(const std::map<std::string, Distribution, std::less<>>& subgroup_dists);

// Median of the upper triangle (mean of the central two for an even count).
double upper_triangle_median(const DistanceMatrix& m);
// Median within each matrix, then the unweighted mean of those medians.
double aggregate_nemd(std::span<const DistanceMatrix> matrices);
// Element-wise mean of matrices sharing labels.
DistanceMatrix mean_matrix(std::span<const DistanceMatrix> matrices);

struct Embedding {
  std::vector<std::string> labels;
  Eigen::MatrixX2d coords;
  Eigen::Vector2d eigenvalues = Eigen::Vector2d::Zero();  // retained, before clamping
  int clamped = 0;             // retained eigenvalues clamped to zero
  int negative_eigenvalues = 0;  // all eigenvalues below -tolerance
  bool degenerate = false;     // all-zero input; coordinates at the origin
};

// Torgerson scaling: B = -1/2 J D^2 J, top two eigenpairs, coordinates
// v * sqrt(max(lambda, 0)). Each axis is flipped so the coordinate of largest
// magnitude is positive.
Embedding classical_mds(const DistanceMatrix& dmatrix);

struct ProcrustesResult {
  // Residual sum of squares after optimally aligning the unit-norm, centred
  // target onto the unit-norm, centred reference; in [0, 1].
  double distance = 0.0;
  // Row-vector map from raw target coordinates into the raw reference frame:
  // aligned = scale * y * rotation + translation. rotation may be a reflection.
  double scale = 1.0;
  Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
  Eigen::RowVector2d translation = Eigen::RowVector2d::Zero();
  Eigen::MatrixX2d aligned_coords;
};

ProcrustesResult procrustes(const Embedding& reference, const Embedding& target);

}  // namespace segsim
