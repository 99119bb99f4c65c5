#pragma once

#include <vector>

#include <Eigen/Dense>

#include "edgeseg/rng.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

struct KMeansResult {
  std::vector<int> labels;       // one per point
  Eigen::MatrixXd centers;       // k x dims
  std::vector<double> inertia;   // after each assignment step
  int iterations = 0;
  bool converged = false;        // assignment reached a fixpoint
};

/// Lloyd's algorithm over the rows of `points`. Seeding: the first centre is
/// a uniformly drawn point, each further centre is the point farthest from
/// the centres chosen so far (lowest index on ties).
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iterations = 100);

/// Clusters the per-pixel C-vectors of a [C x H x W] feature map; labels are
/// row-major over H x W.
template <typename Scalar>
KMeansResult kmeans_features(const Tensor<Scalar>& features, int k, Rng& rng, int max_iterations = 100);

}  // namespace edgeseg
