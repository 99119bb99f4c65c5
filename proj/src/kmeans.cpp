#include "edgeseg/kmeans.hpp"

#include <limits>

#include "edgeseg/errors.hpp"

namespace edgeseg {

namespace {

/// Assigns each point to its nearest centre; returns the inertia.
double assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers, std::vector<int>& labels) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iterations) {
  const Eigen::Index n = points.rows();
  if (k < 2) throw ConfigError("k-means needs k >= 2");
  if (n < k) throw ConfigError("k-means: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
  if (max_iterations < 1) throw ConfigError("k-means needs at least one iteration");

  KMeansResult r;
  r.centers.resize(k, points.cols());
  r.centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd nearest = (points.rowwise() - r.centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index far = 0;
    nearest.maxCoeff(&far);
    r.centers.row(c) = points.row(far);
    nearest = nearest.cwiseMin((points.rowwise() - r.centers.row(c)).rowwise().squaredNorm());
  }

  r.labels.assign(n, -1);
  std::vector<int> next(n);
  for (int it = 0; it < max_iterations; ++it) {
    r.inertia.push_back(assign(points, r.centers, next));
    r.iterations = it + 1;
    if (next == r.labels) {
      r.converged = true;
      break;
    }
    r.labels = next;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<Eigen::Index> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.labels[i]) += points.row(i);
      ++counts[r.labels[i]];
    }
    // An empty cluster keeps its previous centre.
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) r.centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    }
  }
  return r;
}

template <typename Scalar>
KMeansResult kmeans_features(const Tensor<Scalar>& features, int k, Rng& rng, int max_iterations) {
  if (features.rank() != 3) throw ShapeError("k-means features must be [C x H x W], got " + to_string(features.shape()));
  const std::size_t c = features.dim(0), plane = features.dim(1) * features.dim(2);
  Eigen::MatrixXd points(plane, c);
  const auto d = features.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) points(i, ch) = static_cast<double>(d[ch * plane + i]);
  }
  return kmeans(points, k, rng, max_iterations);
}

template KMeansResult kmeans_features(const Tensor<float>&, int, Rng&, int);
template KMeansResult kmeans_features(const Tensor<double>&, int, Rng&, int);

}  // namespace edgeseg
