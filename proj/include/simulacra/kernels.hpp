#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version in `kernels` and
// a plain loop in `kernels::serial`; both produce bit-identical results because
// every output element is computed by one thread in the same operation order.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace simulacra {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

namespace kernels {

/// n x n squared Euclidean distances.
Eigen::MatrixXd pairwise_sq_distances(std::span<const Point2> points);

/// A_ij = exp(-d_ij^2 / (2 sigma^2)); unit diagonal.
Eigen::MatrixXd gaussian_affinity(std::span<const Point2> points, double sigma);

/// Distance from every point to its k-th nearest other point (k >= 1).
std::vector<double> kth_neighbor_distances(std::span<const Point2> points, int k);

/// Nearest-center labels (lowest index wins ties). Returns how many labels changed.
std::size_t kmeans_assign(std::span<const Point2> points, std::span<const Point2> centers, std::vector<int>& labels);

/// Smoothed velocities over a symmetric window of `half_width` samples on each
/// side: sum_j (x[n+j] - x[n-j]) / sum_j (t[n+j] - t[n-j]). The window shrinks
/// near the ends; the first and last sample use one-sided differences.
void gaze_velocities(std::span<const double> t, std::span<const double> x, std::span<const double> y,
                     int half_width, std::vector<double>& vx, std::vector<double>& vy);

/// Sample Pearson r; nullopt when either series has zero variance.
/// Caller guarantees equal lengths >= 2.
std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

struct SeriesPair {
    std::vector<double> a;
    std::vector<double> b;
};

/// pearson_r per pair; pairs shorter than 2 yield nullopt.
std::vector<std::optional<double>> batch_pearson(std::span<const SeriesPair> pairs);

namespace serial {

Eigen::MatrixXd pairwise_sq_distances(std::span<const Point2> points);
Eigen::MatrixXd gaussian_affinity(std::span<const Point2> points, double sigma);
std::vector<double> kth_neighbor_distances(std::span<const Point2> points, int k);
std::size_t kmeans_assign(std::span<const Point2> points, std::span<const Point2> centers, std::vector<int>& labels);
void gaze_velocities(std::span<const double> t, std::span<const double> x, std::span<const double> y,
                     int half_width, std::vector<double>& vx, std::vector<double>& vy);
std::vector<std::optional<double>> batch_pearson(std::span<const SeriesPair> pairs);

}  // namespace serial
}  // namespace kernels
}  // namespace simulacra
