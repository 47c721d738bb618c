#include "simulacra/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace simulacra::kernels {

namespace {

inline double sq_dist(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

inline int nearest(const Point2& p, std::span<const Point2> centers) {
    int best = 0;
    double best_d = sq_dist(p, centers[0]);
    for (std::size_t c = 1; c < centers.size(); ++c) {
        const double d = sq_dist(p, centers[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

inline double kth_distance(std::span<const Point2> points, std::size_t i, int k, std::vector<double>& scratch) {
    scratch.clear();
    for (std::size_t j = 0; j < points.size(); ++j) {
        if (j != i) scratch.push_back(sq_dist(points[i], points[j]));
    }
    const auto kth = scratch.begin() + (k - 1);
    std::nth_element(scratch.begin(), kth, scratch.end());
    return std::sqrt(*kth);
}

inline void velocity_at(std::span<const double> t, std::span<const double> x, std::span<const double> y,
                        int half_width, std::size_t n, double& vx, double& vy) {
    const std::size_t size = t.size();
    const auto h = static_cast<std::size_t>(
        std::min<std::size_t>({static_cast<std::size_t>(half_width), n, size - 1 - n}));
    double dx = 0.0;
    double dy = 0.0;
    double dt = 0.0;
    if (h == 0) {
        const std::size_t a = n == 0 ? 0 : n - 1;
        const std::size_t b = n == 0 ? 1 : n;
        dx = x[b] - x[a];
        dy = y[b] - y[a];
        dt = t[b] - t[a];
    } else {
        for (std::size_t j = 1; j <= h; ++j) {
            dx += x[n + j] - x[n - j];
            dy += y[n + j] - y[n - j];
            dt += t[n + j] - t[n - j];
        }
    }
    if (dt <= 0.0) throw std::invalid_argument("gaze timestamps must be strictly increasing");
    vx = dx / dt;
    vy = dy / dt;
}

void check_velocity_args(std::span<const double> t, std::span<const double> x, std::span<const double> y) {
    if (t.size() != x.size() || t.size() != y.size()) throw std::invalid_argument("gaze arrays differ in length");
    if (t.size() < 2) throw std::invalid_argument("need at least two gaze samples");
}

}  // namespace

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---- OpenMP --------------------------------------------------------------------------

Eigen::MatrixXd pairwise_sq_distances(std::span<const Point2> points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd d(n, n);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) d(i, j) = sq_dist(points[i], points[j]);
    }
    return d;
}

Eigen::MatrixXd gaussian_affinity(std::span<const Point2> points, double sigma) {
    const auto n = static_cast<Eigen::Index>(points.size());
    const double denom = 2.0 * sigma * sigma;
    Eigen::MatrixXd a(n, n);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = i == j ? 1.0 : std::exp(-sq_dist(points[i], points[j]) / denom);
    }
    return a;
}

std::vector<double> kth_neighbor_distances(std::span<const Point2> points, int k) {
    if (k < 1 || static_cast<std::size_t>(k) >= points.size()) throw std::invalid_argument("k out of range");
    std::vector<double> out(points.size());
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel
    {
        std::vector<double> scratch;
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = kth_distance(points, static_cast<std::size_t>(i), k, scratch);
    }
    return out;
}

std::size_t kmeans_assign(std::span<const Point2> points, std::span<const Point2> centers, std::vector<int>& labels) {
    if (centers.empty()) throw std::invalid_argument("no centers");
    labels.resize(points.size(), -1);
    std::size_t changed = 0;
    const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static) reduction(+ : changed)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const int c = nearest(points[static_cast<std::size_t>(i)], centers);
        if (labels[static_cast<std::size_t>(i)] != c) {
            labels[static_cast<std::size_t>(i)] = c;
            ++changed;
        }
    }
    return changed;
}

void gaze_velocities(std::span<const double> t, std::span<const double> x, std::span<const double> y, int half_width,
                     std::vector<double>& vx, std::vector<double>& vy) {
    check_velocity_args(t, x, y);
    vx.assign(t.size(), 0.0);
    vy.assign(t.size(), 0.0);
    const auto n = static_cast<std::ptrdiff_t>(t.size());
    bool bad_time = false;
#pragma omp parallel for schedule(static) reduction(|| : bad_time)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const auto k = static_cast<std::size_t>(i);
            velocity_at(t, x, y, half_width, k, vx[k], vy[k]);
        } catch (const std::invalid_argument&) {
            bad_time = true;
        }
    }
    if (bad_time) throw std::invalid_argument("gaze timestamps must be strictly increasing");
}

std::vector<std::optional<double>> batch_pearson(std::span<const SeriesPair> pairs) {
    std::vector<std::optional<double>> out(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        if (p.a.size() == p.b.size() && p.a.size() >= 2) out[static_cast<std::size_t>(i)] = pearson_r(p.a, p.b);
    }
    return out;
}

// ---- serial reference ------------------------------------------------------------------

namespace serial {

Eigen::MatrixXd pairwise_sq_distances(std::span<const Point2> points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) d(i, j) = sq_dist(points[i], points[j]);
    }
    return d;
}

Eigen::MatrixXd gaussian_affinity(std::span<const Point2> points, double sigma) {
    const auto n = static_cast<Eigen::Index>(points.size());
    const double denom = 2.0 * sigma * sigma;
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = i == j ? 1.0 : std::exp(-sq_dist(points[i], points[j]) / denom);
    }
    return a;
}

std::vector<double> kth_neighbor_distances(std::span<const Point2> points, int k) {
    if (k < 1 || static_cast<std::size_t>(k) >= points.size()) throw std::invalid_argument("k out of range");
    std::vector<double> out(points.size());
    std::vector<double> scratch;
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = kth_distance(points, i, k, scratch);
    return out;
}

std::size_t kmeans_assign(std::span<const Point2> points, std::span<const Point2> centers, std::vector<int>& labels) {
    if (centers.empty()) throw std::invalid_argument("no centers");
    labels.resize(points.size(), -1);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const int c = nearest(points[i], centers);
        if (labels[i] != c) {
            labels[i] = c;
            ++changed;
        }
    }
    return changed;
}

void gaze_velocities(std::span<const double> t, std::span<const double> x, std::span<const double> y, int half_width,
                     std::vector<double>& vx, std::vector<double>& vy) {
    check_velocity_args(t, x, y);
    vx.assign(t.size(), 0.0);
    vy.assign(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) velocity_at(t, x, y, half_width, i, vx[i], vy[i]);
}

std::vector<std::optional<double>> batch_pearson(std::span<const SeriesPair> pairs) {
    std::vector<std::optional<double>> out(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].a.size() == pairs[i].b.size() && pairs[i].a.size() >= 2)
            out[i] = pearson_r(pairs[i].a, pairs[i].b);
    }
    return out;
}

}  // namespace serial
}  // namespace simulacra::kernels
