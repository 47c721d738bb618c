// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "simulacra/kernels.hpp"

using namespace simulacra;

namespace {

std::vector<Point2> points(std::size_t n, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 100.0);
    std::vector<Point2> p(n);
    for (auto& q : p) q = {g(rng), g(rng)};
    return p;
}

struct Gaze {
    std::vector<double> t, x, y;
};

Gaze gaze(std::size_t n) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    Gaze g;
    for (std::size_t i = 0; i < n; ++i) {
        g.t.push_back(35.0 * static_cast<double>(i));
        g.x.push_back(u(rng));
        g.y.push_back(u(rng));
    }
    return g;
}

std::vector<kernels::SeriesPair> series(std::size_t pairs, std::size_t len) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<kernels::SeriesPair> out(pairs);
    for (auto& p : out) {
        for (std::size_t i = 0; i < len; ++i) {
            p.a.push_back(u(rng));
            p.b.push_back(u(rng));
        }
    }
    return out;
}

template <bool Parallel>
void BM_Affinity(benchmark::State& state) {
    const auto p = points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto a = Parallel ? kernels::gaussian_affinity(p, 50.0) : kernels::serial::gaussian_affinity(p, 50.0);
        benchmark::DoNotOptimize(a.data());
    }
}

template <bool Parallel>
void BM_KthNeighbor(benchmark::State& state) {
    const auto p = points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto d = Parallel ? kernels::kth_neighbor_distances(p, 10) : kernels::serial::kth_neighbor_distances(p, 10);
        benchmark::DoNotOptimize(d.data());
    }
}

template <bool Parallel>
void BM_KmeansAssign(benchmark::State& state) {
    const auto p = points(static_cast<std::size_t>(state.range(0)));
    const auto c = points(8, 9);
    std::vector<int> labels(p.size(), -1);
    for (auto _ : state) {
        std::fill(labels.begin(), labels.end(), -1);
        benchmark::DoNotOptimize(Parallel ? kernels::kmeans_assign(p, c, labels)
                                          : kernels::serial::kmeans_assign(p, c, labels));
    }
}

template <bool Parallel>
void BM_GazeVelocities(benchmark::State& state) {
    const auto g = gaze(static_cast<std::size_t>(state.range(0)));
    std::vector<double> vx, vy;
    for (auto _ : state) {
        if (Parallel) kernels::gaze_velocities(g.t, g.x, g.y, 2, vx, vy);
        else kernels::serial::gaze_velocities(g.t, g.x, g.y, 2, vx, vy);
        benchmark::DoNotOptimize(vx.data());
    }
}

template <bool Parallel>
void BM_BatchPearson(benchmark::State& state) {
    const auto s = series(static_cast<std::size_t>(state.range(0)), 24);
    for (auto _ : state) {
        auto r = Parallel ? kernels::batch_pearson(s) : kernels::serial::batch_pearson(s);
        benchmark::DoNotOptimize(r.data());
    }
}

}  // namespace

BENCHMARK(BM_Affinity<false>)->Arg(256)->Arg(1024);
BENCHMARK(BM_Affinity<true>)->Arg(256)->Arg(1024);
BENCHMARK(BM_KthNeighbor<false>)->Arg(256)->Arg(1024);
BENCHMARK(BM_KthNeighbor<true>)->Arg(256)->Arg(1024);
BENCHMARK(BM_KmeansAssign<false>)->Arg(4096)->Arg(65536);
BENCHMARK(BM_KmeansAssign<true>)->Arg(4096)->Arg(65536);
BENCHMARK(BM_GazeVelocities<false>)->Arg(4096)->Arg(65536);
BENCHMARK(BM_GazeVelocities<true>)->Arg(4096)->Arg(65536);
BENCHMARK(BM_BatchPearson<false>)->Arg(1000)->Arg(20000);
BENCHMARK(BM_BatchPearson<true>)->Arg(1000)->Arg(20000);

BENCHMARK_MAIN();
