#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "ilnet/kernels.hpp"
#include "ilnet/rng.hpp"

namespace {

using namespace ilnet;

std::vector<double> random_vec(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Sizes match the trunk's widest conv block (c2 -> c3 at 16x16).
constexpr int kCi = 16, kCo = 24, kH = 16, kW = 16;

void bench_conv3x3_serial(benchmark::State& state) {
    const auto x = random_vec(static_cast<size_t>(kCi) * kH * kW, 1);
    const auto w = random_vec(static_cast<size_t>(kCo) * kCi * 9, 2);
    const auto b = random_vec(kCo, 3);
    std::vector<double> y(static_cast<size_t>(kCo) * kH * kW);
    for (auto _ : state) {
        kernels::serial::conv3x3_forward(x.data(), kCi, kH, kW, w.data(), b.data(), kCo, y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(bench_conv3x3_serial);

void bench_conv3x3_omp(benchmark::State& state) {
    const auto x = random_vec(static_cast<size_t>(kCi) * kH * kW, 1);
    const auto w = random_vec(static_cast<size_t>(kCo) * kCi * 9, 2);
    const auto b = random_vec(kCo, 3);
    std::vector<double> y(static_cast<size_t>(kCo) * kH * kW);
    for (auto _ : state) {
        kernels::conv3x3_forward(x.data(), kCi, kH, kW, w.data(), b.data(), kCo, y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(bench_conv3x3_omp);

// RoI head fc1: 64 rows of 1176 -> 128.
constexpr int kB = 64, kIn = 1176, kOut = 128;

void bench_fc_serial(benchmark::State& state) {
    const auto x = random_vec(static_cast<size_t>(kB) * kIn, 4);
    const auto w = random_vec(static_cast<size_t>(kOut) * kIn, 5);
    const auto b = random_vec(kOut, 6);
    std::vector<double> y(static_cast<size_t>(kB) * kOut);
    for (auto _ : state) {
        kernels::serial::fc_forward(x.data(), kB, kIn, w.data(), b.data(), kOut, y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(bench_fc_serial);

void bench_fc_omp(benchmark::State& state) {
    const auto x = random_vec(static_cast<size_t>(kB) * kIn, 4);
    const auto w = random_vec(static_cast<size_t>(kOut) * kIn, 5);
    const auto b = random_vec(kOut, 6);
    std::vector<double> y(static_cast<size_t>(kB) * kOut);
    for (auto _ : state) {
        kernels::fc_forward(x.data(), kB, kIn, w.data(), b.data(), kOut, y.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(bench_fc_omp);

void bench_conv3x3_backward_params_serial(benchmark::State& state) {
    const auto gy = random_vec(static_cast<size_t>(kCo) * kH * kW, 7);
    const auto x = random_vec(static_cast<size_t>(kCi) * kH * kW, 8);
    std::vector<double> gw(static_cast<size_t>(kCo) * kCi * 9), gb(kCo);
    for (auto _ : state) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        kernels::serial::conv3x3_backward_params(gy.data(), kCo, x.data(), kCi, kH, kW, gw.data(),
                                                 gb.data());
        benchmark::DoNotOptimize(gw.data());
    }
}
BENCHMARK(bench_conv3x3_backward_params_serial);

void bench_conv3x3_backward_params_omp(benchmark::State& state) {
    const auto gy = random_vec(static_cast<size_t>(kCo) * kH * kW, 7);
    const auto x = random_vec(static_cast<size_t>(kCi) * kH * kW, 8);
    std::vector<double> gw(static_cast<size_t>(kCo) * kCi * 9), gb(kCo);
    for (auto _ : state) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        kernels::conv3x3_backward_params(gy.data(), kCo, x.data(), kCi, kH, kW, gw.data(),
                                         gb.data());
        benchmark::DoNotOptimize(gw.data());
    }
}
BENCHMARK(bench_conv3x3_backward_params_omp);

}  // namespace

BENCHMARK_MAIN();
