#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "hdaemon/errors.hpp"

namespace hdaemon {

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    w -= std::numbers::pi;
    if (w >= std::numbers::pi) w -= two_pi;
    return w;
}

/// Cubic Hermite interpolation on [t0, t1] from values and derivatives.
inline double hermite(double t0, double t1, double y0, double y1, double dy0, double dy1, double t) {
    const double h = t1 - t0;
    const double s = (t - t0) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * y0 + h10 * h * dy0 + h01 * y1 + h11 * h * dy1;
}

/// Index i of the interval [x[i], x[i+1]] containing t, clamped to the ends.
inline std::size_t bracket_index(const std::vector<double>& x, double t) {
    if (x.size() < 2) return 0;
    auto it = std::upper_bound(x.begin(), x.end(), t);
    std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
    return std::min(i, x.size() - 2);
}

struct QuadratureRule {
    std::vector<double> nodes;
    /// Weights normalized to sum to one, i.e. for the measure exp(-x^2)/sqrt(pi).
    std::vector<double> weights;
};

/// Gauss-Hermite rule from the Golub-Welsch eigenproblem.
inline QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw DomainError("Gauss-Hermite rule needs at least one node");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    QuadratureRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    // w_i = 1 / sum_k p_k(x_i)^2 over the orthonormal polynomials, with running rescaling.
    for (int i = 0; i < n; ++i) {
        const double x = es.eigenvalues()(i);
        double pm = 0.0, p = 1.0, sum = 1.0, log_scale = 0.0;
        for (int k = 0; k + 1 < n; ++k) {
            const double next = (x * p - std::sqrt(0.5 * k) * pm) / std::sqrt(0.5 * (k + 1));
            pm = p;
            p = next;
            sum += p * p;
            if (sum > 1e200) {
                pm *= 1e-100;
                p *= 1e-100;
                sum *= 1e-200;
                log_scale += 200.0 * std::log(10.0);
            }
        }
        r.nodes[i] = x;
        r.weights[i] = std::exp(-log_scale - std::log(sum));
    }
    return r;
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads` workers.
/// Chunk boundaries are multiples of `align`.
inline void parallel_chunks(std::size_t n, unsigned threads, std::size_t align,
                            const std::function<void(std::size_t, std::size_t)>& body) {
    threads = std::max(1u, threads);
    align = std::max<std::size_t>(1, align);
    const std::size_t blocks = (n + align - 1) / align;
    const std::size_t workers = std::min<std::size_t>(threads, std::max<std::size_t>(blocks, 1));
    if (workers <= 1) {
        if (n > 0) body(0, n);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b0 = blocks * w / workers;
        const std::size_t b1 = blocks * (w + 1) / workers;
        const std::size_t begin = std::min(n, b0 * align);
        const std::size_t end = std::min(n, b1 * align);
        if (begin < end) pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
}

/// Runs body(i) for i in [0, n) with an atomic work queue.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
    threads = std::max(1u, threads);
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const std::size_t workers = std::min<std::size_t>(threads, n);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    }
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = a;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

} // namespace hdaemon
