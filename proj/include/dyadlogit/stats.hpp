#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "errors.hpp"

namespace dyadlogit::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Gauss-Hermite rule for E[f(X)], X ~ N(0,1) (probabilists' weight), from the
/// eigen-decomposition of the Jacobi matrix (Golub-Welsch). Weights sum to 1.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussHermite(int n_nodes) {
        if (n_nodes < 1) throw InputError("Gauss-Hermite needs at least one node");
        Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
        for (int k = 1; k < n_nodes; ++k) {
            jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
            jacobi(k - 1, k) = jacobi(k, k - 1);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
        nodes.resize(n_nodes);
        weights.resize(n_nodes);
        for (int k = 0; k < n_nodes; ++k) {
            nodes[k] = eig.eigenvalues()[k];
            const double v = eig.eigenvectors()(0, k);
            weights[k] = v * v;
        }
    }

    std::size_t size() const { return nodes.size(); }
};

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample variance with divisor (n - 1).
inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

inline double skewness(std::span<const double> xs) {
    const double m = mean(xs);
    double m2 = 0.0, m3 = 0.0;
    for (double x : xs) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    const auto n = static_cast<double>(xs.size());
    m2 /= n;
    m3 /= n;
    return m3 / std::pow(m2, 1.5);
}

/// Excess kurtosis (0 for a normal distribution).
inline double excess_kurtosis(std::span<const double> xs) {
    const double m = mean(xs);
    double m2 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = x - m;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    const auto n = static_cast<double>(xs.size());
    m2 /= n;
    m4 /= n;
    return m4 / (m2 * m2) - 3.0;
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    double lo = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

/// Kolmogorov-Smirnov distance sup_x |F_n(x) - Phi(x)|.
inline double ks_distance_to_normal(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double f = normal_cdf(xs[k]);
        d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
    }
    return d;
}

/// OLS slope of log(y) on log(x).
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < x.size(); ++k) {
        lx.push_back(std::log(x[k]));
        ly.push_back(std::log(y[k]));
    }
    const double mx = mean(lx), my = mean(ly);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    return sxy / sxx;
}

/// SplitMix64 finaliser; used to derive independent replication seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of replication `rep` in the cell of size `n`:
///   splitmix64(master ^ splitmix64(n ^ splitmix64(rep)))
/// Depends only on (master, n, rep), never on scheduling.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t n, std::uint64_t rep) {
    return splitmix64(master ^ splitmix64(n ^ splitmix64(rep)));
}

} // namespace dyadlogit::stats
