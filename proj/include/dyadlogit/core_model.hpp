#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "attributes.hpp"
#include "errors.hpp"

namespace dyadlogit {

/// A purchase: consumer i bought product j (0-based indices).
struct Edge {
    std::size_t consumer = 0;
    std::size_t product = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Observed bipartite data: N consumers, M products, the edge set Y and the
/// attribute tables from which Z_ij is built.
///
/// Units with identical feature-relevant attributes are grouped into cells.
/// Every quantity that does not depend on Y is a function of the
/// (consumer cell, product cell) pair, so dense NM sums reduce to sums over
/// cell pairs weighted by their counts, plus a correction over the edges.
/// With continuous attributes each unit is its own cell and the sums visit
/// all NM dyads, streaming Z on the fly.
class DyadDesign {
public:
    DyadDesign() = default;

    DyadDesign(AttributeTable consumers, AttributeTable products, FeatureMap feature_map,
               std::vector<Edge> edges)
        : consumers_(std::move(consumers)), products_(std::move(products)),
          feature_map_(std::move(feature_map)), edges_(std::move(edges)) {
        if (consumers_.rows() == 0 || products_.rows() == 0)
            throw InputError("design needs at least one consumer and one product");
        encoder_ = FeatureEncoder(consumers_, products_, feature_map_);

        std::sort(edges_.begin(), edges_.end());
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const Edge& ed = edges_[e];
            if (ed.consumer >= consumers_.rows() || ed.product >= products_.rows())
                throw InputError("edge (" + std::to_string(ed.consumer) + ", " +
                                 std::to_string(ed.product) + ") out of range");
            if (e > 0 && edges_[e - 1] == ed)
                throw InputError("duplicate edge (" + std::to_string(ed.consumer) + ", " +
                                 std::to_string(ed.product) + ")");
        }
        consumer_offsets_.assign(consumers_.rows() + 1, 0);
        for (const Edge& ed : edges_) ++consumer_offsets_[ed.consumer + 1];
        for (std::size_t i = 0; i < consumers_.rows(); ++i)
            consumer_offsets_[i + 1] += consumer_offsets_[i];

        build_cells();
    }

    std::size_t n_consumers() const { return consumers_.rows(); }
    std::size_t n_products() const { return products_.rows(); }
    /// n = N + M.
    std::size_t n() const { return n_consumers() + n_products(); }
    double dyad_count() const {
        return static_cast<double>(n_consumers()) * static_cast<double>(n_products());
    }
    std::size_t feature_dim() const { return feature_map_.size(); }
    std::size_t n_edges() const { return edges_.size(); }

    const AttributeTable& consumers() const { return consumers_; }
    const AttributeTable& products() const { return products_; }
    const FeatureMap& feature_map() const { return feature_map_; }
    const FeatureEncoder& encoder() const { return encoder_; }

    /// Edges sorted by (consumer, product).
    const std::vector<Edge>& edges() const { return edges_; }

    std::span<const Edge> edges_of_consumer(std::size_t i) const {
        return {edges_.data() + consumer_offsets_[i], edges_.data() + consumer_offsets_[i + 1]};
    }

    bool has_edge(std::size_t i, std::size_t j) const {
        auto row = edges_of_consumer(i);
        return std::binary_search(row.begin(), row.end(), Edge{i, j});
    }

    double y(std::size_t i, std::size_t j) const { return has_edge(i, j) ? 1.0 : 0.0; }

    Eigen::VectorXd z(std::size_t i, std::size_t j) const {
        check_dyad(i, j);
        Eigen::VectorXd out(feature_dim());
        encoder_.features(i, j, out.data());
        return out;
    }

    /// R_ij = (1, Z_ij')'.
    Eigen::VectorXd regressor(std::size_t i, std::size_t j) const {
        check_dyad(i, j);
        Eigen::VectorXd out(feature_dim() + 1);
        out[0] = 1.0;
        encoder_.features(i, j, out.data() + 1);
        return out;
    }

    /// R for consumer i facing a product described by `profile`.
    Eigen::VectorXd regressor_for_profile(std::size_t i, const AttributeRow& profile) const {
        if (i >= n_consumers()) throw InputError("consumer index out of range");
        Eigen::VectorXd out(feature_dim() + 1);
        out[0] = 1.0;
        for (std::size_t k = 0; k < feature_dim(); ++k)
            out[k + 1] = FeatureEncoder::apply(encoder_.transform(k), encoder_.consumer_value(k, i),
                                               encoder_.encode_product_row(k, profile));
        return out;
    }

    void check_dyad(std::size_t i, std::size_t j) const {
        if (i >= n_consumers() || j >= n_products())
            throw InputError("dyad (" + std::to_string(i) + ", " + std::to_string(j) +
                             ") out of range for N=" + std::to_string(n_consumers()) +
                             ", M=" + std::to_string(n_products()));
    }

    // Cell structure.
    std::size_t n_consumer_cells() const { return consumer_cell_count_.size(); }
    std::size_t n_product_cells() const { return product_cell_count_.size(); }
    std::size_t consumer_cell(std::size_t i) const { return consumer_cell_[i]; }
    std::size_t product_cell(std::size_t j) const { return product_cell_[j]; }
    double consumer_cell_count(std::size_t c) const { return consumer_cell_count_[c]; }
    double product_cell_count(std::size_t c) const { return product_cell_count_[c]; }

    /// R for a (consumer cell, product cell) pair, written into `out` (length d+1).
    void cell_regressor(std::size_t cc, std::size_t pc, Eigen::VectorXd& out) const {
        out.resize(feature_dim() + 1);
        out[0] = 1.0;
        encoder_.features(consumer_rep_[cc], product_rep_[pc], out.data() + 1);
    }

    /// Calls f(cc, pc, weight, R) for every cell pair; weight = n_cc * n_pc.
    template <class F>
    void for_each_cell_pair(F&& f) const {
        Eigen::VectorXd r(feature_dim() + 1);
        for (std::size_t cc = 0; cc < n_consumer_cells(); ++cc) {
            for (std::size_t pc = 0; pc < n_product_cells(); ++pc) {
                cell_regressor(cc, pc, r);
                f(cc, pc, consumer_cell_count_[cc] * product_cell_count_[pc],
                  static_cast<const Eigen::VectorXd&>(r));
            }
        }
    }

    /// Calls f(edge, R) for every edge in sorted order.
    template <class F>
    void for_each_edge(F&& f) const {
        Eigen::VectorXd r(feature_dim() + 1);
        for (const Edge& e : edges_) {
            cell_regressor(consumer_cell_[e.consumer], product_cell_[e.product], r);
            f(e, static_cast<const Eigen::VectorXd&>(r));
        }
    }

private:
    void build_cells() {
        const std::size_t d = feature_dim();
        std::map<std::vector<double>, std::size_t> ckeys, pkeys;
        consumer_cell_.resize(n_consumers());
        for (std::size_t i = 0; i < n_consumers(); ++i) {
            std::vector<double> key(d, 0.0);
            for (std::size_t k = 0; k < d; ++k)
                if (uses_consumer(encoder_.transform(k))) key[k] = encoder_.consumer_value(k, i);
            auto [it, fresh] = ckeys.emplace(std::move(key), consumer_cell_count_.size());
            if (fresh) {
                consumer_cell_count_.push_back(0.0);
                consumer_rep_.push_back(i);
            }
            consumer_cell_[i] = it->second;
            consumer_cell_count_[it->second] += 1.0;
        }
        product_cell_.resize(n_products());
        for (std::size_t j = 0; j < n_products(); ++j) {
            std::vector<double> key(d, 0.0);
            for (std::size_t k = 0; k < d; ++k)
                if (uses_product(encoder_.transform(k))) key[k] = encoder_.product_value(k, j);
            auto [it, fresh] = pkeys.emplace(std::move(key), product_cell_count_.size());
            if (fresh) {
                product_cell_count_.push_back(0.0);
                product_rep_.push_back(j);
            }
            product_cell_[j] = it->second;
            product_cell_count_[it->second] += 1.0;
        }
    }

    AttributeTable consumers_;
    AttributeTable products_;
    FeatureMap feature_map_;
    FeatureEncoder encoder_;
    std::vector<Edge> edges_;
    std::vector<std::size_t> consumer_offsets_;

    std::vector<std::size_t> consumer_cell_, product_cell_;
    std::vector<double> consumer_cell_count_, product_cell_count_;
    std::vector<std::size_t> consumer_rep_, product_rep_;
};

/// Parameter point on the fixed scale: alpha > 0, slopes beta, and the size
/// n that maps alpha to the logit intercept alpha_n = ln(alpha / n).
struct Theta {
    double alpha = 1.0;
    Eigen::VectorXd beta;
    std::size_t n = 1;

    Theta() = default;
    Theta(double alpha_, Eigen::VectorXd beta_, std::size_t n_)
        : alpha(alpha_), beta(std::move(beta_)), n(n_) {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be positive");
        if (n == 0) throw InputError("n must be positive");
    }

    double alpha_n() const { return std::log(alpha / static_cast<double>(n)); }

    /// theta_n = (alpha_n, beta')'.
    Eigen::VectorXd stacked() const {
        Eigen::VectorXd out(beta.size() + 1);
        out[0] = alpha_n();
        out.tail(beta.size()) = beta;
        return out;
    }

    static Theta from_stacked(const Eigen::VectorXd& theta_n, std::size_t n) {
        if (theta_n.size() < 1) throw InputError("empty parameter vector");
        return Theta(static_cast<double>(n) * std::exp(theta_n[0]), theta_n.tail(theta_n.size() - 1),
                     n);
    }
};

struct SummaryStats {
    double rho_hat = 0.0;       // |edges| / NM
    double lambda_c_hat = 0.0;  // M * rho_hat
    double lambda_p_hat = 0.0;  // N * rho_hat
    double phi_n = 0.0;         // M / n
};

inline SummaryStats summary_stats(const DyadDesign& design) {
    SummaryStats s;
    s.rho_hat = static_cast<double>(design.n_edges()) / design.dyad_count();
    s.lambda_c_hat = static_cast<double>(design.n_products()) * s.rho_hat;
    s.lambda_p_hat = static_cast<double>(design.n_consumers()) * s.rho_hat;
    s.phi_n = static_cast<double>(design.n_products()) / static_cast<double>(design.n());
    return s;
}

/// ln(1 + exp(v)) without overflow.
inline double softplus(double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

/// Logistic CDF e(v) = exp(v) / (1 + exp(v)).
inline double logit(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double ev = std::exp(v);
    return ev / (1.0 + ev);
}

/// ln e(v); finite for every finite v, including where e(v) underflows.
inline double log_logit(double v) { return -softplus(-v); }

namespace detail {
inline void check_theta(const DyadDesign& design, const Eigen::VectorXd& theta_n) {
    if (static_cast<std::size_t>(theta_n.size()) != design.feature_dim() + 1)
        throw InputError("parameter has dimension " + std::to_string(theta_n.size()) +
                         ", design needs " + std::to_string(design.feature_dim() + 1));
}
} // namespace detail

/// L_n(theta) = (1/NM) sum_ij l_ij(theta_n) with the logit kernel
/// l_ij = (2Y-1) R'theta - ln(1 + exp((2Y-1) R'theta)).
///
/// All dyads contribute the Y=0 branch -softplus(v); each edge then adds
/// l(1) - l(0) = v.
inline double composite_loglik(const DyadDesign& design, const Eigen::VectorXd& theta_n) {
    detail::check_theta(design, theta_n);
    double dense = 0.0;
    design.for_each_cell_pair([&](std::size_t, std::size_t, double w, const Eigen::VectorXd& r) {
        dense -= w * softplus(r.dot(theta_n));
    });
    double edge = 0.0;
    design.for_each_edge([&](const Edge&, const Eigen::VectorXd& r) { edge += r.dot(theta_n); });
    return (dense + edge) / design.dyad_count();
}

inline double composite_loglik(const DyadDesign& design, const Theta& theta) {
    return composite_loglik(design, theta.stacked());
}

/// S_n(theta) = (1/NM) sum_ij (Y_ij - e_ij) R_ij.
inline Eigen::VectorXd score(const DyadDesign& design, const Eigen::VectorXd& theta_n) {
    detail::check_theta(design, theta_n);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(theta_n.size());
    design.for_each_cell_pair([&](std::size_t, std::size_t, double w, const Eigen::VectorXd& r) {
        s.noalias() -= (w * logit(r.dot(theta_n))) * r;
    });
    design.for_each_edge([&](const Edge&, const Eigen::VectorXd& r) { s += r; });
    return s / design.dyad_count();
}

inline Eigen::VectorXd score(const DyadDesign& design, const Theta& theta) {
    return score(design, theta.stacked());
}

/// H_n(theta) = -(1/NM) sum_ij e_ij (1 - e_ij) R_ij R_ij'. Does not depend on Y.
inline Eigen::MatrixXd hessian(const DyadDesign& design, const Eigen::VectorXd& theta_n) {
    detail::check_theta(design, theta_n);
    const Eigen::Index p = theta_n.size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
    design.for_each_cell_pair([&](std::size_t, std::size_t, double w, const Eigen::VectorXd& r) {
        const double e = logit(r.dot(theta_n));
        h.selfadjointView<Eigen::Lower>().rankUpdate(r, -w * e * (1.0 - e));
    });
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return h / design.dyad_count();
}

inline Eigen::MatrixXd hessian(const DyadDesign& design, const Theta& theta) {
    return hessian(design, theta.stacked());
}

/// Finite-support distribution of Z.
struct ZDistribution {
    std::vector<Eigen::VectorXd> support;
    std::vector<double> weights;
};

/// Limit of the rescaled Hessian, stored with a positive sign:
///   Gamma(theta) = alpha * E[exp(Z'beta) (1, Z')' (1, Z')],
/// so that n * H_n(theta_n) -> -Gamma(theta) and Gamma is positive definite.
inline Eigen::MatrixXd gamma_limit(const Theta& theta, const ZDistribution& z_distribution) {
    if (z_distribution.support.size() != z_distribution.weights.size() ||
        z_distribution.support.empty())
        throw InputError("Z distribution needs one weight per support point");
    double total = 0.0;
    for (double w : z_distribution.weights) {
        if (w < 0.0) throw InputError("negative weight in Z distribution");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-10)
        throw InputError("Z distribution weights sum to " + std::to_string(total) + ", not 1");

    const Eigen::Index p = theta.beta.size() + 1;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd r(p);
    for (std::size_t s = 0; s < z_distribution.support.size(); ++s) {
        const Eigen::VectorXd& z = z_distribution.support[s];
        if (z.size() != theta.beta.size()) throw InputError("support point has wrong dimension");
        r[0] = 1.0;
        r.tail(z.size()) = z;
        g.noalias() += z_distribution.weights[s] * std::exp(z.dot(theta.beta)) * (r * r.transpose());
    }
    return theta.alpha * g;
}

} // namespace dyadlogit
