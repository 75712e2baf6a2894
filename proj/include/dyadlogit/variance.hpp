#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "core_model.hpp"
#include "errors.hpp"
#include "estimator.hpp"

namespace dyadlogit {

/// Row/column aggregates of the score residuals s_ij = (Y_ij - e_ij) R_ij.
///
/// The meat B = R + C - D is the sum of s_ij s_kl' over every ordered pair of
/// dyads that share a consumer or a product, each dyad paired with itself once.
struct VarianceComponents {
    std::size_t n_consumers = 0;
    std::size_t n_products = 0;
    std::vector<Eigen::VectorXd> row_sums;  // r_i = sum_j s_ij
    std::vector<Eigen::VectorXd> col_sums;  // c_j = sum_i s_ij
    Eigen::MatrixXd diag_meat;              // D = sum_ij s_ij s_ij'
    Eigen::MatrixXd row_meat;               // R = sum_i r_i r_i'
    Eigen::MatrixXd col_meat;               // C = sum_j c_j c_j'
    bool meat_indefinite = false;           // R + C - D has a clearly negative eigenvalue

    Eigen::MatrixXd meat() const { return row_meat + col_meat - diag_meat; }
};

/// Minimum eigenvalue tolerance relative to the trace used for PSD flags.
inline constexpr double kPsdTolerance = 1e-10;

namespace detail {

inline Eigen::MatrixXd sum_outer(const std::vector<Eigen::VectorXd>& vs, Eigen::Index p) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
    for (const auto& v : vs) m.selfadjointView<Eigen::Lower>().rankUpdate(v);
    m.triangularView<Eigen::StrictlyUpper>() = m.transpose();
    return m;
}

inline bool clearly_indefinite(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double scale = std::max(m.trace(), m.cwiseAbs().maxCoeff());
    return eig.eigenvalues()[0] < -kPsdTolerance * scale;
}

inline void finish_components(VarianceComponents& vc, Eigen::Index p) {
    vc.row_meat = sum_outer(vc.row_sums, p);
    vc.col_meat = sum_outer(vc.col_sums, p);
    vc.meat_indefinite = clearly_indefinite(vc.meat());
}

} // namespace detail

/// Components from an arbitrary residual function; visits all NM dyads.
/// Useful for constructed instances; the fitted path uses the cell structure.
inline VarianceComponents components_from_residuals(
    std::size_t n_consumers, std::size_t n_products, Eigen::Index dim,
    const std::function<Eigen::VectorXd(std::size_t, std::size_t)>& residual) {
    VarianceComponents vc;
    vc.n_consumers = n_consumers;
    vc.n_products = n_products;
    vc.row_sums.assign(n_consumers, Eigen::VectorXd::Zero(dim));
    vc.col_sums.assign(n_products, Eigen::VectorXd::Zero(dim));
    vc.diag_meat = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t i = 0; i < n_consumers; ++i) {
        for (std::size_t j = 0; j < n_products; ++j) {
            const Eigen::VectorXd s = residual(i, j);
            vc.row_sums[i] += s;
            vc.col_sums[j] += s;
            vc.diag_meat.noalias() += s * s.transpose();
        }
    }
    detail::finish_components(vc, dim);
    return vc;
}

/// Residual aggregates at theta_n for a design. Uses
///   r_i = sum_{j in E(i)} R_ij - sum_{product cells} n_pc e R,
///   D   = sum_all e^2 R R' + sum_edges (1 - 2e) R R',
/// with the mirror formula for c_j.
inline VarianceComponents components_at(const DyadDesign& design, const Eigen::VectorXd& theta_n) {
    detail::check_theta(design, theta_n);
    const Eigen::Index p = theta_n.size();
    VarianceComponents vc;
    vc.n_consumers = design.n_consumers();
    vc.n_products = design.n_products();

    std::vector<Eigen::VectorXd> by_ccell(design.n_consumer_cells(), Eigen::VectorXd::Zero(p));
    std::vector<Eigen::VectorXd> by_pcell(design.n_product_cells(), Eigen::VectorXd::Zero(p));
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p, p);
    design.for_each_cell_pair([&](std::size_t cc, std::size_t pc, double, const Eigen::VectorXd& r) {
        const double e = logit(r.dot(theta_n));
        by_ccell[cc].noalias() += (design.product_cell_count(pc) * e) * r;
        by_pcell[pc].noalias() += (design.consumer_cell_count(cc) * e) * r;
        const double w = design.consumer_cell_count(cc) * design.product_cell_count(pc);
        d.selfadjointView<Eigen::Lower>().rankUpdate(r, w * e * e);
    });

    vc.row_sums.resize(design.n_consumers());
    for (std::size_t i = 0; i < design.n_consumers(); ++i)
        vc.row_sums[i] = -by_ccell[design.consumer_cell(i)];
    vc.col_sums.resize(design.n_products());
    for (std::size_t j = 0; j < design.n_products(); ++j)
        vc.col_sums[j] = -by_pcell[design.product_cell(j)];

    design.for_each_edge([&](const Edge& e, const Eigen::VectorXd& r) {
        const double pr = logit(r.dot(theta_n));
        vc.row_sums[e.consumer] += r;
        vc.col_sums[e.product] += r;
        d.selfadjointView<Eigen::Lower>().rankUpdate(r, 1.0 - 2.0 * pr);
    });
    d.triangularView<Eigen::StrictlyUpper>() = d.transpose();
    vc.diag_meat = d;
    detail::finish_components(vc, p);
    return vc;
}

inline VarianceComponents variance_components(const FitResult& fit, const DyadDesign& design) {
    if (!fit.converged) throw StateError("variance components need a converged fit");
    return components_at(design, fit.theta_n);
}

enum class VarianceMode { dyadic_robust, iid, info_matrix };

inline std::string to_string(VarianceMode m) {
    switch (m) {
    case VarianceMode::dyadic_robust: return "dyadic_robust";
    case VarianceMode::iid: return "iid";
    case VarianceMode::info_matrix: return "info_matrix";
    }
    return "?";
}

inline VarianceMode parse_variance_mode(const std::string& s) {
    if (s == "dyadic_robust") return VarianceMode::dyadic_robust;
    if (s == "iid") return VarianceMode::iid;
    if (s == "info_matrix") return VarianceMode::info_matrix;
    throw ConfigError("unknown variance mode '" + s + "'");
}

inline const std::vector<VarianceMode>& all_variance_modes() {
    static const std::vector<VarianceMode> modes{VarianceMode::dyadic_robust, VarianceMode::iid,
                                                 VarianceMode::info_matrix};
    return modes;
}

/// Two-sided normal critical value for confidence level `level` (e.g. 0.95 -> 1.96).
inline double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
    boost::math::normal_distribution<double> std_normal;
    return boost::math::quantile(std_normal, 0.5 + level / 2.0);
}

struct VarianceReport {
    VarianceMode mode = VarianceMode::dyadic_robust;
    Eigen::VectorXd estimates;  // theta_n_hat
    Eigen::MatrixXd vcov_theta;
    Eigen::VectorXd std_errors;
    double level = 0.95;
    Eigen::VectorXd lower, upper;
    double min_eigenvalue = 0.0;
    bool psd = true;  // min eigenvalue >= -1e-10 * trace
};

/// Sandwich covariance of theta_n_hat.
///   dyadic_robust: H^-1 [B / (NM)^2] H^-1 with B = R + C - D
///   iid:           H^-1 [D / (NM)^2] H^-1
///   info_matrix:   (-NM H)^-1
/// No small-sample or degrees-of-freedom correction is applied.
inline VarianceReport sandwich(const FitResult& fit, const VarianceComponents& components,
                               VarianceMode mode, double level = 0.95) {
    const double z = normal_critical_value(level);
    const Eigen::MatrixXd& h = fit.hessian;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(h);
    const double scale = h.cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> heig(-h, Eigen::EigenvaluesOnly);
    const auto& hev = heig.eigenvalues();
    if (!lu.isInvertible() || !(scale > 0.0) || hev[0] <= 0.0 ||
        hev[hev.size() - 1] / hev[0] > kMaxHessianCondition)
        throw SingularHessianError("Gamma-hat is singular; sandwich undefined");
    const Eigen::MatrixXd hinv = lu.inverse();

    const double nm = static_cast<double>(components.n_consumers) *
                      static_cast<double>(components.n_products);
    VarianceReport rep;
    rep.mode = mode;
    rep.level = level;
    rep.estimates = fit.theta_n;
    switch (mode) {
    case VarianceMode::dyadic_robust:
        rep.vcov_theta = hinv * (components.meat() / (nm * nm)) * hinv;
        break;
    case VarianceMode::iid:
        rep.vcov_theta = hinv * (components.diag_meat / (nm * nm)) * hinv;
        break;
    case VarianceMode::info_matrix:
        rep.vcov_theta = -hinv / nm;
        break;
    }
    rep.vcov_theta = 0.5 * (rep.vcov_theta + rep.vcov_theta.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rep.vcov_theta, Eigen::EigenvaluesOnly);
    rep.min_eigenvalue = eig.eigenvalues()[0];
    rep.psd = rep.min_eigenvalue >= -kPsdTolerance * std::abs(rep.vcov_theta.trace());

    rep.std_errors = rep.vcov_theta.diagonal().cwiseMax(0.0).cwiseSqrt();
    rep.lower = rep.estimates - z * rep.std_errors;
    rep.upper = rep.estimates + z * rep.std_errors;
    return rep;
}

/// Delta-method covariance for (alpha, beta) where alpha = n exp(alpha_n):
/// J V J with J = diag(alpha_hat, 1, ..., 1).
inline Eigen::MatrixXd vcov_for_alpha_level(const FitResult& fit, const VarianceReport& report) {
    Eigen::VectorXd jac = Eigen::VectorXd::Ones(report.vcov_theta.rows());
    jac[0] = fit.theta_hat.alpha;
    return jac.asDiagonal() * report.vcov_theta * jac.asDiagonal();
}

} // namespace dyadlogit
