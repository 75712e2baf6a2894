#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "core_model.hpp"
#include "estimator.hpp"
#include "variance.hpp"

namespace dyadlogit {

/// Predicted total purchases of a product with attributes x.
struct AggregateEffect {
    AttributeRow x;
    double gamma_hat = 0.0;          // sum_i e_i(x)
    double heterogeneity_var = 0.0;  // sum_i (e_i(x) - gamma_hat / N)^2
    double parameter_var = 0.0;      // Phi(x) V Phi(x)'
    double se = 0.0;
    double level = 0.95;
    double lower = 0.0, upper = 0.0;
    std::optional<double> limit_reference;  // analytic gamma_0(x) when known
};

/// Average partial effects of unit increases in each feature.
struct ApeResult {
    Eigen::VectorXd gamma_hat;   // (1/NM) sum_ij e(1-e) Z_ij
    Eigen::MatrixXd vcov;        // U-statistic part + parameter part
    Eigen::VectorXd se;
    Eigen::MatrixXd u_stat_vcov;
    Eigen::MatrixXd parameter_vcov;
    double rho_hat = 0.0;
    Eigen::VectorXd gamma_normalized;  // gamma_hat / rho_hat
    Eigen::VectorXd se_normalized;
    double level = 0.95;
    Eigen::VectorXd lower, upper;
};

inline AggregateEffect aggregate_effect(const FitResult& fit, const DyadDesign& design,
                                        const AttributeRow& x, const VarianceReport& vcov,
                                        double level = 0.95) {
    if (!fit.converged) throw StateError("aggregate effect needs a converged fit");
    const double z = normal_critical_value(level);
    const std::size_t n_cons = design.n_consumers();
    const Eigen::Index p = fit.theta_n.size();

    std::vector<double> e(n_cons);
    Eigen::VectorXd jac = Eigen::VectorXd::Zero(p);
    AggregateEffect out;
    out.x = x;
    out.level = level;
    for (std::size_t i = 0; i < n_cons; ++i) {
        const Eigen::VectorXd r = design.regressor_for_profile(i, x);
        e[i] = logit(r.dot(fit.theta_n));
        out.gamma_hat += e[i];
        jac.noalias() += (e[i] * (1.0 - e[i])) * r;
    }
    const double mean = out.gamma_hat / static_cast<double>(n_cons);
    for (double v : e) out.heterogeneity_var += (v - mean) * (v - mean);
    out.parameter_var = jac.dot(vcov.vcov_theta * jac);
    out.se = std::sqrt(std::max(0.0, out.heterogeneity_var + out.parameter_var));
    out.lower = out.gamma_hat - z * out.se;
    out.upper = out.gamma_hat + z * out.se;
    return out;
}

inline AggregateEffect aggregate_effect(const FitResult& fit, const DyadDesign& design,
                                        const AttributeRow& x, double level = 0.95) {
    const auto vc = variance_components(fit, design);
    return aggregate_effect(fit, design, x, sandwich(fit, vc, VarianceMode::dyadic_robust, level),
                            level);
}

/// APE with standard errors from
///   (a) the two-sample U-statistic meat of m_ij = e_ij(1-e_ij)Z_ij, centred at
///       the estimate and built exactly like the score meat (rows + cols - diag);
///   (b) Phi V Phi' with the finite-sample Jacobian
///       Phi = (1/NM) sum_ij e(1-e)(1-2e) Z_ij R_ij'.
inline ApeResult average_partial_effect(const FitResult& fit, const DyadDesign& design,
                                        const VarianceReport& vcov, double level = 0.95) {
    if (!fit.converged) throw StateError("average partial effect needs a converged fit");
    const double zcrit = normal_critical_value(level);
    const Eigen::Index d = static_cast<Eigen::Index>(design.feature_dim());
    const Eigen::Index p = d + 1;
    const double nm = design.dyad_count();

    ApeResult out;
    out.level = level;
    out.gamma_hat = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(d, p);
    design.for_each_cell_pair([&](std::size_t, std::size_t, double w, const Eigen::VectorXd& r) {
        const double e = logit(r.dot(fit.theta_n));
        const double de = e * (1.0 - e);
        out.gamma_hat.noalias() += (w * de) * r.tail(d);
        jac.noalias() += (w * de * (1.0 - 2.0 * e)) * r.tail(d) * r.transpose();
    });
    out.gamma_hat /= nm;
    jac /= nm;

    std::vector<Eigen::VectorXd> by_ccell(design.n_consumer_cells(), Eigen::VectorXd::Zero(d));
    std::vector<Eigen::VectorXd> by_pcell(design.n_product_cells(), Eigen::VectorXd::Zero(d));
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(d, d);
    design.for_each_cell_pair([&](std::size_t cc, std::size_t pc, double w, const Eigen::VectorXd& r) {
        const double e = logit(r.dot(fit.theta_n));
        const Eigen::VectorXd m = e * (1.0 - e) * r.tail(d) - out.gamma_hat;
        by_ccell[cc].noalias() += design.product_cell_count(pc) * m;
        by_pcell[pc].noalias() += design.consumer_cell_count(cc) * m;
        diag.noalias() += w * m * m.transpose();
    });
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t c = 0; c < by_ccell.size(); ++c)
        rows.noalias() += design.consumer_cell_count(c) * by_ccell[c] * by_ccell[c].transpose();
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t c = 0; c < by_pcell.size(); ++c)
        cols.noalias() += design.product_cell_count(c) * by_pcell[c] * by_pcell[c].transpose();

    out.u_stat_vcov = (rows + cols - diag) / (nm * nm);
    out.parameter_vcov = jac * vcov.vcov_theta * jac.transpose();
    out.vcov = out.u_stat_vcov + out.parameter_vcov;
    out.se = out.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.lower = out.gamma_hat - zcrit * out.se;
    out.upper = out.gamma_hat + zcrit * out.se;

    out.rho_hat = summary_stats(design).rho_hat;
    out.gamma_normalized = out.gamma_hat / out.rho_hat;
    out.se_normalized = out.se / out.rho_hat;
    return out;
}

inline ApeResult average_partial_effect(const FitResult& fit, const DyadDesign& design,
                                        double level = 0.95) {
    const auto vc = variance_components(fit, design);
    return average_partial_effect(fit, design,
                                  sandwich(fit, vc, VarianceMode::dyadic_robust, level), level);
}

} // namespace dyadlogit
