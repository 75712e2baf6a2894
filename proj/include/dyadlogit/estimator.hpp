#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core_model.hpp"
#include "errors.hpp"

namespace dyadlogit {

struct FitOptions {
    int max_iter = 100;
    double grad_tol = 1e-8;  // on ||S_n||_inf
    int step_halving_max = 30;
    std::optional<Theta> init;  // empty = automatic start

    void validate() const {
        if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
        if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be > 0");
        if (step_halving_max < 0) throw ConfigError("step_halving_max must be >= 0");
    }
};

/// Condition number above which the Hessian counts as singular.
inline constexpr double kMaxHessianCondition = 1e12;
/// |alpha_n| beyond ln(1e9) signals a diverging intercept.
inline const double kMaxAbsIntercept = std::log(1e9);

struct FitResult {
    Theta theta_hat;
    Eigen::VectorXd theta_n;  // (alpha_n_hat, beta_hat')'
    bool converged = false;
    int iterations = 0;
    double final_grad_norm = 0.0;
    double loglik = 0.0;
    std::vector<double> loglik_trace;  // L_n after each accepted iterate, starting point first
    Eigen::MatrixXd hessian;           // H_n(theta_hat)
    Eigen::MatrixXd gamma_hat;         // -n H_n(theta_hat)
    bool gamma_positive_definite = false;
    std::string diagnostic;

    /// s_ij = (Y_ij - e_ij) R_ij at the estimate, computed on demand.
    Eigen::VectorXd score_residual(const DyadDesign& design, std::size_t i, std::size_t j) const {
        Eigen::VectorXd r = design.regressor(i, j);
        return (design.y(i, j) - logit(r.dot(theta_n))) * r;
    }
};

namespace detail {

inline std::vector<std::string> parameter_names(const DyadDesign& design) {
    std::vector<std::string> out{"(intercept)"};
    for (const auto& n : design.feature_map().names()) out.push_back(n);
    return out;
}

/// Throws SingularHessianError naming the parameters that load on the
/// near-null direction of -H.
inline void check_conditioning(const DyadDesign& design, const Eigen::MatrixXd& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-h);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double lo = ev[0];
    const double hi = ev[ev.size() - 1];
    if (lo > 0.0 && hi / lo <= kMaxHessianCondition) return;

    Eigen::VectorXd v = eig.eigenvectors().col(0);
    auto names = parameter_names(design);
    std::ostringstream msg;
    msg << "Hessian is numerically singular (condition number ";
    if (lo > 0.0)
        msg << hi / lo;
    else
        msg << "inf";
    msg << "); collinear terms:";
    for (Eigen::Index k = 0; k < v.size(); ++k)
        if (std::abs(v[k]) > 0.1) msg << " " << names[static_cast<std::size_t>(k)];
    throw SingularHessianError(msg.str());
}

} // namespace detail

/// Maximises L_n by Newton steps with step halving. A step is accepted once
/// L_n does not drop by more than 1e-12; iteration stops when ||S_n||_inf is
/// within grad_tol and the Newton step has shrunk to rounding level.
inline FitResult fit(const DyadDesign& design, const FitOptions& opts = {}) {
    opts.validate();
    const double nm = design.dyad_count();
    const auto edges = static_cast<double>(design.n_edges());
    if (design.n_edges() == 0)
        throw SeparationError("no edges: every Y_ij is 0, the intercept is not identified");
    if (edges >= nm)
        throw SeparationError("complete graph: every Y_ij is 1, the intercept is not identified");

    const std::size_t p = design.feature_dim() + 1;
    Eigen::VectorXd theta(p);
    if (opts.init) {
        theta = opts.init->stacked();
        detail::check_theta(design, theta);
    } else {
        const double rho = edges / nm;
        theta.setZero();
        theta[0] = std::log(rho / (1.0 - rho));
    }

    FitResult res;
    double ll = composite_loglik(design, theta);
    res.loglik_trace.push_back(ll);
    constexpr double kAcceptTol = 1e-12;
    constexpr double kStepTol = 1e-10;

    for (int it = 0; it < opts.max_iter; ++it) {
        const Eigen::VectorXd s = score(design, theta);
        const Eigen::MatrixXd h = hessian(design, theta);
        detail::check_conditioning(design, h);

        const Eigen::VectorXd step = (-h).ldlt().solve(s);
        res.final_grad_norm = s.lpNorm<Eigen::Infinity>();
        if (res.final_grad_norm <= opts.grad_tol && step.lpNorm<Eigen::Infinity>() <= kStepTol) {
            res.converged = true;
            break;
        }

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd cand;
        double cand_ll = ll;
        for (int half = 0; half <= opts.step_halving_max; ++half, t *= 0.5) {
            cand = theta + t * step;
            cand_ll = composite_loglik(design, cand);
            if (std::isfinite(cand_ll) && cand_ll >= ll - kAcceptTol) {
                accepted = true;
                break;
            }
        }
        res.iterations = it + 1;
        if (!accepted) {
            // No ascent possible at fp resolution; converged only if the gradient says so.
            res.converged = res.final_grad_norm <= opts.grad_tol;
            if (!res.converged) res.diagnostic = "step halving exhausted without ascent";
            break;
        }
        theta = cand;
        ll = cand_ll;
        res.loglik_trace.push_back(ll);

        if (std::abs(theta[0]) > kMaxAbsIntercept) {
            res.diagnostic = "intercept diverging (|alpha_n| > ln(1e9)); likely separation";
            break;
        }
    }
    if (!res.converged && res.diagnostic.empty())
        res.diagnostic = "maximum iterations reached";

    res.theta_n = theta;
    res.theta_hat = Theta::from_stacked(theta, design.n());
    res.loglik = ll;
    const Eigen::VectorXd s = score(design, theta);
    res.final_grad_norm = s.lpNorm<Eigen::Infinity>();
    res.hessian = hessian(design, theta);
    res.gamma_hat = -static_cast<double>(design.n()) * res.hessian;
    Eigen::LLT<Eigen::MatrixXd> llt(res.gamma_hat);
    res.gamma_positive_definite = llt.info() == Eigen::Success;
    return res;
}

/// Predicted purchase probability e(alpha_n_hat + Z_ij' beta_hat).
inline double predict(const FitResult& fit, const DyadDesign& design, std::size_t i, std::size_t j) {
    if (!fit.converged) throw StateError("predict needs a converged fit");
    return logit(design.regressor(i, j).dot(fit.theta_n));
}

} // namespace dyadlogit
