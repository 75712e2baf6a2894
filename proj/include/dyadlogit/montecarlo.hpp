#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "effects.hpp"
#include "estimator.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "variance.hpp"

namespace dyadlogit {

struct McStudy {
    GraphonConfig graphon;
    std::vector<std::size_t> n_grid;
    std::size_t replications = 200;
    std::uint64_t master_seed = 1;
    double level = 0.95;
    FitOptions fit;
    std::optional<AttributeRow> aggregate_x;  // product profile for gamma_hat(x)
    bool ape = true;
    unsigned threads = 1;

    void validate() const {
        if (n_grid.empty()) throw ConfigError("study needs at least one n");
        if (replications < 2) throw ConfigError("study needs at least two replications");
        for (std::size_t n : n_grid) graphon.validate(n);
        fit.validate();
        normal_critical_value(level);
    }
};

/// Everything kept from one replication.
struct ReplicationRecord {
    bool ok = false;
    std::string failure;
    Eigen::VectorXd theta_n;
    std::map<VarianceMode, Eigen::VectorXd> se;
    double rho_hat = 0.0;
    double lambda_c_hat = 0.0;
    double aggregate = 0.0;
    double aggregate_se = 0.0;
    Eigen::VectorXd ape;
    Eigen::VectorXd ape_se;
};

struct ModeStats {
    double mean_se = 0.0;
    double mean_var = 0.0;    // mean estimated variance
    double var_ratio = 0.0;   // mean estimated variance / empirical variance
    double coverage = 0.0;
    double t_skewness = 0.0;
    double t_excess_kurtosis = 0.0;
    double ks_t = 0.0;        // KS distance of t-statistics to N(0,1)
};

struct CoefficientStats {
    std::string name;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double emp_sd = 0.0;
    double emp_var = 0.0;
    double rmse = 0.0;
    double z_skewness = 0.0;        // of standardised estimates
    double z_excess_kurtosis = 0.0;
    std::map<VarianceMode, ModeStats> modes;
};

struct AggregateStats {
    double target = 0.0;  // gamma_0(x)
    double mean_estimate = 0.0;
    double bias = 0.0;
    double emp_sd = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    double median_abs_error = 0.0;
};

struct ApeStats {
    std::string name;
    double target = 0.0;  // gamma_{0,n}
    double mean_estimate = 0.0;
    double emp_var = 0.0;
    double mean_est_var = 0.0;
    double var_ratio = 0.0;
    double coverage = 0.0;
};

struct McCell {
    std::size_t n = 0, n_consumers = 0, n_products = 0;
    std::size_t succeeded = 0, failed = 0;
    double mean_rho_hat = 0.0;
    double mean_lambda_c_hat = 0.0;
    std::vector<CoefficientStats> coefficients;
    std::optional<AggregateStats> aggregate;
    std::vector<ApeStats> ape;
    /// t-statistics (estimate - truth) / SE per mode and coefficient, in replication order.
    std::map<VarianceMode, std::vector<std::vector<double>>> t_stats;
};

struct McSlopes {
    std::vector<double> rmse;      // per coefficient, log RMSE on log n
    std::vector<double> variance;  // per coefficient, log empirical variance on log n
    std::vector<double> ape_variance;
    std::optional<double> aggregate_median_abs_error;
};

struct McReport {
    McStudy study;
    std::vector<std::string> parameter_names;
    std::vector<McCell> cells;
    McSlopes slopes;
    std::size_t total_failed = 0;
    bool failure_budget_exceeded = false;  // > 2% failed replications in some cell
};

inline constexpr double kMaxFailureShare = 0.02;

/// One replication: simulate, fit, all variance modes, effects.
inline ReplicationRecord run_replication(const McStudy& study, std::size_t n, std::uint64_t seed) {
    ReplicationRecord rec;
    try {
        const SimulatedGraph sim = simulate_graph(study.graphon, n, seed);
        const FitResult f = fit(sim.design, study.fit);
        if (!f.converged) {
            rec.failure = f.diagnostic;
            return rec;
        }
        const auto vc = variance_components(f, sim.design);
        std::optional<VarianceReport> robust;
        for (VarianceMode m : all_variance_modes()) {
            VarianceReport rep = sandwich(f, vc, m, study.level);
            rec.se[m] = rep.std_errors;
            if (m == VarianceMode::dyadic_robust) robust = std::move(rep);
        }
        const SummaryStats ss = summary_stats(sim.design);
        rec.rho_hat = ss.rho_hat;
        rec.lambda_c_hat = ss.lambda_c_hat;
        if (study.aggregate_x) {
            const AggregateEffect ag =
                aggregate_effect(f, sim.design, *study.aggregate_x, *robust, study.level);
            rec.aggregate = ag.gamma_hat;
            rec.aggregate_se = ag.se;
        }
        if (study.ape) {
            const ApeResult ape = average_partial_effect(f, sim.design, *robust, study.level);
            rec.ape = ape.gamma_hat;
            rec.ape_se = ape.se;
        }
        rec.theta_n = f.theta_n;
        rec.ok = true;
    } catch (const Error& e) {
        rec.failure = std::string(e.kind()) + ": " + e.what();
    }
    return rec;
}

namespace detail {

template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
    threads = std::max(1u, threads);
    if (threads == 1 || count < 2) {
        for (std::size_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) body(k);
        });
    for (auto& th : pool) th.join();
}

inline McCell summarise_cell(const McStudy& study, std::size_t n,
                             const std::vector<ReplicationRecord>& recs,
                             const std::vector<std::string>& names) {
    const GraphonConfig& cfg = study.graphon;
    McCell cell;
    cell.n = n;
    cell.n_consumers = cfg.n_consumers(n);
    cell.n_products = cfg.n_products(n);
    std::vector<const ReplicationRecord*> ok;
    for (const auto& r : recs) {
        if (r.ok)
            ok.push_back(&r);
        else
            ++cell.failed;
    }
    cell.succeeded = ok.size();
    if (ok.size() < 2) return cell;

    const double zc = normal_critical_value(study.level);
    std::vector<double> tmp;
    for (const auto* r : ok) tmp.push_back(r->rho_hat);
    cell.mean_rho_hat = stats::mean(tmp);
    tmp.clear();
    for (const auto* r : ok) tmp.push_back(r->lambda_c_hat);
    cell.mean_lambda_c_hat = stats::mean(tmp);

    const Eigen::VectorXd truth = cfg.truth(n).stacked();
    for (VarianceMode m : all_variance_modes())
        cell.t_stats[m].assign(static_cast<std::size_t>(truth.size()), {});
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
        CoefficientStats cs;
        cs.name = names[static_cast<std::size_t>(k)];
        cs.truth = truth[k];
        std::vector<double> est;
        for (const auto* r : ok) est.push_back(r->theta_n[k]);
        cs.mean_estimate = stats::mean(est);
        cs.bias = cs.mean_estimate - cs.truth;
        cs.emp_var = stats::variance(est);
        cs.emp_sd = std::sqrt(cs.emp_var);
        double mse = 0.0;
        for (double e : est) mse += (e - cs.truth) * (e - cs.truth);
        cs.rmse = std::sqrt(mse / static_cast<double>(est.size()));
        std::vector<double> zs;
        for (double e : est) zs.push_back((e - cs.mean_estimate) / cs.emp_sd);
        cs.z_skewness = stats::skewness(zs);
        cs.z_excess_kurtosis = stats::excess_kurtosis(zs);

        for (VarianceMode m : all_variance_modes()) {
            ModeStats ms;
            std::vector<double> ses, vars, ts;
            std::size_t covered = 0;
            for (const auto* r : ok) {
                const double se = r->se.at(m)[k];
                ses.push_back(se);
                vars.push_back(se * se);
                const double t = (r->theta_n[k] - cs.truth) / se;
                ts.push_back(t);
                if (std::abs(t) <= zc) ++covered;
            }
            ms.mean_se = stats::mean(ses);
            ms.mean_var = stats::mean(vars);
            ms.var_ratio = ms.mean_var / cs.emp_var;
            ms.coverage = static_cast<double>(covered) / static_cast<double>(ok.size());
            ms.t_skewness = stats::skewness(ts);
            ms.t_excess_kurtosis = stats::excess_kurtosis(ts);
            ms.ks_t = stats::ks_distance_to_normal(ts);
            cell.t_stats[m][static_cast<std::size_t>(k)] = std::move(ts);
            cs.modes[m] = ms;
        }
        cell.coefficients.push_back(std::move(cs));
    }

    if (study.aggregate_x) {
        AggregateStats ag;
        ag.target = aggregate_effect_limit(cfg, *study.aggregate_x);
        std::vector<double> est, abs_err, ses;
        std::size_t covered = 0;
        for (const auto* r : ok) {
            est.push_back(r->aggregate);
            abs_err.push_back(std::abs(r->aggregate - ag.target));
            ses.push_back(r->aggregate_se);
            if (std::abs(r->aggregate - ag.target) <= zc * r->aggregate_se) ++covered;
        }
        ag.mean_estimate = stats::mean(est);
        ag.bias = ag.mean_estimate - ag.target;
        ag.emp_sd = std::sqrt(stats::variance(est));
        ag.mean_se = stats::mean(ses);
        ag.coverage = static_cast<double>(covered) / static_cast<double>(ok.size());
        ag.median_abs_error = stats::median(abs_err);
        cell.aggregate = ag;
    }

    if (study.ape) {
        const Eigen::VectorXd target = ape_target(cfg, n);
        for (Eigen::Index k = 0; k < target.size(); ++k) {
            ApeStats as;
            as.name = names[static_cast<std::size_t>(k) + 1];
            as.target = target[k];
            std::vector<double> est, vars;
            std::size_t covered = 0;
            for (const auto* r : ok) {
                est.push_back(r->ape[k]);
                vars.push_back(r->ape_se[k] * r->ape_se[k]);
                if (std::abs(r->ape[k] - as.target) <= zc * r->ape_se[k]) ++covered;
            }
            as.mean_estimate = stats::mean(est);
            as.emp_var = stats::variance(est);
            as.mean_est_var = stats::mean(vars);
            as.var_ratio = as.mean_est_var / as.emp_var;
            as.coverage = static_cast<double>(covered) / static_cast<double>(ok.size());
            cell.ape.push_back(as);
        }
    }
    return cell;
}

} // namespace detail

/// Monte Carlo study over n_grid x replications. Replication r in the cell of
/// size n uses seed stats::replication_seed(master_seed, n, r); records are
/// stored by index and summarised in index order, so the report does not
/// depend on the thread count or scheduling.
inline McReport run_mc(const McStudy& study) {
    study.validate();
    McReport rep;
    rep.study = study;
    rep.parameter_names = {"(intercept)"};
    for (const auto& nm : study.graphon.feature_map.names()) rep.parameter_names.push_back(nm);

    for (std::size_t n : study.n_grid) {
        std::vector<ReplicationRecord> recs(study.replications);
        detail::parallel_for(study.replications, study.threads, [&](std::size_t r) {
            recs[r] = run_replication(study, n, stats::replication_seed(study.master_seed, n, r));
        });
        McCell cell = detail::summarise_cell(study, n, recs, rep.parameter_names);
        rep.total_failed += cell.failed;
        if (static_cast<double>(cell.failed) >
            kMaxFailureShare * static_cast<double>(study.replications))
            rep.failure_budget_exceeded = true;
        rep.cells.push_back(std::move(cell));
    }

    if (rep.cells.size() >= 2) {
        std::vector<double> ns;
        for (const auto& c : rep.cells) ns.push_back(static_cast<double>(c.n));
        for (std::size_t k = 0; k < rep.parameter_names.size(); ++k) {
            std::vector<double> rm, va;
            for (const auto& c : rep.cells) {
                rm.push_back(c.coefficients.empty() ? NAN : c.coefficients[k].rmse);
                va.push_back(c.coefficients.empty() ? NAN : c.coefficients[k].emp_var);
            }
            rep.slopes.rmse.push_back(stats::log_log_slope(ns, rm));
            rep.slopes.variance.push_back(stats::log_log_slope(ns, va));
        }
        if (study.ape) {
            for (std::size_t k = 0; k + 1 < rep.parameter_names.size(); ++k) {
                std::vector<double> va;
                for (const auto& c : rep.cells) va.push_back(c.ape.empty() ? NAN : c.ape[k].emp_var);
                rep.slopes.ape_variance.push_back(stats::log_log_slope(ns, va));
            }
        }
        if (study.aggregate_x) {
            std::vector<double> md;
            for (const auto& c : rep.cells)
                md.push_back(c.aggregate ? c.aggregate->median_abs_error : NAN);
            rep.slopes.aggregate_median_abs_error = stats::log_log_slope(ns, md);
        }
    }
    return rep;
}

inline McReport run_mc(const GraphonConfig& config, const std::vector<std::size_t>& n_grid,
                       std::size_t replications, std::uint64_t master_seed) {
    McStudy s;
    s.graphon = config;
    s.n_grid = n_grid;
    s.replications = replications;
    s.master_seed = master_seed;
    return run_mc(s);
}

} // namespace dyadlogit
