#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "core_model.hpp"
#include "effects.hpp"
#include "estimator.hpp"
#include "montecarlo.hpp"
#include "simulator.hpp"
#include "variance.hpp"

namespace dyadlogit {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

using json = nlohmann::ordered_json;

/// Estimates, standard errors, intervals and covariance on one coefficient scale.
struct CoefficientBlock {
    Eigen::VectorXd estimates, std_errors, lower, upper;
    Eigen::MatrixXd vcov;
};

struct ModeBlock {
    VarianceMode mode = VarianceMode::dyadic_robust;
    double level = 0.95;
    bool psd = true;
    double min_eigenvalue = 0.0;
    CoefficientBlock sequence_scale;  // (alpha_n, beta)
    CoefficientBlock alpha_scale;     // (alpha, beta), delta method for alpha
};

/// Everything `fit` and `effects` write to result.json.
struct ResultBundle {
    std::string tool_version = kToolVersion;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::size_t n_consumers = 0, n_products = 0, n_edges = 0;
    SummaryStats summary;
    std::vector<std::string> parameter_names;
    bool converged = false;
    int iterations = 0;
    double final_grad_norm = 0.0;
    double loglik = 0.0;
    std::string diagnostic;
    Eigen::VectorXd theta_n;      // (alpha_n, beta)
    Eigen::VectorXd theta_alpha;  // (alpha, beta)
    std::vector<ModeBlock> modes;
    std::vector<AggregateEffect> aggregate;
    std::optional<ApeResult> ape;
};

inline ModeBlock make_mode_block(const FitResult& fit, const VarianceReport& rep) {
    ModeBlock b;
    b.mode = rep.mode;
    b.level = rep.level;
    b.psd = rep.psd;
    b.min_eigenvalue = rep.min_eigenvalue;
    b.sequence_scale = {rep.estimates, rep.std_errors, rep.lower, rep.upper, rep.vcov_theta};

    const double z = normal_critical_value(rep.level);
    CoefficientBlock& a = b.alpha_scale;
    a.estimates = fit.theta_n;
    a.estimates[0] = fit.theta_hat.alpha;
    a.vcov = vcov_for_alpha_level(fit, rep);
    a.std_errors = a.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    a.lower = a.estimates - z * a.std_errors;
    a.upper = a.estimates + z * a.std_errors;
    return b;
}

inline ResultBundle make_bundle(const FitResult& fit, const DyadDesign& design,
                                const std::vector<VarianceReport>& reports) {
    ResultBundle r;
    r.n_consumers = design.n_consumers();
    r.n_products = design.n_products();
    r.n_edges = design.n_edges();
    r.summary = summary_stats(design);
    r.parameter_names = detail::parameter_names(design);
    r.converged = fit.converged;
    r.iterations = fit.iterations;
    r.final_grad_norm = fit.final_grad_norm;
    r.loglik = fit.loglik;
    r.diagnostic = fit.diagnostic;
    r.theta_n = fit.theta_n;
    r.theta_alpha = fit.theta_n;
    if (r.theta_alpha.size() > 0) r.theta_alpha[0] = fit.theta_hat.alpha;
    for (const auto& rep : reports) r.modes.push_back(make_mode_block(fit, rep));
    return r;
}

// ---------------------------------------------------------------------------
// JSON conversion. Non-finite doubles become null and are read back as NaN.

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double to_num(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(num(v[k]));
    return a;
}

inline Eigen::VectorXd json_vec(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t k = 0; k < a.size(); ++k) v[static_cast<Eigen::Index>(k)] = to_num(a[k]);
    return v;
}

inline json mat_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(num(m(r, c)));
        a.push_back(std::move(row));
    }
    return a;
}

inline Eigen::MatrixXd json_mat(const json& a) {
    const auto rows = static_cast<Eigen::Index>(a.size());
    const auto cols = rows ? static_cast<Eigen::Index>(a[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = to_num(a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
    return m;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

inline std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

inline json block_json(const CoefficientBlock& b) {
    return json{{"estimates", vec_json(b.estimates)}, {"std_errors", vec_json(b.std_errors)},
                {"lower", vec_json(b.lower)},         {"upper", vec_json(b.upper)},
                {"vcov", mat_json(b.vcov)}};
}

inline CoefficientBlock json_block(const json& j) {
    return {json_vec(j.at("estimates")), json_vec(j.at("std_errors")), json_vec(j.at("lower")),
            json_vec(j.at("upper")), json_mat(j.at("vcov"))};
}

inline json aggregate_json(const AggregateEffect& a) {
    json x = json::object();
    for (const auto& [k, v] : a.x) x[k] = v;
    json j{{"x", x},
           {"gamma_hat", num(a.gamma_hat)},
           {"se", num(a.se)},
           {"heterogeneity_var", num(a.heterogeneity_var)},
           {"parameter_var", num(a.parameter_var)},
           {"level", a.level},
           {"lower", num(a.lower)},
           {"upper", num(a.upper)}};
    if (a.limit_reference) j["limit_reference"] = num(*a.limit_reference);
    return j;
}

inline AggregateEffect json_aggregate(const json& j) {
    AggregateEffect a;
    for (const auto& [k, v] : j.at("x").items()) a.x[k] = v.get<std::string>();
    a.gamma_hat = to_num(j.at("gamma_hat"));
    a.se = to_num(j.at("se"));
    a.heterogeneity_var = to_num(j.at("heterogeneity_var"));
    a.parameter_var = to_num(j.at("parameter_var"));
    a.level = j.at("level").get<double>();
    a.lower = to_num(j.at("lower"));
    a.upper = to_num(j.at("upper"));
    if (j.contains("limit_reference")) a.limit_reference = to_num(j.at("limit_reference"));
    return a;
}

inline json ape_json(const ApeResult& a) {
    return json{{"gamma_hat", vec_json(a.gamma_hat)},
                {"se", vec_json(a.se)},
                {"lower", vec_json(a.lower)},
                {"upper", vec_json(a.upper)},
                {"vcov", mat_json(a.vcov)},
                {"u_stat_vcov", mat_json(a.u_stat_vcov)},
                {"parameter_vcov", mat_json(a.parameter_vcov)},
                {"level", a.level},
                {"rho_hat", num(a.rho_hat)},
                {"gamma_normalized", vec_json(a.gamma_normalized)},
                {"se_normalized", vec_json(a.se_normalized)}};
}

inline ApeResult json_ape(const json& j) {
    ApeResult a;
    a.gamma_hat = json_vec(j.at("gamma_hat"));
    a.se = json_vec(j.at("se"));
    a.lower = json_vec(j.at("lower"));
    a.upper = json_vec(j.at("upper"));
    a.vcov = json_mat(j.at("vcov"));
    a.u_stat_vcov = json_mat(j.at("u_stat_vcov"));
    a.parameter_vcov = json_mat(j.at("parameter_vcov"));
    a.level = j.at("level").get<double>();
    a.rho_hat = to_num(j.at("rho_hat"));
    a.gamma_normalized = json_vec(j.at("gamma_normalized"));
    a.se_normalized = json_vec(j.at("se_normalized"));
    return a;
}

} // namespace detail

inline json to_json(const ResultBundle& r) {
    json modes = json::array();
    for (const auto& m : r.modes)
        modes.push_back(json{{"mode", to_string(m.mode)},
                             {"level", m.level},
                             {"psd", m.psd},
                             {"min_eigenvalue", detail::num(m.min_eigenvalue)},
                             {"sequence_scale", detail::block_json(m.sequence_scale)},
                             {"alpha_scale", detail::block_json(m.alpha_scale)}});
    json j{{"schema_version", kSchemaVersion},
           {"kind", "fit_result"},
           {"provenance",
            {{"tool_version", r.tool_version},
             {"config_hash", detail::hex64(r.config_hash)},
             {"seed", r.seed}}},
           {"data", {{"n_consumers", r.n_consumers}, {"n_products", r.n_products}, {"n_edges", r.n_edges}}},
           {"summary",
            {{"rho_hat", detail::num(r.summary.rho_hat)},
             {"lambda_c_hat", detail::num(r.summary.lambda_c_hat)},
             {"lambda_p_hat", detail::num(r.summary.lambda_p_hat)},
             {"phi_n", detail::num(r.summary.phi_n)}}},
           {"fit",
            {{"converged", r.converged},
             {"iterations", r.iterations},
             {"final_grad_norm", detail::num(r.final_grad_norm)},
             {"loglik", detail::num(r.loglik)},
             {"diagnostic", r.diagnostic},
             {"parameters", r.parameter_names},
             {"theta_n", detail::vec_json(r.theta_n)},
             {"theta_alpha", detail::vec_json(r.theta_alpha)}}},
           {"inference", modes}};
    json eff = json::object();
    if (!r.aggregate.empty()) {
        json ag = json::array();
        for (const auto& a : r.aggregate) ag.push_back(detail::aggregate_json(a));
        eff["aggregate"] = ag;
    }
    if (r.ape) eff["ape"] = detail::ape_json(*r.ape);
    j["effects"] = eff;
    return j;
}

inline ResultBundle bundle_from_json(const json& j) {
    if (j.at("kind") != "fit_result") throw ParseError("not a fit_result document");
    ResultBundle r;
    const json& pv = j.at("provenance");
    r.tool_version = pv.at("tool_version").get<std::string>();
    r.config_hash = detail::parse_hex64(pv.at("config_hash").get<std::string>());
    r.seed = pv.at("seed").get<std::uint64_t>();
    r.n_consumers = j.at("data").at("n_consumers").get<std::size_t>();
    r.n_products = j.at("data").at("n_products").get<std::size_t>();
    r.n_edges = j.at("data").at("n_edges").get<std::size_t>();
    const json& s = j.at("summary");
    r.summary = {detail::to_num(s.at("rho_hat")), detail::to_num(s.at("lambda_c_hat")),
                 detail::to_num(s.at("lambda_p_hat")), detail::to_num(s.at("phi_n"))};
    const json& f = j.at("fit");
    r.converged = f.at("converged").get<bool>();
    r.iterations = f.at("iterations").get<int>();
    r.final_grad_norm = detail::to_num(f.at("final_grad_norm"));
    r.loglik = detail::to_num(f.at("loglik"));
    r.diagnostic = f.at("diagnostic").get<std::string>();
    r.parameter_names = f.at("parameters").get<std::vector<std::string>>();
    r.theta_n = detail::json_vec(f.at("theta_n"));
    r.theta_alpha = detail::json_vec(f.at("theta_alpha"));
    for (const auto& m : j.at("inference")) {
        ModeBlock b;
        b.mode = parse_variance_mode(m.at("mode").get<std::string>());
        b.level = m.at("level").get<double>();
        b.psd = m.at("psd").get<bool>();
        b.min_eigenvalue = detail::to_num(m.at("min_eigenvalue"));
        b.sequence_scale = detail::json_block(m.at("sequence_scale"));
        b.alpha_scale = detail::json_block(m.at("alpha_scale"));
        r.modes.push_back(std::move(b));
    }
    const json& eff = j.at("effects");
    if (eff.contains("aggregate"))
        for (const auto& a : eff.at("aggregate")) r.aggregate.push_back(detail::json_aggregate(a));
    if (eff.contains("ape")) r.ape = detail::json_ape(eff.at("ape"));
    return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo report. The thread count is deliberately absent so that the
// document depends only on the study definition and the master seed.

inline json graphon_json(const GraphonConfig& g) {
    auto attrs = [](const AttributeSpec& s) {
        json sup = json::array();
        for (const auto& pt : s.support) sup.push_back(pt);
        return json{{"columns", s.columns}, {"support", sup}, {"probs", s.probs}};
    };
    json feats = json::array();
    for (const auto& f : g.feature_map.specs)
        feats.push_back(json{{"name", f.name},
                             {"consumer_column", f.consumer_column},
                             {"product_column", f.product_column},
                             {"transform", to_string(f.transform)}});
    return json{{"alpha0", g.alpha0},
                {"beta0", detail::vec_json(g.beta0)},
                {"phi", g.phi},
                {"rho_a", g.rho_a},
                {"rho_b", g.rho_b},
                {"dependence", to_string(g.dependence)},
                {"consumer_attrs", attrs(g.consumer_attrs)},
                {"product_attrs", attrs(g.product_attrs)},
                {"features", feats}};
}

inline json to_json(const McReport& rep, std::uint64_t config_hash = 0) {
    json cells = json::array();
    for (const McCell& c : rep.cells) {
        json coefs = json::array();
        for (const auto& cs : c.coefficients) {
            json modes = json::object();
            for (const auto& [m, ms] : cs.modes)
                modes[to_string(m)] = json{{"mean_se", detail::num(ms.mean_se)},
                                           {"mean_var", detail::num(ms.mean_var)},
                                           {"var_ratio", detail::num(ms.var_ratio)},
                                           {"coverage", detail::num(ms.coverage)},
                                           {"t_skewness", detail::num(ms.t_skewness)},
                                           {"t_excess_kurtosis", detail::num(ms.t_excess_kurtosis)},
                                           {"ks_t", detail::num(ms.ks_t)}};
            coefs.push_back(json{{"name", cs.name},
                                 {"truth", detail::num(cs.truth)},
                                 {"mean_estimate", detail::num(cs.mean_estimate)},
                                 {"bias", detail::num(cs.bias)},
                                 {"emp_sd", detail::num(cs.emp_sd)},
                                 {"emp_var", detail::num(cs.emp_var)},
                                 {"rmse", detail::num(cs.rmse)},
                                 {"z_skewness", detail::num(cs.z_skewness)},
                                 {"z_excess_kurtosis", detail::num(cs.z_excess_kurtosis)},
                                 {"modes", modes}});
        }
        json cell{{"n", c.n},
                  {"n_consumers", c.n_consumers},
                  {"n_products", c.n_products},
                  {"succeeded", c.succeeded},
                  {"failed", c.failed},
                  {"mean_rho_hat", detail::num(c.mean_rho_hat)},
                  {"mean_lambda_c_hat", detail::num(c.mean_lambda_c_hat)},
                  {"coefficients", coefs}};
        if (c.aggregate)
            cell["aggregate"] = json{{"target", detail::num(c.aggregate->target)},
                                     {"mean_estimate", detail::num(c.aggregate->mean_estimate)},
                                     {"bias", detail::num(c.aggregate->bias)},
                                     {"emp_sd", detail::num(c.aggregate->emp_sd)},
                                     {"mean_se", detail::num(c.aggregate->mean_se)},
                                     {"coverage", detail::num(c.aggregate->coverage)},
                                     {"median_abs_error", detail::num(c.aggregate->median_abs_error)}};
        if (!c.ape.empty()) {
            json ape = json::array();
            for (const auto& a : c.ape)
                ape.push_back(json{{"name", a.name},
                                   {"target", detail::num(a.target)},
                                   {"mean_estimate", detail::num(a.mean_estimate)},
                                   {"emp_var", detail::num(a.emp_var)},
                                   {"mean_est_var", detail::num(a.mean_est_var)},
                                   {"var_ratio", detail::num(a.var_ratio)},
                                   {"coverage", detail::num(a.coverage)}});
            cell["ape"] = ape;
        }
        cells.push_back(std::move(cell));
    }
    json slopes{{"rmse", json::array()}, {"variance", json::array()}, {"ape_variance", json::array()}};
    for (double v : rep.slopes.rmse) slopes["rmse"].push_back(detail::num(v));
    for (double v : rep.slopes.variance) slopes["variance"].push_back(detail::num(v));
    for (double v : rep.slopes.ape_variance) slopes["ape_variance"].push_back(detail::num(v));
    if (rep.slopes.aggregate_median_abs_error)
        slopes["aggregate_median_abs_error"] = detail::num(*rep.slopes.aggregate_median_abs_error);

    json ag = nullptr;
    if (rep.study.aggregate_x) {
        ag = json::object();
        for (const auto& [k, v] : *rep.study.aggregate_x) ag[k] = v;
    }
    return json{{"schema_version", kSchemaVersion},
                {"kind", "mc_report"},
                {"provenance",
                 {{"tool_version", kToolVersion},
                  {"config_hash", detail::hex64(config_hash)},
                  {"master_seed", rep.study.master_seed}}},
                {"study",
                 {{"n_grid", rep.study.n_grid},
                  {"replications", rep.study.replications},
                  {"level", rep.study.level},
                  {"aggregate_x", ag},
                  {"ape", rep.study.ape},
                  {"graphon", graphon_json(rep.study.graphon)}}},
                {"parameters", rep.parameter_names},
                {"cells", cells},
                {"slopes", slopes},
                {"total_failed", rep.total_failed},
                {"failure_budget_exceeded", rep.failure_budget_exceeded}};
}

/// Flat tables for plotting: one row per (n, parameter, mode) and per (n, effect).
inline void write_mc_csv(const std::filesystem::path& dir, const McReport& rep) {
    std::filesystem::create_directories(dir);
    std::ofstream co(dir / "mc_coefficients.csv");
    co.precision(17);
    co << "n,parameter,truth,mean_estimate,bias,emp_sd,rmse,mode,mean_se,var_ratio,coverage,ks_t\n";
    for (const auto& c : rep.cells)
        for (const auto& cs : c.coefficients)
            for (const auto& [m, ms] : cs.modes)
                co << c.n << ',' << cs.name << ',' << cs.truth << ',' << cs.mean_estimate << ','
                   << cs.bias << ',' << cs.emp_sd << ',' << cs.rmse << ',' << to_string(m) << ','
                   << ms.mean_se << ',' << ms.var_ratio << ',' << ms.coverage << ',' << ms.ks_t << '\n';

    std::ofstream ef(dir / "mc_effects.csv");
    ef.precision(17);
    ef << "n,effect,target,mean_estimate,emp_var,mean_est_var,coverage,median_abs_error\n";
    for (const auto& c : rep.cells) {
        if (c.aggregate)
            ef << c.n << ",aggregate," << c.aggregate->target << ',' << c.aggregate->mean_estimate << ','
               << c.aggregate->emp_sd * c.aggregate->emp_sd << ','
               << c.aggregate->mean_se * c.aggregate->mean_se << ',' << c.aggregate->coverage << ','
               << c.aggregate->median_abs_error << '\n';
        for (const auto& a : c.ape)
            ef << c.n << ",ape:" << a.name << ',' << a.target << ',' << a.mean_estimate << ','
               << a.emp_var << ',' << a.mean_est_var << ',' << a.coverage << ",\n";
    }
}

// ---------------------------------------------------------------------------
// Human-readable tables.

namespace detail {
inline std::string percent(double level) {
    std::ostringstream os;
    os << level * 100 << '%';
    return os.str();
}
} // namespace detail

inline std::string format_fit_table(const ResultBundle& r) {
    using detail::percent;
    std::ostringstream os;
    os << "N = " << r.n_consumers << ", M = " << r.n_products << ", edges = " << r.n_edges
       << ", density = " << std::setprecision(6) << r.summary.rho_hat << '\n';
    os << "converged: " << (r.converged ? "yes" : "no") << " after " << r.iterations
       << " iterations, loglik/NM = " << std::setprecision(8) << r.loglik << '\n';
    if (!r.diagnostic.empty()) os << "diagnostic: " << r.diagnostic << '\n';
    os << '\n' << std::left << std::setw(22) << "parameter" << std::right << std::setw(14) << "estimate";
    for (const auto& m : r.modes) os << std::setw(20) << ("se:" + to_string(m.mode));
    os << '\n';
    os << std::fixed << std::setprecision(6);
    for (std::size_t k = 0; k < r.parameter_names.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        os << std::left << std::setw(22) << (k == 0 ? "alpha_n (intercept)" : r.parameter_names[k])
           << std::right << std::setw(14) << r.theta_n[kk];
        for (const auto& m : r.modes) os << std::setw(20) << m.sequence_scale.std_errors[kk];
        os << '\n';
    }
    if (r.theta_alpha.size() > 0) {
        os << std::left << std::setw(22) << "alpha = n exp(alpha_n)" << std::right << std::setw(14)
           << r.theta_alpha[0];
        for (const auto& m : r.modes) os << std::setw(20) << m.alpha_scale.std_errors[0];
        os << '\n';
    }
    for (const auto& a : r.aggregate) {
        os << "\naggregate effect for {";
        bool first = true;
        for (const auto& [k, v] : a.x) {
            os << (first ? "" : ", ") << k << "=" << v;
            first = false;
        }
        os << "}: " << a.gamma_hat << " (se " << a.se << ", " << percent(a.level) << " CI [" << a.lower
           << ", " << a.upper << "])\n";
    }
    if (r.ape) {
        os << "\naverage partial effects (" << percent(r.ape->level) << " CI):\n";
        for (Eigen::Index k = 0; k < r.ape->gamma_hat.size(); ++k)
            os << "  " << std::left << std::setw(20) << r.parameter_names[static_cast<std::size_t>(k) + 1]
               << std::right << std::scientific << std::setprecision(4) << r.ape->gamma_hat[k] << "  se "
               << r.ape->se[k] << "  normalised " << std::fixed << std::setprecision(4)
               << r.ape->gamma_normalized[k] << " (se " << r.ape->se_normalized[k] << ")\n";
    }
    return os.str();
}

inline std::string format_mc_table(const McReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    for (const auto& c : rep.cells) {
        os << "n = " << c.n << " (N = " << c.n_consumers << ", M = " << c.n_products << "), "
           << c.succeeded << " ok, " << c.failed << " failed\n";
        os << "  " << std::left << std::setw(16) << "parameter" << std::right << std::setw(10) << "bias"
           << std::setw(10) << "rmse";
        for (VarianceMode m : all_variance_modes()) os << std::setw(20) << ("cover:" + to_string(m));
        os << '\n';
        for (const auto& cs : c.coefficients) {
            os << "  " << std::left << std::setw(16) << cs.name << std::right << std::setw(10) << cs.bias
               << std::setw(10) << cs.rmse;
            for (VarianceMode m : all_variance_modes()) os << std::setw(20) << cs.modes.at(m).coverage;
            os << '\n';
        }
        if (c.aggregate)
            os << "  aggregate: target " << c.aggregate->target << ", mean " << c.aggregate->mean_estimate
               << ", coverage " << c.aggregate->coverage << '\n';
    }
    if (rep.failure_budget_exceeded)
        os << "WARNING: more than 2% of replications failed in at least one cell\n";
    return os.str();
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

} // namespace dyadlogit
