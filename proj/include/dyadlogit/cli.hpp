#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include "config.hpp"
#include "effects.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "io.hpp"
#include "montecarlo.hpp"
#include "report.hpp"
#include "simulator.hpp"
#include "variance.hpp"

namespace dyadlogit {

namespace detail {

/// Command-line misuse detected after parsing; reported with exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Product profile from `--x`: either inline "col=value,col=value" or
/// "@path/products.csv:id" referring to a row of an attribute CSV.
inline AttributeRow parse_profile(const std::string& spec) {
    AttributeRow row;
    if (!spec.empty() && spec[0] == '@') {
        const auto colon = spec.rfind(':');
        if (colon == std::string::npos || colon < 2)
            throw ConfigError("--x '@file:id' needs a file and an id");
        const std::filesystem::path file = spec.substr(1, colon - 1);
        const std::string id = spec.substr(colon + 1);
        const CsvTable t = read_csv(file);
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            if (t.rows[r][0] == id) {
                for (std::size_t c = 1; c < t.header.size(); ++c) row[t.header[c]] = t.rows[r][c];
                return row;
            }
        throw ReferentialError("--x: id '" + id + "' not found in '" + file.string() + "'");
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--x entry '" + item + "' is not of the form column=value");
        row[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
    }
    if (row.empty()) throw ConfigError("--x is empty");
    return row;
}

inline std::vector<VarianceMode> parse_modes(const std::string& list) {
    std::vector<VarianceMode> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_variance_mode(trim(item)));
    if (out.empty()) throw ConfigError("--modes is empty");
    return out;
}

inline void write_feature_yaml(const std::filesystem::path& path, const FeatureMap& fm) {
    YAML::Emitter em;
    em << YAML::BeginMap << YAML::Key << "features" << YAML::Value << YAML::BeginSeq;
    for (const auto& f : fm.specs) {
        em << YAML::BeginMap << YAML::Key << "name" << YAML::Value << f.name;
        if (uses_consumer(f.transform))
            em << YAML::Key << "consumer_column" << YAML::Value << f.consumer_column;
        if (uses_product(f.transform))
            em << YAML::Key << "product_column" << YAML::Value << f.product_column;
        em << YAML::Key << "transform" << YAML::Value << to_string(f.transform) << YAML::EndMap;
    }
    em << YAML::EndSeq << YAML::EndMap;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << em.c_str() << '\n';
}

/// Flags shared by `fit` and `effects`.
struct FitArgs {
    std::string config, edges, consumers, products, features, out, modes;
    std::optional<double> level;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> x;
    bool ape = false;
};

inline void add_fit_flags(CLI::App* sub, FitArgs& a) {
    sub->add_option("--config", a.config, "YAML config (data, features, inference, effects)");
    sub->add_option("--edges", a.edges, "edge list CSV (consumer_id,product_id)");
    sub->add_option("--consumers", a.consumers, "consumer attribute CSV");
    sub->add_option("--products", a.products, "product attribute CSV");
    sub->add_option("--features", a.features, "YAML file with the feature map");
    sub->add_option("--out", a.out, "output directory")->required();
    sub->add_option("--modes", a.modes, "comma list of dyadic_robust,iid,info_matrix");
    sub->add_option("--level", a.level, "confidence level in (0,1)");
    sub->add_option("--seed", a.seed, "seed recorded in the provenance block");
}

inline int run_fit(const FitArgs& a, bool with_effects, std::ostream& out, std::ostream& err) {
    StudyConfig cfg;
    if (!a.config.empty()) cfg = load_config(a.config);
    if (!a.features.empty()) cfg.features = load_feature_map(a.features);
    if (!a.modes.empty()) cfg.modes = parse_modes(a.modes);
    if (a.level) cfg.level = *a.level;
    if (a.seed) cfg.seed = *a.seed;
    normal_critical_value(cfg.level);

    DataPaths paths = cfg.data.value_or(DataPaths{});
    if (!a.edges.empty()) paths.edges = a.edges;
    if (!a.consumers.empty()) paths.consumers = a.consumers;
    if (!a.products.empty()) paths.products = a.products;
    if (paths.edges.empty() || paths.consumers.empty() || paths.products.empty())
        throw UsageError("need --edges, --consumers and --products (or a 'data' block in --config)");
    if (with_effects) {
        for (const auto& x : a.x) cfg.effects.profiles.push_back(parse_profile(x));
        cfg.effects.ape = cfg.effects.ape || a.ape;
        if (cfg.effects.profiles.empty() && !cfg.effects.ape)
            throw UsageError("effects needs --x and/or --ape (or an 'effects' block in --config)");
    }

    const DyadDesign design = load_design(paths.edges, paths.consumers, paths.products, cfg.features);
    const FitResult f = fit(design, cfg.fit);

    std::vector<VarianceReport> reports;
    std::optional<VarianceReport> robust;
    if (f.converged) {
        const VarianceComponents vc = variance_components(f, design);
        for (VarianceMode m : cfg.modes) reports.push_back(sandwich(f, vc, m, cfg.level));
        robust = sandwich(f, vc, VarianceMode::dyadic_robust, cfg.level);
        if (vc.meat_indefinite)
            err << "warning: the dyadic meat matrix is indefinite; robust standard errors are unreliable\n";
    }
    ResultBundle bundle = make_bundle(f, design, reports);
    bundle.config_hash = cfg.source_hash;
    bundle.seed = cfg.seed;
    if (with_effects && f.converged) {
        for (const auto& x : cfg.effects.profiles)
            bundle.aggregate.push_back(aggregate_effect(f, design, x, *robust, cfg.level));
        if (cfg.effects.ape) bundle.ape = average_partial_effect(f, design, *robust, cfg.level);
    }

    const std::filesystem::path dir = a.out;
    write_json(dir / "result.json", to_json(bundle));
    out << format_fit_table(bundle);
    if (!f.converged)
        throw StateError("estimator did not converge: " +
                         (f.diagnostic.empty() ? std::string("iteration limit reached") : f.diagnostic));
    return 0;
}

} // namespace detail

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 1 runtime or statistical error, 2 usage error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"Composite-likelihood dyadic logit for sparse bipartite networks", "dyadlogit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    detail::FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "estimate the model and its standard errors");
    detail::add_fit_flags(fit_cmd, fit_args);

    detail::FitArgs eff_args;
    CLI::App* eff_cmd = app.add_subcommand("effects", "fit, then aggregate effects and APEs");
    detail::add_fit_flags(eff_cmd, eff_args);
    eff_cmd->add_option("--x", eff_args.x,
                        "product profile 'col=value,...' or '@products.csv:id' (repeatable)");
    eff_cmd->add_flag("--ape", eff_args.ape, "report average partial effects");

    std::string sim_config, sim_out;
    std::size_t sim_n = 0;
    std::optional<std::uint64_t> sim_seed;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "draw one network from a graphon config");
    sim_cmd->add_option("--config", sim_config, "YAML config with 'graphon' and 'features'")->required();
    sim_cmd->add_option("--n", sim_n, "network size n = N + M")->required();
    sim_cmd->add_option("--seed", sim_seed, "RNG seed (default: config seed)");
    sim_cmd->add_option("--out", sim_out, "output directory")->required();

    std::string mc_config, mc_out;
    std::optional<std::uint64_t> mc_seed;
    std::optional<double> mc_level;
    std::optional<unsigned> mc_threads;
    CLI::App* mc_cmd = app.add_subcommand("mc", "Monte Carlo study over an n grid");
    mc_cmd->add_option("--config", mc_config, "YAML config with 'graphon', 'features', 'study'")->required();
    mc_cmd->add_option("--out", mc_out, "output directory (default: config 'output' or '.')");
    mc_cmd->add_option("--seed", mc_seed, "master seed (overrides config)");
    mc_cmd->add_option("--level", mc_level, "confidence level");
    mc_cmd->add_option("--threads", mc_threads, "worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*fit_cmd) return detail::run_fit(fit_args, false, out, err);
        if (*eff_cmd) return detail::run_fit(eff_args, true, out, err);

        if (*sim_cmd) {
            const StudyConfig cfg = load_config(sim_config);
            if (!cfg.graphon) throw ConfigError("simulate needs a 'graphon' block");
            const std::uint64_t seed = sim_seed.value_or(cfg.seed);
            const SimulatedGraph g = simulate_graph(*cfg.graphon, sim_n, seed);
            write_design_csv(sim_out, g.design);
            detail::write_feature_yaml(std::filesystem::path(sim_out) / "features.yaml",
                                       cfg.graphon->feature_map);
            const SummaryStats s = summary_stats(g.design);
            out << "wrote N = " << g.design.n_consumers() << ", M = " << g.design.n_products()
                << ", edges = " << g.design.n_edges() << " (density " << s.rho_hat << ") to " << sim_out
                << '\n';
            return 0;
        }

        if (*mc_cmd) {
            StudyConfig cfg = load_config(mc_config);
            if (mc_seed) cfg.seed = *mc_seed;
            if (mc_level) cfg.level = *mc_level;
            if (mc_threads) cfg.threads = *mc_threads;
            const McStudy study = cfg.mc_study();
            const McReport rep = run_mc(study);
            const std::filesystem::path dir =
                !mc_out.empty() ? std::filesystem::path(mc_out) : cfg.output.value_or(".");
            write_json(dir / "mc_report.json", to_json(rep, cfg.source_hash));
            write_mc_csv(dir, rep);
            out << format_mc_table(rep);
            if (rep.failure_budget_exceeded) {
                err << "error[StateError]: more than 2% of replications failed in at least one cell\n";
                return 1;
            }
            return 0;
        }
    } catch (const detail::UsageError& e) {
        err << "usage error: " << e.what() << "\n\n" << (*eff_cmd ? eff_cmd : fit_cmd)->help();
        return 2;
    } catch (const Error& e) {
        err << "error[" << e.kind() << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error[Internal]: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace dyadlogit
