#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "attributes.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "montecarlo.hpp"
#include "simulator.hpp"
#include "variance.hpp"

namespace dyadlogit {

/// Paths of an observed dataset.
struct DataPaths {
    std::filesystem::path edges;
    std::filesystem::path consumers;
    std::filesystem::path products;
};

/// Effects requested alongside a fit.
struct EffectsRequest {
    std::vector<AttributeRow> profiles;  // one aggregate effect per product profile
    bool ape = false;
};

/// Monte Carlo settings; combined with the graphon block into an McStudy.
struct StudySettings {
    std::vector<std::size_t> n_grid;
    std::size_t replications = 200;
    std::optional<AttributeRow> aggregate_x;
    bool ape = true;
};

/// One YAML document drives every subcommand:
///
///   features:   list of {name, consumer_column, product_column, transform}
///   fit:        {max_iter, grad_tol, step_halving_max}
///   inference:  {modes: [...], level}
///   effects:    {profiles: [{col: value, ...}], ape}
///   data:       {edges, consumers, products}       (paths relative to the file)
///   graphon:    {alpha0, beta0, phi, rho_a, rho_b, dependence,
///                consumer_attrs: {columns, support, probs}, product_attrs: {...}}
///   study:      {n_grid, replications, aggregate_x, ape}
///   seed, threads, output
///
/// `data` and `graphon` are mutually exclusive. Unknown keys are rejected.
struct StudyConfig {
    FeatureMap features;
    FitOptions fit;
    std::vector<VarianceMode> modes = all_variance_modes();
    double level = 0.95;
    EffectsRequest effects;
    std::optional<DataPaths> data;
    std::optional<GraphonConfig> graphon;
    std::optional<StudySettings> study;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::optional<std::filesystem::path> output;
    std::uint64_t source_hash = 0;  // FNV-1a of the file bytes

    McStudy mc_study() const {
        if (!graphon) throw ConfigError("an mc study needs a 'graphon' block");
        if (!study) throw ConfigError("an mc study needs a 'study' block");
        McStudy s;
        s.graphon = *graphon;
        s.n_grid = study->n_grid;
        s.replications = study->replications;
        s.master_seed = seed;
        s.level = level;
        s.fit = fit;
        s.aggregate_x = study->aggregate_x;
        s.ape = study->ape;
        s.threads = threads;
        return s;
    }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline std::string yaml_where(const YAML::Node& node) {
    const YAML::Mark m = node.Mark();
    if (m.is_null()) return "";
    return " (line " + std::to_string(m.line + 1) + ")";
}

inline void check_keys(const YAML::Node& map, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!map.IsMap()) throw ConfigError("'" + where + "' must be a mapping" + yaml_where(map));
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in '" + where + "'" + yaml_where(kv.first));
    }
}

template <class T>
T get(const YAML::Node& node, const std::string& what) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("'" + what + "' has the wrong type" + yaml_where(node));
    }
}

inline AttributeRow read_profile(const YAML::Node& node, const std::string& what) {
    if (!node.IsMap()) throw ConfigError("'" + what + "' must map column names to values");
    AttributeRow row;
    for (const auto& kv : node) row[kv.first.as<std::string>()] = get<std::string>(kv.second, what);
    return row;
}

inline AttributeSpec read_attr_spec(const YAML::Node& node, const std::string& what) {
    check_keys(node, what, {"columns", "support", "probs"});
    AttributeSpec s;
    s.columns = get<std::vector<std::string>>(node["columns"], what + ".columns");
    const YAML::Node sup = node["support"];
    if (!sup || !sup.IsSequence()) throw ConfigError("'" + what + ".support' must be a list");
    for (const auto& pt : sup) {
        if (pt.IsSequence())
            s.support.push_back(get<std::vector<double>>(pt, what + ".support"));
        else
            s.support.push_back({get<double>(pt, what + ".support")});
    }
    s.probs = get<std::vector<double>>(node["probs"], what + ".probs");
    s.validate(what);
    return s;
}

inline FeatureMap read_features(const YAML::Node& node) {
    if (!node.IsSequence()) throw ConfigError("'features' must be a list");
    FeatureMap fm;
    std::set<std::string> seen;
    for (const auto& f : node) {
        check_keys(f, "features", {"name", "consumer_column", "product_column", "transform"});
        FeatureSpec spec;
        if (!f["name"] || !f["transform"])
            throw ConfigError("every feature needs 'name' and 'transform'" + yaml_where(f));
        spec.name = get<std::string>(f["name"], "features.name");
        spec.transform = parse_transform(get<std::string>(f["transform"], "features.transform"));
        if (f["consumer_column"]) spec.consumer_column = get<std::string>(f["consumer_column"], "consumer_column");
        if (f["product_column"]) spec.product_column = get<std::string>(f["product_column"], "product_column");
        if (uses_consumer(spec.transform) && spec.consumer_column.empty())
            throw ConfigError("feature '" + spec.name + "' needs consumer_column");
        if (uses_product(spec.transform) && spec.product_column.empty())
            throw ConfigError("feature '" + spec.name + "' needs product_column");
        if (!seen.insert(spec.name).second)
            throw ConfigError("duplicate feature name '" + spec.name + "'");
        fm.specs.push_back(std::move(spec));
    }
    return fm;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace detail

/// Parses a config document. `base_dir` resolves relative data paths.
inline StudyConfig parse_config(const std::string& text,
                                const std::filesystem::path& base_dir = {}) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    StudyConfig cfg;
    cfg.source_hash = fnv1a64(text);
    if (root.IsNull()) return cfg;
    detail::check_keys(root, "<root>",
                       {"features", "fit", "inference", "effects", "data", "graphon", "study",
                        "seed", "threads", "output"});

    if (root["features"]) cfg.features = detail::read_features(root["features"]);

    if (const YAML::Node f = root["fit"]) {
        detail::check_keys(f, "fit", {"max_iter", "grad_tol", "step_halving_max"});
        if (f["max_iter"]) cfg.fit.max_iter = detail::get<int>(f["max_iter"], "fit.max_iter");
        if (f["grad_tol"]) cfg.fit.grad_tol = detail::get<double>(f["grad_tol"], "fit.grad_tol");
        if (f["step_halving_max"])
            cfg.fit.step_halving_max = detail::get<int>(f["step_halving_max"], "fit.step_halving_max");
        cfg.fit.validate();
    }

    if (const YAML::Node inf = root["inference"]) {
        detail::check_keys(inf, "inference", {"modes", "level"});
        if (inf["modes"]) {
            cfg.modes.clear();
            for (const auto& m : detail::get<std::vector<std::string>>(inf["modes"], "inference.modes"))
                cfg.modes.push_back(parse_variance_mode(m));
            if (cfg.modes.empty()) throw ConfigError("'inference.modes' is empty");
        }
        if (inf["level"]) cfg.level = detail::get<double>(inf["level"], "inference.level");
        normal_critical_value(cfg.level);
    }

    if (const YAML::Node eff = root["effects"]) {
        detail::check_keys(eff, "effects", {"profiles", "ape"});
        if (eff["profiles"]) {
            if (!eff["profiles"].IsSequence()) throw ConfigError("'effects.profiles' must be a list");
            for (const auto& p : eff["profiles"])
                cfg.effects.profiles.push_back(detail::read_profile(p, "effects.profiles"));
        }
        if (eff["ape"]) cfg.effects.ape = detail::get<bool>(eff["ape"], "effects.ape");
    }

    if (const YAML::Node d = root["data"]) {
        detail::check_keys(d, "data", {"edges", "consumers", "products"});
        DataPaths dp;
        for (auto [key, dst] : {std::pair{"edges", &dp.edges}, std::pair{"consumers", &dp.consumers},
                                std::pair{"products", &dp.products}}) {
            if (!d[key]) throw ConfigError(std::string("'data.") + key + "' is required");
            std::filesystem::path p = detail::get<std::string>(d[key], key);
            *dst = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        }
        cfg.data = dp;
    }

    if (const YAML::Node g = root["graphon"]) {
        detail::check_keys(g, "graphon", {"alpha0", "beta0", "phi", "rho_a", "rho_b", "dependence",
                                          "consumer_attrs", "product_attrs"});
        GraphonConfig gc;
        if (!g["alpha0"] || !g["beta0"] || !g["consumer_attrs"] || !g["product_attrs"])
            throw ConfigError("'graphon' needs alpha0, beta0, consumer_attrs and product_attrs");
        gc.alpha0 = detail::get<double>(g["alpha0"], "graphon.alpha0");
        const auto b = detail::get<std::vector<double>>(g["beta0"], "graphon.beta0");
        gc.beta0 = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
        if (g["phi"]) gc.phi = detail::get<double>(g["phi"], "graphon.phi");
        if (g["rho_a"]) gc.rho_a = detail::get<double>(g["rho_a"], "graphon.rho_a");
        if (g["rho_b"]) gc.rho_b = detail::get<double>(g["rho_b"], "graphon.rho_b");
        if (g["dependence"])
            gc.dependence = parse_dependence(detail::get<std::string>(g["dependence"], "graphon.dependence"));
        gc.consumer_attrs = detail::read_attr_spec(g["consumer_attrs"], "graphon.consumer_attrs");
        gc.product_attrs = detail::read_attr_spec(g["product_attrs"], "graphon.product_attrs");
        gc.feature_map = cfg.features;
        cfg.graphon = std::move(gc);
    }

    if (cfg.data && cfg.graphon)
        throw ConfigError("config has both a 'data' and a 'graphon' block; give exactly one");

    if (const YAML::Node s = root["study"]) {
        detail::check_keys(s, "study", {"n_grid", "replications", "aggregate_x", "ape"});
        StudySettings st;
        if (!s["n_grid"]) throw ConfigError("'study.n_grid' is required");
        for (long v : detail::get<std::vector<long>>(s["n_grid"], "study.n_grid")) {
            if (v < 10) throw ConfigError("study.n_grid entries must be >= 10");
            st.n_grid.push_back(static_cast<std::size_t>(v));
        }
        if (s["replications"]) {
            const long r = detail::get<long>(s["replications"], "study.replications");
            if (r < 2) throw ConfigError("study.replications must be >= 2");
            st.replications = static_cast<std::size_t>(r);
        }
        if (s["aggregate_x"]) st.aggregate_x = detail::read_profile(s["aggregate_x"], "study.aggregate_x");
        if (s["ape"]) st.ape = detail::get<bool>(s["ape"], "study.ape");
        cfg.study = std::move(st);
    }

    if (root["seed"]) cfg.seed = detail::get<std::uint64_t>(root["seed"], "seed");
    if (root["threads"]) {
        const int t = detail::get<int>(root["threads"], "threads");
        if (t < 1) throw ConfigError("threads must be >= 1");
        cfg.threads = static_cast<unsigned>(t);
    }
    if (root["output"]) {
        std::filesystem::path p = detail::get<std::string>(root["output"], "output");
        cfg.output = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }
    return cfg;
}

inline StudyConfig load_config(const std::filesystem::path& path) {
    return parse_config(detail::read_file(path), path.parent_path());
}

/// Reads only the feature map from a config file (empty for an intercept-only model).
inline FeatureMap load_feature_map(const std::filesystem::path& path) {
    return load_config(path).features;
}

} // namespace dyadlogit
