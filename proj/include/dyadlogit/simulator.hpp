#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attributes.hpp"
#include "core_model.hpp"
#include "errors.hpp"
#include "stats.hpp"

namespace dyadlogit {

/// Finite discrete distribution over attribute vectors (one numeric value per column).
struct AttributeSpec {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> support;
    std::vector<double> probs;

    void validate(const std::string& what) const {
        if (columns.empty()) throw ConfigError(what + ": no attribute columns");
        if (support.empty() || support.size() != probs.size())
            throw ConfigError(what + ": support and probs must be non-empty and equally long");
        double total = 0.0;
        for (std::size_t s = 0; s < support.size(); ++s) {
            if (support[s].size() != columns.size())
                throw ConfigError(what + ": support point " + std::to_string(s) +
                                  " has the wrong number of columns");
            if (!(probs[s] >= 0.0)) throw ConfigError(what + ": negative probability");
            total += probs[s];
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError(what + ": probabilities must sum to 1");
    }

    /// Attribute table with one row per support point.
    AttributeTable support_table(const std::string& prefix) const {
        std::vector<std::string> ids;
        for (std::size_t s = 0; s < support.size(); ++s) ids.push_back(prefix + std::to_string(s));
        std::vector<AttributeTable::Column> cols(columns.size());
        for (std::size_t k = 0; k < columns.size(); ++k) {
            cols[k].name = columns[k];
            for (const auto& row : support) cols[k].values.push_back(row[k]);
        }
        return AttributeTable(std::move(ids), std::move(cols));
    }
};

/// How the latent factors A_i, B_j (iid N(0,1)) enter the graph.
///
/// sparse_factor:   Y_ij = 1{V_ij <= p_ij g_a(A_i) g_b(B_j)}, V_ij ~ U(0,1),
///                  g(t) = 1 + rho sqrt(3) (2 Phi(t) - 1), so E[g] = 1, Var(g) = rho^2
///                  and Pr(Y_ij = 1 | W, X, A, B) stays O(p_ij).
/// gaussian_copula: Y_ij = 1{Phi(rho_a A_i + rho_b B_j + sqrt(1 - rho_a^2 - rho_b^2) eps_ij) <= p_ij}.
///                  Joint purchase probabilities decay slower than p^2, so the shared-index
///                  score covariances are not O(p^2) along the sparse sequence.
///
/// Both keep Pr(Y_ij = 1 | W, X) = p_ij = e(ln(alpha0 / n) + Z_ij' beta0) and reduce to
/// independent Bernoulli draws when rho_a = rho_b = 0.
enum class Dependence { sparse_factor, gaussian_copula };

inline std::string to_string(Dependence d) {
    return d == Dependence::sparse_factor ? "sparse_factor" : "gaussian_copula";
}

inline Dependence parse_dependence(const std::string& s) {
    if (s == "sparse_factor") return Dependence::sparse_factor;
    if (s == "gaussian_copula") return Dependence::gaussian_copula;
    throw ConfigError("unknown dependence kind '" + s + "'");
}

struct GraphonConfig {
    double alpha0 = 1.0;
    Eigen::VectorXd beta0;
    double phi = 0.5;  // target M / n
    AttributeSpec consumer_attrs;
    AttributeSpec product_attrs;
    double rho_a = 0.0;
    double rho_b = 0.0;
    Dependence dependence = Dependence::sparse_factor;
    FeatureMap feature_map;

    double noise_scale() const { return std::sqrt(1.0 - rho_a * rho_a - rho_b * rho_b); }

    /// Multiplicative factor g(t) of the sparse_factor kind.
    static double factor(double rho, double t) {
        return 1.0 + rho * std::sqrt(3.0) * (2.0 * stats::normal_cdf(t) - 1.0);
    }
    double max_factor() const {
        return (1.0 + std::sqrt(3.0) * rho_a) * (1.0 + std::sqrt(3.0) * rho_b);
    }

    std::size_t n_products(std::size_t n) const {
        return static_cast<std::size_t>(std::llround(phi * static_cast<double>(n)));
    }
    std::size_t n_consumers(std::size_t n) const { return n - n_products(n); }

    /// Resolved feature map over the support points; row/col = support index.
    DyadDesign support_design() const {
        return DyadDesign(consumer_attrs.support_table("w"), product_attrs.support_table("x"),
                          feature_map, {});
    }

    void validate(std::size_t smallest_n = 10) const {
        if (!(alpha0 > 0.0)) throw ConfigError("alpha0 must be positive");
        if (!(phi > 0.0 && phi < 1.0)) throw ConfigError("phi must lie in (0, 1)");
        if (!(rho_a >= 0.0 && rho_a < 1.0 && rho_b >= 0.0 && rho_b < 1.0))
            throw ConfigError("rho_a and rho_b must lie in [0, 1)");
        if (!(rho_a * rho_a + rho_b * rho_b < 1.0))
            throw ConfigError("rho_a^2 + rho_b^2 must be < 1");
        if (dependence == Dependence::sparse_factor &&
            (rho_a > 1.0 / std::sqrt(3.0) || rho_b > 1.0 / std::sqrt(3.0)))
            throw ConfigError("sparse_factor dependence needs rho_a, rho_b <= 1/sqrt(3)");
        consumer_attrs.validate("consumer_attrs");
        product_attrs.validate("product_attrs");
        if (static_cast<std::size_t>(beta0.size()) != feature_map.size())
            throw ConfigError("beta0 has " + std::to_string(beta0.size()) + " entries, feature map " +
                              std::to_string(feature_map.size()));
        if (smallest_n < 10) throw ConfigError("n must be >= 10");
        if (n_products(smallest_n) < 1 || n_consumers(smallest_n) < 1)
            throw ConfigError("phi * n leaves one side empty");
        const DyadDesign sup = support_design();
        const double an = std::log(alpha0 / static_cast<double>(smallest_n));
        for (std::size_t w = 0; w < sup.n_consumers(); ++w)
            for (std::size_t x = 0; x < sup.n_products(); ++x) {
                const double p = logit(an + sup.z(w, x).dot(beta0));
                if (!(p > 0.0 && p < 1.0))
                    throw ConfigError("marginal probability leaves (0, 1) at a support point");
                if (dependence == Dependence::sparse_factor && p * max_factor() > 1.0)
                    throw ConfigError("p_ij * max g_a g_b exceeds 1 at n = " +
                                      std::to_string(smallest_n) + "; increase n or lower rho");
            }
    }

    /// Distribution of Z_ij under independent draws of W and X.
    ZDistribution z_distribution() const {
        const DyadDesign sup = support_design();
        ZDistribution zd;
        for (std::size_t w = 0; w < sup.n_consumers(); ++w)
            for (std::size_t x = 0; x < sup.n_products(); ++x) {
                zd.support.push_back(sup.z(w, x));
                zd.weights.push_back(consumer_attrs.probs[w] * product_attrs.probs[x]);
            }
        return zd;
    }

    Theta truth(std::size_t n) const { return Theta(alpha0, beta0, n); }
};

/// Latent draws kept for oracle computations (never seen by estimators).
struct LatentRecord {
    GraphonConfig config;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> w_index;  // support index of W_i
    std::vector<std::size_t> x_index;  // support index of X_j
    Eigen::VectorXd a;                 // A_i
    Eigen::VectorXd b;                 // B_j
};

struct SimulatedGraph {
    DyadDesign design;
    LatentRecord latent;
};

namespace detail {

/// Support-level probabilities p(w, x) and normal thresholds Phi^-1(p).
struct CellProbabilities {
    std::size_t n_w = 0, n_x = 0;
    std::vector<double> p;          // row-major [w * n_x + x]
    std::vector<double> threshold;  // Phi^-1(p)
    std::vector<Eigen::VectorXd> r; // R(w, x)

    CellProbabilities(const GraphonConfig& cfg, const Theta& theta) {
        const DyadDesign sup = cfg.support_design();
        n_w = sup.n_consumers();
        n_x = sup.n_products();
        const Eigen::VectorXd tn = theta.stacked();
        for (std::size_t w = 0; w < n_w; ++w)
            for (std::size_t x = 0; x < n_x; ++x) {
                Eigen::VectorXd reg = sup.regressor(w, x);
                const double pr = logit(reg.dot(tn));
                p.push_back(pr);
                threshold.push_back(stats::normal_quantile(pr));
                r.push_back(std::move(reg));
            }
    }

    std::size_t at(std::size_t w, std::size_t x) const { return w * n_x + x; }
};

inline AttributeTable draw_table(const AttributeSpec& spec, const std::vector<std::size_t>& idx,
                                 const std::string& prefix) {
    std::vector<std::string> ids;
    ids.reserve(idx.size());
    for (std::size_t u = 0; u < idx.size(); ++u) ids.push_back(prefix + std::to_string(u));
    std::vector<AttributeTable::Column> cols(spec.columns.size());
    for (std::size_t k = 0; k < spec.columns.size(); ++k) {
        cols[k].name = spec.columns[k];
        cols[k].values.reserve(idx.size());
        for (std::size_t s : idx) cols[k].values.push_back(spec.support[s][k]);
    }
    return AttributeTable(std::move(ids), std::move(cols));
}

} // namespace detail

/// Draws one network of size n. Draw order from a single mt19937_64(seed):
/// W_1..W_N, X_1..X_M, A_1..A_N, B_1..B_M, then one draw per dyad row by row
/// (V_ij ~ U(0,1) for sparse_factor, eps_ij ~ N(0,1) for gaussian_copula).
inline SimulatedGraph simulate_graph(const GraphonConfig& config, std::size_t n, std::uint64_t seed) {
    config.validate(n);
    const std::size_t n_prod = config.n_products(n);
    const std::size_t n_cons = config.n_consumers(n);
    const detail::CellProbabilities cells(config, config.truth(n));

    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> wdist(config.consumer_attrs.probs.begin(),
                                                  config.consumer_attrs.probs.end());
    std::discrete_distribution<std::size_t> xdist(config.product_attrs.probs.begin(),
                                                  config.product_attrs.probs.end());
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    LatentRecord lat;
    lat.config = config;
    lat.n = n;
    lat.seed = seed;
    lat.w_index.resize(n_cons);
    lat.x_index.resize(n_prod);
    for (auto& w : lat.w_index) w = wdist(rng);
    for (auto& x : lat.x_index) x = xdist(rng);
    lat.a.resize(static_cast<Eigen::Index>(n_cons));
    lat.b.resize(static_cast<Eigen::Index>(n_prod));
    for (Eigen::Index i = 0; i < lat.a.size(); ++i) lat.a[i] = gauss(rng);
    for (Eigen::Index j = 0; j < lat.b.size(); ++j) lat.b[j] = gauss(rng);

    std::vector<Edge> edges;
    if (config.dependence == Dependence::sparse_factor) {
        std::vector<double> gb(n_prod);
        for (std::size_t j = 0; j < n_prod; ++j)
            gb[j] = GraphonConfig::factor(config.rho_b, lat.b[static_cast<Eigen::Index>(j)]);
        for (std::size_t i = 0; i < n_cons; ++i) {
            const double ga = GraphonConfig::factor(config.rho_a, lat.a[static_cast<Eigen::Index>(i)]);
            for (std::size_t j = 0; j < n_prod; ++j) {
                const double v = unif(rng);
                if (v <= cells.p[cells.at(lat.w_index[i], lat.x_index[j])] * ga * gb[j])
                    edges.push_back({i, j});
            }
        }
    } else {
        const double sigma = config.noise_scale();
        for (std::size_t i = 0; i < n_cons; ++i) {
            const double ai = config.rho_a * lat.a[static_cast<Eigen::Index>(i)];
            for (std::size_t j = 0; j < n_prod; ++j) {
                const double index =
                    ai + config.rho_b * lat.b[static_cast<Eigen::Index>(j)] + sigma * gauss(rng);
                if (stats::normal_cdf(index) <= cells.p[cells.at(lat.w_index[i], lat.x_index[j])])
                    edges.push_back({i, j});
            }
        }
    }

    SimulatedGraph out{
        DyadDesign(detail::draw_table(config.consumer_attrs, lat.w_index, "c"),
                   detail::draw_table(config.product_attrs, lat.x_index, "p"), config.feature_map,
                   std::move(edges)),
        std::move(lat)};
    return out;
}

/// Score-variance components of the Hoeffding-type decomposition
///   V(S_n) = S1c/N + S1p/M + (S2 - S1c - S1p)/(NM) + S3/(NM).
struct ScoreComponents {
    Eigen::MatrixXd sigma1_c;  // E[s1c s1c'], s1c(w, a) = E[sbar | W=w, A=a]
    Eigen::MatrixXd sigma1_p;
    Eigen::MatrixXd sigma2;    // E[sbar sbar']
    Eigen::MatrixXd sigma3;    // E[V(s | W, X, A, B)]

    /// Implied V(S_n) for an N x M network.
    Eigen::MatrixXd score_variance(std::size_t n_consumers, std::size_t n_products) const {
        const double nc = static_cast<double>(n_consumers);
        const double np = static_cast<double>(n_products);
        return sigma1_c / nc + sigma1_p / np + (sigma2 - sigma1_c - sigma1_p) / (nc * np) +
               sigma3 / (nc * np);
    }
};

inline constexpr int kOracleQuadratureNodes = 64;

namespace detail {

/// Pr(Y = 1 | W, X, A = a, B = b) for the cell with marginal p and threshold Phi^-1(p).
inline double conditional_probability(const GraphonConfig& cfg, double p, double threshold,
                                      double a, double b) {
    if (cfg.dependence == Dependence::sparse_factor)
        return p * GraphonConfig::factor(cfg.rho_a, a) * GraphonConfig::factor(cfg.rho_b, b);
    return stats::normal_cdf((threshold - cfg.rho_a * a - cfg.rho_b * b) / cfg.noise_scale());
}

/// s1c(w, a) = sum_x P(x) E_B[(pi - e) R], integrating B by Gauss-Hermite.
inline Eigen::VectorXd consumer_projection(const GraphonConfig& cfg, const CellProbabilities& truth,
                                           const CellProbabilities& at, const stats::GaussHermite& gh,
                                           std::size_t w, double a) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(at.r.front().size());
    for (std::size_t x = 0; x < truth.n_x; ++x) {
        const std::size_t c = truth.at(w, x);
        double m = 0.0;
        for (std::size_t k = 0; k < gh.size(); ++k)
            m += gh.weights[k] * conditional_probability(cfg, truth.p[c], truth.threshold[c], a, gh.nodes[k]);
        out.noalias() += cfg.product_attrs.probs[x] * (m - at.p[c]) * at.r[c];
    }
    return out;
}

inline Eigen::VectorXd product_projection(const GraphonConfig& cfg, const CellProbabilities& truth,
                                          const CellProbabilities& at, const stats::GaussHermite& gh,
                                          std::size_t x, double b) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(at.r.front().size());
    for (std::size_t w = 0; w < truth.n_w; ++w) {
        const std::size_t c = truth.at(w, x);
        double m = 0.0;
        for (std::size_t k = 0; k < gh.size(); ++k)
            m += gh.weights[k] * conditional_probability(cfg, truth.p[c], truth.threshold[c], gh.nodes[k], b);
        out.noalias() += cfg.consumer_attrs.probs[w] * (m - at.p[c]) * at.r[c];
    }
    return out;
}

} // namespace detail

/// Oracle components evaluated on one simulated network: the conditional
/// expectations over the other side's latent factor are done by Gauss-Hermite
/// quadrature, and the outer moments average over the realised (W_i, A_i),
/// (X_j, B_j) and dyads. Scores are evaluated at theta0.
inline ScoreComponents oracle_components(const LatentRecord& latent, const DyadDesign& design,
                                         const Theta& theta0) {
    const GraphonConfig& cfg = latent.config;
    if (design.n_consumers() != latent.w_index.size() || design.n_products() != latent.x_index.size())
        throw InputError("latent record does not match the design");
    if (static_cast<std::size_t>(theta0.beta.size()) != cfg.feature_map.size())
        throw InputError("theta0 dimension does not match the graphon config");
    const detail::CellProbabilities truth(cfg, cfg.truth(latent.n));
    const detail::CellProbabilities at(cfg, theta0);
    const stats::GaussHermite gh(kOracleQuadratureNodes);
    const Eigen::Index p = theta0.beta.size() + 1;
    const double nc = static_cast<double>(design.n_consumers());
    const double np = static_cast<double>(design.n_products());

    ScoreComponents out;
    out.sigma1_c = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < design.n_consumers(); ++i) {
        const Eigen::VectorXd s = detail::consumer_projection(
            cfg, truth, at, gh, latent.w_index[i], latent.a[static_cast<Eigen::Index>(i)]);
        out.sigma1_c.noalias() += s * s.transpose();
    }
    out.sigma1_c /= nc;

    out.sigma1_p = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t j = 0; j < design.n_products(); ++j) {
        const Eigen::VectorXd s = detail::product_projection(
            cfg, truth, at, gh, latent.x_index[j], latent.b[static_cast<Eigen::Index>(j)]);
        out.sigma1_p.noalias() += s * s.transpose();
    }
    out.sigma1_p /= np;

    std::vector<double> m2(at.p.size(), 0.0), m3(at.p.size(), 0.0);
    for (std::size_t i = 0; i < design.n_consumers(); ++i) {
        const double ai = latent.a[static_cast<Eigen::Index>(i)];
        for (std::size_t j = 0; j < design.n_products(); ++j) {
            const std::size_t c = truth.at(latent.w_index[i], latent.x_index[j]);
            const double pi = detail::conditional_probability(
                cfg, truth.p[c], truth.threshold[c], ai, latent.b[static_cast<Eigen::Index>(j)]);
            m2[c] += (pi - at.p[c]) * (pi - at.p[c]);
            m3[c] += pi * (1.0 - pi);
        }
    }
    out.sigma2 = Eigen::MatrixXd::Zero(p, p);
    out.sigma3 = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t c = 0; c < at.p.size(); ++c) {
        const Eigen::MatrixXd rr = at.r[c] * at.r[c].transpose();
        out.sigma2.noalias() += m2[c] * rr;
        out.sigma3.noalias() += m3[c] * rr;
    }
    out.sigma2 /= nc * np;
    out.sigma3 /= nc * np;
    return out;
}

/// Population components at size n, every expectation done exactly over the
/// attribute supports and by Gauss-Hermite quadrature over A and B.
inline ScoreComponents population_components(const GraphonConfig& cfg, std::size_t n,
                                             int nodes = kOracleQuadratureNodes) {
    cfg.validate(n);
    const Theta theta0 = cfg.truth(n);
    const detail::CellProbabilities truth(cfg, theta0);
    const stats::GaussHermite gh(nodes);
    const Eigen::Index p = theta0.beta.size() + 1;

    ScoreComponents out;
    out.sigma1_c = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t w = 0; w < truth.n_w; ++w)
        for (std::size_t k = 0; k < gh.size(); ++k) {
            const Eigen::VectorXd s =
                detail::consumer_projection(cfg, truth, truth, gh, w, gh.nodes[k]);
            out.sigma1_c.noalias() += cfg.consumer_attrs.probs[w] * gh.weights[k] * s * s.transpose();
        }
    out.sigma1_p = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t x = 0; x < truth.n_x; ++x)
        for (std::size_t k = 0; k < gh.size(); ++k) {
            const Eigen::VectorXd s =
                detail::product_projection(cfg, truth, truth, gh, x, gh.nodes[k]);
            out.sigma1_p.noalias() += cfg.product_attrs.probs[x] * gh.weights[k] * s * s.transpose();
        }
    out.sigma2 = Eigen::MatrixXd::Zero(p, p);
    out.sigma3 = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t w = 0; w < truth.n_w; ++w)
        for (std::size_t x = 0; x < truth.n_x; ++x) {
            const std::size_t c = truth.at(w, x);
            const double pw = cfg.consumer_attrs.probs[w] * cfg.product_attrs.probs[x];
            double m2 = 0.0, m3 = 0.0;
            for (std::size_t ka = 0; ka < gh.size(); ++ka)
                for (std::size_t kb = 0; kb < gh.size(); ++kb) {
                    const double pi = detail::conditional_probability(cfg, truth.p[c], truth.threshold[c],
                                                                      gh.nodes[ka], gh.nodes[kb]);
                    const double wt = gh.weights[ka] * gh.weights[kb];
                    m2 += wt * (pi - truth.p[c]) * (pi - truth.p[c]);
                    m3 += wt * pi * (1.0 - pi);
                }
            const Eigen::MatrixXd rr = truth.r[c] * truth.r[c].transpose();
            out.sigma2.noalias() += pw * m2 * rr;
            out.sigma3.noalias() += pw * m3 * rr;
        }
    return out;
}

/// gamma_0(x) = (1 - phi) alpha0 E_W[exp(z(W, x)' beta0)].
inline double aggregate_effect_limit(const GraphonConfig& cfg, const AttributeRow& x) {
    const DyadDesign sup = cfg.support_design();
    double m = 0.0;
    for (std::size_t w = 0; w < sup.n_consumers(); ++w) {
        const Eigen::VectorXd r = sup.regressor_for_profile(w, x);
        m += cfg.consumer_attrs.probs[w] * std::exp(r.tail(r.size() - 1).dot(cfg.beta0));
    }
    return (1.0 - cfg.phi) * cfg.alpha0 * m;
}

/// gamma_{0,n} = E[e_ij (1 - e_ij) Z_ij] at theta_{0,n}.
inline Eigen::VectorXd ape_target(const GraphonConfig& cfg, std::size_t n) {
    const detail::CellProbabilities truth(cfg, cfg.truth(n));
    const Eigen::Index d = cfg.beta0.size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    for (std::size_t w = 0; w < truth.n_w; ++w)
        for (std::size_t x = 0; x < truth.n_x; ++x) {
            const std::size_t c = truth.at(w, x);
            const double pe = truth.p[c];
            out.noalias() += cfg.consumer_attrs.probs[w] * cfg.product_attrs.probs[x] * pe *
                             (1.0 - pe) * truth.r[c].tail(d);
        }
    return out;
}

} // namespace dyadlogit
