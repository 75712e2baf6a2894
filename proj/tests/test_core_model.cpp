#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace dyadlogit;
using dyadlogit::testing::brute_loglik;
using dyadlogit::testing::brute_score;
using dyadlogit::testing::fd_gradient;
using dyadlogit::testing::fd_jacobian;
using dyadlogit::testing::random_design;
using dyadlogit::testing::random_theta;

namespace {

AttributeTable numeric_table(const std::string& col, std::vector<double> values) {
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < values.size(); ++k) ids.push_back("u" + std::to_string(k));
    AttributeTable::Column c;
    c.name = col;
    c.values = std::move(values);
    return AttributeTable(std::move(ids), {c});
}

AttributeTable label_table(const std::string& col, const std::vector<std::string>& labels) {
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        ids.push_back("u" + std::to_string(k));
        rows.push_back({labels[k]});
    }
    return AttributeTable::from_strings(ids, {col}, rows);
}

DyadDesign one_by_one(bool edge) {
    return DyadDesign(numeric_table("z", {0.0}), numeric_table("z", {0.0}), FeatureMap{},
                      edge ? std::vector<Edge>{{0, 0}} : std::vector<Edge>{});
}

} // namespace

TEST(Features, ProductOfAttributes) {
    FeatureMap fm{{{"f", "w", "x", Transform::product}}};
    const auto z = build_features(numeric_table("w", {2.0}), numeric_table("x", {3.0}), fm, 0, 0);
    ASSERT_EQ(z.size(), 1);
    EXPECT_DOUBLE_EQ(z[0], 6.0);
}

TEST(Features, AbsDiffOfEqualValuesIsZero) {
    FeatureMap fm{{{"f", "w", "x", Transform::abs_diff}}};
    EXPECT_DOUBLE_EQ(build_features(numeric_table("w", {1.0}), numeric_table("x", {1.0}), fm, 0, 0)[0], 0.0);
    EXPECT_DOUBLE_EQ(build_features(numeric_table("w", {1.0}), numeric_table("x", {-2.5}), fm, 0, 0)[0], 3.5);
}

TEST(Features, EqualityIndicatorOnCategories) {
    FeatureMap fm{{{"same_genre", "genre", "genre", Transform::equality_indicator}}};
    const auto c = label_table("genre", {"crime", "poetry"});
    const auto p = label_table("genre", {"crime", "travel"});
    EXPECT_DOUBLE_EQ(build_features(c, p, fm, 0, 0)[0], 1.0);
    EXPECT_DOUBLE_EQ(build_features(c, p, fm, 1, 0)[0], 0.0);
    EXPECT_DOUBLE_EQ(build_features(c, p, fm, 1, 1)[0], 0.0);
}

TEST(Features, OutputDimensionMatchesSpecCount) {
    FeatureMap fm{{{"a", "w", "x", Transform::product},
                   {"b", "w", "", Transform::consumer_only},
                   {"c", "", "x", Transform::product_only}}};
    const auto z = build_features(numeric_table("w", {2.0}), numeric_table("x", {5.0}), fm, 0, 0);
    ASSERT_EQ(z.size(), 3);
    EXPECT_DOUBLE_EQ(z[1], 2.0);
    EXPECT_DOUBLE_EQ(z[2], 5.0);
}

TEST(Features, MissingColumnIsConfigError) {
    FeatureMap fm{{{"f", "nope", "x", Transform::product}}};
    EXPECT_THROW(build_features(numeric_table("w", {1.0}), numeric_table("x", {1.0}), fm, 0, 0),
                 ConfigError);
}

TEST(Features, CategoricalInputToNumericTransformIsInputError) {
    FeatureMap fm{{{"f", "genre", "x", Transform::product}}};
    EXPECT_THROW(build_features(label_table("genre", {"crime"}), numeric_table("x", {1.0}), fm, 0, 0),
                 InputError);
}

TEST(Logit, ReferenceValues) {
    EXPECT_DOUBLE_EQ(logit(0.0), 0.5);
    EXPECT_NEAR(logit(std::log(2.0 / 100.0)), 0.02 / 1.02, 1e-15);
    EXPECT_NEAR(logit(std::log(2.0 / 100.0)), 0.0196078, 1e-7);
}

TEST(Logit, ExtremeArgumentsStayFinite) {
    EXPECT_EQ(logit(800.0), 1.0);
    EXPECT_GE(logit(-800.0), 0.0);
    EXPECT_LT(logit(-800.0), 1e-300);
    // The likelihood path works on the log scale, where -800 is representable.
    EXPECT_NEAR(log_logit(-800.0), -800.0, 1e-12);
    EXPECT_TRUE(std::isfinite(softplus(800.0)));
    EXPECT_NEAR(softplus(800.0), 800.0, 1e-12);
}

TEST(Logit, Symmetry) {
    for (double v : {-40.0, -7.3, -1.0, -1e-3, 0.0, 0.2, 3.0, 33.0})
        EXPECT_NEAR(logit(v) + logit(-v), 1.0, 1e-15) << v;
}

TEST(CompositeLoglik, SingleDyadValues) {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    EXPECT_NEAR(composite_loglik(one_by_one(false), zero), -std::log(2.0), 1e-15);
    EXPECT_NEAR(composite_loglik(one_by_one(true), zero), -std::log(2.0), 1e-15);
}

TEST(CompositeLoglik, FiniteForExtremeIntercept) {
    Eigen::VectorXd t(1);
    t << -800.0;
    EXPECT_TRUE(std::isfinite(composite_loglik(one_by_one(true), t)));
    EXPECT_NEAR(composite_loglik(one_by_one(true), t), -800.0, 1e-9);
}

TEST(CompositeLoglik, TwoByTwoMatchesEnumeration) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const auto d = random_design(rng, 2, 2, 2, 0.5);
        const auto t = random_theta(rng, 3);
        EXPECT_NEAR(composite_loglik(d, t), brute_loglik(d, t), 1e-14);
        EXPECT_LT((score(d, t) - brute_score(d, t)).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(CompositeLoglik, DimensionMismatchIsInputError) {
    std::mt19937_64 rng(2);
    const auto d = random_design(rng, 3, 3, 2, 0.3);
    EXPECT_THROW(composite_loglik(d, Eigen::VectorXd::Zero(2)), InputError);
    EXPECT_THROW(score(d, Eigen::VectorXd::Zero(4)), InputError);
    EXPECT_THROW(hessian(d, Eigen::VectorXd::Zero(1)), InputError);
}

TEST(CompositeLoglik, InvariantToEdgeOrderAndUnitRelabeling) {
    std::mt19937_64 rng(5);
    const auto d = random_design(rng, 5, 4, 2, 0.3, true);
    const auto t = random_theta(rng, 3);

    std::vector<Edge> reversed(d.edges().rbegin(), d.edges().rend());
    const DyadDesign d2(d.consumers(), d.products(), d.feature_map(), reversed);
    EXPECT_EQ(composite_loglik(d, t), composite_loglik(d2, t));

    // Reverse the consumer order, carrying attributes and edges along.
    const std::size_t n = d.n_consumers();
    std::vector<std::string> ids;
    std::vector<AttributeTable::Column> cols = d.consumers().columns();
    for (auto& c : cols) std::reverse(c.values.begin(), c.values.end());
    for (std::size_t i = 0; i < n; ++i) ids.push_back(d.consumers().ids()[n - 1 - i]);
    std::vector<Edge> moved;
    for (const Edge& e : d.edges()) moved.push_back({n - 1 - e.consumer, e.product});
    const DyadDesign d3(AttributeTable(ids, cols), d.products(), d.feature_map(), moved);
    EXPECT_NEAR(composite_loglik(d, t), composite_loglik(d3, t), 1e-15);
}

TEST(Score, MatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const auto d = random_design(rng, 6, 7, 3, 0.3);
        const auto t = random_theta(rng, 4);
        const Eigen::VectorXd s = score(d, t);
        const Eigen::VectorXd fd = fd_gradient([&](const Eigen::VectorXd& x) { return composite_loglik(d, x); }, t);
        EXPECT_LT((s - fd).cwiseAbs().maxCoeff() / s.cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(Hessian, SymmetricNegativeSemidefiniteAndMatchesFiniteDifferences) {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        const auto d = random_design(rng, 5, 6, 3, 0.4);
        const auto t = random_theta(rng, 4);
        const Eigen::MatrixXd h = hessian(d, t);
        EXPECT_EQ((h - h.transpose()).cwiseAbs().maxCoeff(), 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
        EXPECT_LE(eig.eigenvalues().maxCoeff(), 1e-14);
        const Eigen::MatrixXd fd = fd_jacobian([&](const Eigen::VectorXd& x) { return score(d, x); }, t);
        EXPECT_LT((h - fd).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff(), 1e-4);
    }
}

TEST(Hessian, DoesNotDependOnOutcomes) {
    std::mt19937_64 rng(29);
    const auto d = random_design(rng, 4, 4, 2, 0.5);
    const DyadDesign empty(d.consumers(), d.products(), d.feature_map(), {});
    const auto t = random_theta(rng, 3);
    EXPECT_EQ((hessian(d, t) - hessian(empty, t)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(GammaLimit, ZeroFeature) {
    ZDistribution zd{{Eigen::VectorXd::Zero(1)}, {1.0}};
    const Eigen::MatrixXd g = gamma_limit(Theta(1.0, Eigen::VectorXd::Zero(1), 100), zd);
    EXPECT_DOUBLE_EQ(g(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(g(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(g(1, 1), 0.0);
}

TEST(GammaLimit, TwoPointSupportAnalytic) {
    ZDistribution zd{{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)}, {0.5, 0.5}};
    Eigen::VectorXd beta(1);
    beta << std::log(2.0);
    const Eigen::MatrixXd g = gamma_limit(Theta(1.0, beta, 50), zd);
    EXPECT_NEAR(g(0, 0), 1.5, 1e-15);
    EXPECT_NEAR(g(0, 1), 1.0, 1e-15);
    EXPECT_NEAR(g(1, 0), 1.0, 1e-15);
    EXPECT_NEAR(g(1, 1), 1.0, 1e-15);
    const Eigen::MatrixXd g2 = gamma_limit(Theta(2.0, beta, 50), zd);
    EXPECT_LT((g2 - 2.0 * g).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GammaLimit, WeightsMustSumToOne) {
    ZDistribution zd{{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)}, {0.5, 0.4}};
    EXPECT_THROW(gamma_limit(Theta(1.0, Eigen::VectorXd::Zero(1), 10), zd), InputError);
}

TEST(GammaLimit, RescaledHessianApproachesMinusGamma) {
    // Every support point present in equal proportion: the only gap is the
    // O(1/n) curvature of e(1-e) around the linear regime.
    ZDistribution zd{{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)}, {0.5, 0.5}};
    Eigen::VectorXd beta(1);
    beta << 0.7;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t half : {50u, 200u, 800u}) {
        std::vector<double> w(2 * half);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = i < half ? 0.0 : 1.0;
        const DyadDesign d(numeric_table("w", w), numeric_table("x", {0.0}),
                           FeatureMap{{{"w", "w", "", Transform::consumer_only}}}, {});
        const Theta th(1.5, beta, d.n());
        const double gap =
            (static_cast<double>(d.n()) * hessian(d, th) + gamma_limit(th, zd)).norm();
        EXPECT_LT(gap, prev);
        prev = gap;
    }
    EXPECT_LT(prev, 0.02);
}

TEST(Theta, RejectsNonPositiveAlphaAndRoundTrips) {
    EXPECT_THROW(Theta(0.0, Eigen::VectorXd::Zero(1), 10), InputError);
    EXPECT_THROW(Theta(-1.0, Eigen::VectorXd::Zero(1), 10), InputError);
    Eigen::VectorXd b(2);
    b << 0.3, -1.0;
    const Theta t(2.5, b, 400);
    EXPECT_NEAR(t.alpha_n(), std::log(2.5 / 400.0), 1e-15);
    const Theta back = Theta::from_stacked(t.stacked(), 400);
    EXPECT_NEAR(back.alpha, 2.5, 1e-13);
    EXPECT_EQ(back.beta, b);
}

TEST(SummaryStats, DegreeIdentities) {
    std::mt19937_64 rng(3);
    const auto d = random_design(rng, 7, 5, 1, 0.3);
    const SummaryStats s = summary_stats(d);
    EXPECT_DOUBLE_EQ(s.rho_hat, static_cast<double>(d.n_edges()) / 35.0);
    EXPECT_DOUBLE_EQ(s.lambda_c_hat, 5.0 * s.rho_hat);
    EXPECT_DOUBLE_EQ(s.lambda_p_hat, 7.0 * s.rho_hat);
    EXPECT_DOUBLE_EQ(s.phi_n, 5.0 / 12.0);
}

TEST(DyadDesign, RejectsDuplicateAndOutOfRangeEdges) {
    const auto c = numeric_table("w", {0.0, 1.0});
    const auto p = numeric_table("x", {0.0, 1.0});
    EXPECT_THROW(DyadDesign(c, p, FeatureMap{}, {{0, 1}, {0, 1}}), InputError);
    EXPECT_THROW(DyadDesign(c, p, FeatureMap{}, {{2, 0}}), InputError);
}

TEST(DyadDesign, CellCompressionMatchesEnumeration) {
    // Discrete attributes collapse into a handful of cells; continuous ones do not.
    std::mt19937_64 rng(41);
    for (bool discrete : {true, false}) {
        const auto d = random_design(rng, 30, 25, 3, 0.1, discrete);
        const auto t = random_theta(rng, 4);
        if (discrete) {
            EXPECT_LT(d.n_consumer_cells(), d.n_consumers());
        }
        EXPECT_NEAR(composite_loglik(d, t), brute_loglik(d, t), 1e-13);
        EXPECT_LT((score(d, t) - brute_score(d, t)).cwiseAbs().maxCoeff(), 1e-13);
    }
}
