#include <doctest.h>

#include <random>
#include <sstream>

#include "ghicast/error.hpp"
#include "ghicast/forecaster.hpp"
#include "ghicast/gbrt.hpp"
#include "oracles.hpp"

using namespace ghicast;

namespace {

struct Toy {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

Toy toy() {
    Toy t;
    t.X.resize(4, 1);
    t.X << 0, 1, 2, 3;
    t.y.resize(4);
    t.y << 0, 0, 10, 10;
    return t;
}

Toy random_problem(std::mt19937_64& rng, int n, int d) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Toy t;
    t.X.resize(n, d);
    t.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) t.X(i, j) = u(rng);
        t.y(i) = std::sin(6.0 * t.X(i, 0)) + (d > 1 ? t.X(i, d - 1) * t.X(i, d - 1) : 0.0) + 0.3 * u(rng);
    }
    return t;
}

std::string serialize(const TreeEnsemble& e) {
    Forecaster f;
    f.kind = ModelKind::gbrt;
    f.setup.spec = FeatureSpec::single(e.input_dim, 1);
    f.model = e;
    std::ostringstream out;
    save_forecaster(f, out);
    return out.str();
}

}  // namespace

TEST_CASE("fit_tree on small inputs") {
    const auto t = toy();
    const auto tree = fit_tree(t.X, t.y, 1, 1);
    REQUIRE(tree.nodes.size() == 3);
    CHECK(tree.nodes[0].feature == 0);
    CHECK(tree.nodes[0].threshold == 1.5);
    CHECK(tree.nodes[1].value == 0.0);
    CHECK(tree.nodes[2].value == 10.0);
    CHECK(tree.depth() == 1);
    CHECK(tree.leaf_count() == 2);

    const auto flat = fit_tree(t.X, Eigen::VectorXd::Constant(4, 3.25), 4, 1);
    REQUIRE(flat.nodes.size() == 1);
    CHECK(flat.nodes[0].value == 3.25);

    const auto stump = fit_tree(t.X, t.y, 0, 1);
    REQUIRE(stump.nodes.size() == 1);
    CHECK(stump.nodes[0].value == 5.0);

    const auto same_rows = fit_tree(Eigen::MatrixXd::Ones(5, 2), Eigen::VectorXd::LinSpaced(5, 0, 4), 3, 1);
    CHECK(same_rows.nodes.size() == 1);

    const auto min_leaf = fit_tree(t.X, t.y, 1, 3);
    CHECK(min_leaf.nodes.size() == 1);

    // Monotone copies of a column split identically; the first feature keeps the tie.
    Eigen::MatrixXd copies(6, 3);
    copies.col(0) << 0.3, 0.1, 0.7, 0.2, 0.9, 0.5;
    copies.col(1) = (copies.col(0).array() * 3.7 + 0.01).matrix();
    copies.col(2) = copies.col(0).array().exp().matrix();
    Eigen::VectorXd ty(6);
    ty << 0.11, 0.37, 2.9, 0.23, 3.3, 1.7;
    for (int f = 0; f < 3; ++f) {
        Eigen::MatrixXd rotated(6, 3);
        for (int j = 0; j < 3; ++j) rotated.col(j) = copies.col((j + f) % 3);
        const auto tied = fit_tree(rotated, ty, 2, 1);
        CHECK(tied.nodes[0].feature == 0);
        CHECK(tied == oracle::ExhaustiveTree(rotated, ty, 2, 1).fit());
    }

    CHECK(split_threshold(1.0, 2.0) == 1.5);
    const double a = 1.0;
    const double b = std::nextafter(a, 2.0);
    CHECK(split_threshold(a, b) == a);
}

TEST_CASE("fit_tree matches exhaustive search") {
    std::mt19937_64 rng(424242);
    int total_splits = 0;
    for (int instance = 0; instance < 200; ++instance) {
        const int n = 2 + static_cast<int>(rng() % 49);
        const int d = 1 + static_cast<int>(rng() % 3);
        const int depth = static_cast<int>(rng() % 3);
        const int min_leaf = 1 + static_cast<int>(rng() % 4);
        auto p = random_problem(rng, n, d);
        if (instance % 4 == 1) {
            p.X = (p.X * 4.0).array().floor().matrix();  // repeated feature values
        }
        const auto got = fit_tree(p.X, p.y, depth, min_leaf);
        const auto want = oracle::ExhaustiveTree(p.X, p.y, depth, min_leaf).fit();
        CHECK(got == want);
        total_splits += static_cast<int>(got.nodes.size()) - got.leaf_count();
    }
    CHECK(total_splits > 150);
}

TEST_CASE("huber pseudo-residuals and leaf values") {
    Eigen::VectorXd y(3), F(3);
    y << 3.0, 0.3, -2.0;
    F << 0.0, 0.0, 0.0;
    const auto r1 = huber_pseudo_residuals(y, F, 1.0);
    CHECK(r1(0) == 1.0);
    CHECK(r1(1) == 0.3);
    CHECK(huber_pseudo_residuals(y, F, 0.5)(2) == -0.5);

    const std::vector<double> leaf{0.1, 0.2, 5.0};
    CHECK(leaf_update_huber(leaf, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    const std::vector<double> symmetric{-2.5, 0.0, 2.5};
    CHECK(leaf_update_huber(symmetric, 0.7) == 0.0);
    const std::vector<double> one{-4.2};
    CHECK(leaf_update_huber(one, 1.0) == -4.2);

    const std::vector<double> sample{1.0, 2.0, 4.0, 9.0};
    CHECK(leaf_update_huber(sample, 100.0) == doctest::Approx(4.0).epsilon(1e-14));   // mean
    CHECK(leaf_update_huber(sample, 1e-12) == doctest::Approx(3.0).epsilon(1e-10));   // median

    CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median_of({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(quantile_of({0.0, 10.0}, 0.9) == 9.0);
}

TEST_CASE("fit_gbrt") {
    const auto t = toy();
    GBRTConfig config;
    config.min_leaf = 1;
    config.max_depth = 1;

    SUBCASE("zero rounds is the median") {
        config.rounds = 0;
        const auto e = fit_gbrt(t.X, t.y, config);
        CHECK(e.initial == 5.0);
        CHECK(e.stages.empty());
        CHECK((predict(e, t.X).array() == 5.0).all());
    }
    SUBCASE("one stump beats the constant model") {
        config.rounds = 1;
        const auto e = fit_gbrt(t.X, t.y, config);
        REQUIRE(e.stages.size() == 1);
        const double constant_mae = (t.y.array() - 5.0).abs().mean();
        CHECK((t.y - predict(e, t.X)).cwiseAbs().mean() < constant_mae);
    }
    SUBCASE("hand routing through two nodes") {
        TreeEnsemble e;
        e.input_dim = 2;
        e.initial = 1.0;
        e.shrinkage = 0.5;
        RegressionTree tree;
        tree.nodes = {{1, 0.5, 0.0, 1, 2}, {-1, 0.0, -4.0, -1, -1}, {0, 2.0, 0.0, 3, 4},
                      {-1, 0.0, 6.0, -1, -1}, {-1, 0.0, 8.0, -1, -1}};
        e.stages.push_back(tree);
        Eigen::MatrixXd X(4, 2);
        X << 0, 0.2, 1, 0.9, 3, 0.9, 3, 0.9;
        const auto p = predict_raw(e, X);
        CHECK(p(0) == -1.0);
        CHECK(predict(e, X)(0) == 0.0);
        CHECK(p(1) == 4.0);
        CHECK(p(2) == 5.0);
        CHECK(p(3) == p(2));
        CHECK_THROWS_AS(predict(e, Eigen::MatrixXd::Zero(1, 3)), DataError);
    }
    CHECK_THROWS_AS(fit_gbrt(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), config), DataError);
    config.rounds = -1;
    CHECK_THROWS_AS(fit_gbrt(t.X, t.y, config), ConfigError);
}

TEST_CASE("boosting properties on a random problem") {
    std::mt19937_64 rng(8);
    const auto p = random_problem(rng, 400, 3);
    GBRTConfig config;
    config.rounds = 60;
    config.max_depth = 3;
    config.min_leaf = 5;
    const auto e = fit_gbrt(p.X, p.y, config);
    REQUIRE(e.rounds.size() == 60);

    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < e.rounds.size(); ++r) {
        const double before = oracle::huber_loss(p.y, predict_raw(e, p.X, static_cast<int>(r)), e.rounds[r].delta);
        const double after = oracle::huber_loss(p.y, predict_raw(e, p.X, static_cast<int>(r) + 1), e.rounds[r].delta);
        CHECK(after <= before);
        CHECK(before == doctest::Approx(e.rounds[r].loss_before).epsilon(1e-9));
        CHECK(e.rounds[r].loss_after <= e.rounds[r].loss_before);
        previous = after;
    }
    CHECK(previous < oracle::huber_loss(p.y, predict_raw(e, p.X, 0), e.rounds.back().delta));

    // Removing the last stage shifts each prediction by nu * tree_last(x).
    const auto full = predict_raw(e, p.X);
    const auto trimmed = predict_raw(e, p.X, 59);
    for (Eigen::Index i = 0; i < p.X.rows(); ++i) {
        CHECK(full(i) == trimmed(i) + e.shrinkage * e.stages.back().predict(p.X.row(i)));
    }

    CHECK(serialize(fit_gbrt(p.X, p.y, config)) == serialize(e));
}

TEST_CASE("GBRT persistence is bit-exact") {
    std::mt19937_64 rng(31);
    const auto p = random_problem(rng, 300, 3);
    GBRTConfig config;
    config.rounds = 25;
    config.max_depth = 4;
    config.min_leaf = 3;
    Forecaster f;
    f.kind = ModelKind::gbrt;
    f.setup.spec = FeatureSpec::single(3, 1);
    f.setup.scaler = {812.5, 1.0};
    f.model = fit_gbrt(p.X, p.y, config);

    std::stringstream io;
    save_forecaster(f, io);
    const auto back = load_forecaster(io);
    CHECK(back.kind == ModelKind::gbrt);
    CHECK(back.setup == f.setup);
    std::uniform_real_distribution<double> u(-0.5, 1.5);
    Eigen::MatrixXd X(1000, 3);
    for (auto& v : X.reshaped()) v = u(rng);
    const Eigen::VectorXd a = f.predict_ghi(X);
    const Eigen::VectorXd b = back.predict_ghi(X);
    CHECK(a == b);

    std::istringstream truncated(io.str().substr(0, io.str().size() / 2));
    CHECK_THROWS_AS(load_forecaster(truncated), DataError);
}
