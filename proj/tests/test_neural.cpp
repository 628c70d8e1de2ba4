#include <doctest.h>

#include <random>
#include <sstream>

#include "ghicast/error.hpp"
#include "ghicast/forecaster.hpp"
#include "ghicast/neural.hpp"
#include "oracles.hpp"

using namespace ghicast;

namespace {

Eigen::MatrixXd col(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

EncoderDecoderModel encdec(CellKind kind, int d, int hidden, std::uint64_t seed, bool bidirectional = false,
                           int steps = 1) {
    EncoderDecoderOptions o;
    o.cell = kind;
    o.hidden_size = hidden;
    o.bidirectional = bidirectional;
    o.decoder_steps = steps;
    return make_encoder_decoder(d, o, seed);
}

Dataset mean_target_dataset(int n, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset ds;
    ds.spec = FeatureSpec::single(d, 1);
    ds.X = Eigen::MatrixXd::NullaryExpr(n, d, [&] { return u(rng); });
    ds.y = ds.X.rowwise().mean();
    ds.origins.resize(static_cast<std::size_t>(n));
    return ds;
}

}  // namespace

TEST_CASE("initialization") {
    const auto ffnn = make_ffnn(5, 1);
    CHECK(ffnn.hidden1.weight.rows() == 10);
    CHECK(ffnn.hidden2.weight.rows() == 10);
    CHECK(ffnn.output.weight.rows() == 1);
    CHECK(ffnn.hidden1.activation == Activation::selu);
    CHECK(ffnn.output.activation == Activation::relu);
    CHECK(ffnn.hidden1.bias.isZero());
    CHECK(flatten(make_ffnn(5, 1)) == flatten(ffnn));
    CHECK(flatten(make_ffnn(5, 2)) != flatten(ffnn));

    const auto lstm = make_cell(CellKind::lstm, 1, 6, 3);
    CHECK(lstm.recurrent_weight.rows() == 24);
    CHECK(lstm.bias.segment(6, 6).isConstant(1.0));
    CHECK(lstm.bias.segment(0, 6).isZero());
    for (int g = 0; g < 4; ++g) {
        const Eigen::MatrixXd block = lstm.recurrent_weight.middleRows(6 * g, 6);
        CHECK((block.transpose() * block).isIdentity(1e-12));
    }

    const auto model = encdec(CellKind::gru, 7, 5, 9, true, 3);
    CHECK(model.input_dim() == 7);
    CHECK(model.representation.output_size() == 14);
    CHECK(model.representation.input_size() == 10);
    CHECK(model.decoder.input_size() == 14);
    CHECK(gate_count(CellKind::gru) == 3);
}

TEST_CASE("cell_step") {
    SUBCASE("zero parameters stay at zero") {
        for (auto kind : {CellKind::rnn, CellKind::gru, CellKind::lstm}) {
            auto cell = make_cell(kind, 2, 3, 1);
            cell.visit([](auto& m) { m.setZero(); });
            const auto s = cell_step(cell, Eigen::MatrixXd::Constant(2, 4, 0.7), CellState::zero(3, 4));
            CHECK(s.h.isZero());
        }
    }
    SUBCASE("single rnn unit") {
        auto cell = make_cell(CellKind::rnn, 1, 1, 1);
        cell.input_weight(0, 0) = 1.0;
        cell.recurrent_weight(0, 0) = 1.0;
        cell.bias(0) = 0.0;
        const auto s = cell_step(cell, col(0.5), CellState::zero(1, 1));
        CHECK(s.h(0, 0) == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
        CHECK(s.h(0, 0) == doctest::Approx(0.4621).epsilon(1e-4));
    }
    SUBCASE("lstm cell state decays under zero input") {
        auto cell = make_cell(CellKind::lstm, 1, 1, 4);
        cell.recurrent_weight.setZero();
        CellState s{col(0.3), col(2.0)};
        const double forget = 1.0 / (1.0 + std::exp(-1.0));
        double expected = 2.0;
        for (int t = 0; t < 30; ++t) {
            const double before = std::abs(s.c(0, 0));
            s = cell_step(cell, col(0.0), s);
            expected *= forget;
            CHECK(std::abs(s.c(0, 0)) < before);
            CHECK(s.c(0, 0) == doctest::Approx(expected).epsilon(1e-12));
            CHECK(s.h(0, 0) == doctest::Approx(0.5 * std::tanh(expected)).epsilon(1e-12));
        }
        CHECK(std::abs(s.c(0, 0)) < 1e-3);
    }
}

TEST_CASE("encoder") {
    auto zero = encdec(CellKind::lstm, 6, 4, 2);
    zero.visit([](auto& m) { m.setZero(); });
    CHECK(encode(zero, Eigen::MatrixXd::Zero(6, 2)).isZero());
    CHECK(forward(zero, Eigen::VectorXd::Ones(6)) == 0.0);

    const auto model = encdec(CellKind::rnn, 9, 3, 5);
    CHECK(encode(model, Eigen::MatrixXd::Random(9, 3)).rows() == 18);

    auto bi = encdec(CellKind::lstm, 5, 3, 8, true);
    bi.encoder_reverse = bi.encoder;
    Eigen::VectorXd palindrome(5);
    palindrome << 0.2, -1.0, 0.7, -1.0, 0.2;
    const Eigen::MatrixXd states = encoder_state(bi, palindrome);
    REQUIRE(states.rows() == 6);
    CHECK(states.topRows(3).isApprox(states.bottomRows(3), 1e-15));
}

TEST_CASE("forward") {
    SUBCASE("hand-traced FFNN on one input") {
        auto m = make_ffnn(1, 1);
        m.hidden1.weight << 1.0, -1.0;
        m.hidden1.bias << 0.5, 0.0;
        m.hidden2.weight << 1.0, 0.0, 0.0, 1.0;
        m.hidden2.bias << 0.0, 0.0;
        m.output.weight << 2.0, 1.0;
        m.output.bias << 0.25;
        const double x = 0.8;
        const double h1a = selu(x + 0.5);
        const double h1b = selu(-x);
        const double out = 2.0 * selu(h1a) + selu(h1b) + 0.25;
        CHECK(forward(m, Eigen::VectorXd::Constant(1, x)) == doctest::Approx(out).epsilon(1e-15));
        CHECK(out == doctest::Approx(2.0 * 1.0507009873554805 * 1.0507009873554805 * 1.3 +
                                     selu(selu(-0.8)) + 0.25)
                         .epsilon(1e-12));
    }
    SUBCASE("non-negative output") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> z(0.0, 3.0);
        const auto f = make_ffnn(6, 11);
        const auto r = encdec(CellKind::gru, 6, 4, 12, false, 2);
        const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(200, 6, [&] { return z(rng); });
        CHECK((predict(f, X).array() >= 0.0).all());
        CHECK((predict(r, X).array() >= 0.0).all());
    }
    CHECK(predict(make_ffnn(3, 1), Eigen::MatrixXd(0, 3)).size() == 0);
    CHECK_THROWS_AS(predict(make_ffnn(3, 1), Eigen::MatrixXd::Zero(2, 4)), DataError);
    CHECK_THROWS_AS(forward(make_ffnn(3, 1), Eigen::VectorXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("backward") {
    SUBCASE("finite differences") {
        int rejected = 0;
        std::size_t params = 0;
        const auto ffnn = [](std::uint64_t s) { return make_ffnn(4, s); };
        CHECK(oracle::worst_grad_error(ffnn, 6, 8, &rejected, &params) < 1e-5);
        CHECK(params <= 200);
        for (auto kind : {CellKind::rnn, CellKind::gru, CellKind::lstm}) {
            const auto make = [kind](std::uint64_t s) { return encdec(kind, 4, kind == CellKind::lstm ? 1 : 2, s); };
            CHECK(oracle::worst_grad_error(make, 4, 8, &rejected, &params) < 1e-5);
            CHECK(params <= 200);
        }
        const auto bi = [](std::uint64_t s) { return encdec(CellKind::lstm, 4, 2, s, true, 2); };
        CHECK(oracle::worst_grad_error(bi, 5, 8, &rejected, &params) < 1e-5);
        CHECK(params <= 200);
    }
    SUBCASE("exact predictions give a zero gradient") {
        const auto m = encdec(CellKind::lstm, 4, 3, 2);
        const Eigen::MatrixXd X = Eigen::MatrixXd::Random(7, 4);
        const Eigen::VectorXd y = predict(m, X);
        double loss = -1.0;
        CHECK(flatten(backward(m, X, y, &loss)).isZero());
        CHECK(loss == 0.0);
    }
    SUBCASE("duplicated batch gives the same gradient") {
        auto m = make_ffnn(3, 6);
        m.output.bias.setConstant(1.0);
        const Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 3);
        const Eigen::VectorXd y = Eigen::VectorXd::Random(5);
        Eigen::MatrixXd X2(10, 3);
        X2 << X, X;
        Eigen::VectorXd y2(10);
        y2 << y, y;
        CHECK(flatten(backward(m, X2, y2)).isApprox(flatten(backward(m, X, y)), 1e-14));
    }
}

TEST_CASE("train") {
    TrainConfig config;
    config.batch_size = 32;
    config.seed = 4;

    SUBCASE("FFNN fits a noiseless mean target") {
        const auto ds = mean_target_dataset(600, 4, 1);
        config.max_epochs = 100;
        config.patience = 100;
        const auto result = train(make_ffnn(4, 2), ds, config);
        const double fit = mae(ds.y, predict(result.model, ds.X));
        CHECK(fit < 1e-2);
        CHECK(result.history.epochs.size() == 100);
    }
    SUBCASE("patience 0 stops at the first non-improving epoch") {
        const auto ds = mean_target_dataset(300, 3, 2);
        config.max_epochs = 200;
        config.patience = 0;
        config.adam.learning_rate = 0.05;
        const auto h = train(make_ffnn(3, 3), ds, config).history;
        REQUIRE(h.stopped_early);
        const auto& e = h.epochs;
        REQUIRE(e.size() >= 2);
        CHECK(e.back().validation_mae >= e[e.size() - 2].validation_mae);
        for (std::size_t i = 1; i + 1 < e.size(); ++i) CHECK(e[i].validation_mae < e[i - 1].validation_mae);
        CHECK(h.best_epoch == static_cast<int>(e.size()) - 1);
    }
    SUBCASE("deterministic") {
        const auto ds = mean_target_dataset(200, 5, 3);
        config.max_epochs = 5;
        const auto a = train(encdec(CellKind::gru, 5, 3, 1), ds, config);
        const auto b = train(encdec(CellKind::gru, 5, 3, 1), ds, config);
        REQUIRE(a.history.epochs.size() == b.history.epochs.size());
        for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
            CHECK(a.history.epochs[i].train_mae == b.history.epochs[i].train_mae);
            CHECK(a.history.epochs[i].validation_mae == b.history.epochs[i].validation_mae);
        }
        CHECK(flatten(a.model) == flatten(b.model));
    }
    SUBCASE("bad inputs") {
        const auto ds = mean_target_dataset(50, 3, 4);
        CHECK_THROWS_AS(train(make_ffnn(4, 1), ds, config), DataError);
        config.batch_size = 0;
        CHECK_THROWS_AS(train(make_ffnn(3, 1), ds, config), ConfigError);
    }
}

TEST_CASE("neural persistence is bit-exact") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z(0.0, 1.0);
    const int d = input_dim(FeatureSpec::multi(3, 1, 2, 2));
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(1000, d, [&] { return z(rng); });

    ForecastSetup setup{FeatureSpec::multi(3, 1, 2, 2), {950.25, 7.5}, 4, {3, 5}};
    auto ffnn = make_ffnn(d, 1);
    ffnn.output.bias.setConstant(0.5);
    auto bilstm = encdec(CellKind::lstm, d, 3, 2, true, 2);
    bilstm.output.bias.setConstant(0.5);
    const std::vector<Forecaster> models{{ModelKind::ffnn, setup, ffnn},
                                         {ModelKind::gru, setup, encdec(CellKind::gru, d, 4, 3)},
                                         {ModelKind::bilstm, setup, bilstm}};
    for (const auto& f : models) {
        std::stringstream io;
        save_forecaster(f, io);
        const auto back = load_forecaster(io);
        CHECK(back.kind == f.kind);
        CHECK(back.setup == f.setup);
        const Eigen::VectorXd a = f.predict_ghi(X);
        CHECK(a.maxCoeff() > 0.0);
        CHECK(back.predict_ghi(X) == a);
    }
    std::istringstream garbage("not a model\n");
    CHECK_THROWS_AS(load_forecaster(garbage), DataError);
}
