#pragma once

// Feed-forward and recurrent encoder-decoder regressors with hand-derived
// backpropagation (through time), trained on MAE with mini-batch Adam.
//
// Batched tensors are column-per-sample: an input batch is d_in x B and every
// hidden activation is width x B.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ghicast/features.hpp"
#include "ghicast/numerics.hpp"

namespace ghicast {

enum class Activation { identity, selu, relu };

std::string to_string(Activation a);
Activation parse_activation(std::string_view text);

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::identity;

    int input_size() const { return static_cast<int>(weight.cols()); }
    int output_size() const { return static_cast<int>(weight.rows()); }

    template <typename F>
    void visit(F&& f) {
        f(weight);
        f(bias);
    }
    template <typename F>
    void visit(F&& f) const {
        f(weight);
        f(bias);
    }
};

enum class CellKind { rnn, gru, lstm };

std::string to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view text);
/// rnn: 1, gru: 3 [update, reset, candidate], lstm: 4 [input, forget, candidate, output].
int gate_count(CellKind kind);

struct RecurrentCell {
    CellKind kind = CellKind::rnn;
    Eigen::MatrixXd input_weight;      // gates*H x I
    Eigen::MatrixXd recurrent_weight;  // gates*H x H
    Eigen::VectorXd bias;              // gates*H

    int hidden_size() const { return static_cast<int>(recurrent_weight.cols()); }
    int input_size() const { return static_cast<int>(input_weight.cols()); }

    template <typename F>
    void visit(F&& f) {
        f(input_weight);
        f(recurrent_weight);
        f(bias);
    }
    template <typename F>
    void visit(F&& f) const {
        f(input_weight);
        f(recurrent_weight);
        f(bias);
    }
};

/// Hidden state h (H x B) and, for lstm, cell state c (H x B).
struct CellState {
    Eigen::MatrixXd h;
    Eigen::MatrixXd c;

    static CellState zero(int hidden, Eigen::Index batch) {
        return {Eigen::MatrixXd::Zero(hidden, batch), Eigen::MatrixXd::Zero(hidden, batch)};
    }
};

/// One update of the cell; x is I x B.
CellState cell_step(const RecurrentCell& cell, const Eigen::MatrixXd& x, const CellState& state);

/// d_in -> 2 d_in (selu) -> 2 d_in (selu) -> 1 (relu)
struct FFNNModel {
    DenseLayer hidden1;
    DenseLayer hidden2;
    DenseLayer output;

    int input_dim() const { return hidden1.input_size(); }

    template <typename F>
    void visit(F&& f) {
        hidden1.visit(f);
        hidden2.visit(f);
        output.visit(f);
    }
    template <typename F>
    void visit(F&& f) const {
        hidden1.visit(f);
        hidden2.visit(f);
        output.visit(f);
    }
};

/// Encoder reads the feature vector as a length-d_in scalar sequence; its final
/// state (both directions concatenated when bidirectional) feeds a 2 d_in selu
/// representation that is presented to the decoder at each of its steps; the
/// decoder's last hidden state goes through a relu dense layer to one output.
struct EncoderDecoderModel {
    bool bidirectional = false;
    int decoder_steps = 1;
    RecurrentCell encoder;
    RecurrentCell encoder_reverse;  // empty unless bidirectional
    DenseLayer representation;
    RecurrentCell decoder;
    DenseLayer output;

    CellKind kind() const { return encoder.kind; }
    int input_dim() const { return representation.output_size() / 2; }
    int hidden_size() const { return encoder.hidden_size(); }

    template <typename F>
    void visit(F&& f) {
        encoder.visit(f);
        encoder_reverse.visit(f);
        representation.visit(f);
        decoder.visit(f);
        output.visit(f);
    }
    template <typename F>
    void visit(F&& f) const {
        encoder.visit(f);
        encoder_reverse.visit(f);
        representation.visit(f);
        decoder.visit(f);
        output.visit(f);
    }
};

struct EncoderDecoderOptions {
    CellKind cell = CellKind::lstm;
    bool bidirectional = false;
    int hidden_size = 64;
    int decoder_steps = 1;
};

/// LeCun-normal dense weights, orthogonal recurrent blocks, zero biases
/// except a forget-gate bias of 1 for lstm.
FFNNModel make_ffnn(int input_dim, std::uint64_t seed);
EncoderDecoderModel make_encoder_decoder(int input_dim, const EncoderDecoderOptions& options, std::uint64_t seed);
RecurrentCell make_cell(CellKind kind, int input_size, int hidden_size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Flat parameter views, in declaration order.

template <typename Model>
Eigen::Index parameter_count(const Model& model) {
    Eigen::Index n = 0;
    model.visit([&](const auto& m) { n += m.size(); });
    return n;
}

template <typename Model>
Eigen::VectorXd flatten(const Model& model) {
    Eigen::VectorXd out(parameter_count(model));
    Eigen::Index offset = 0;
    model.visit([&](const auto& m) {
        out.segment(offset, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        offset += m.size();
    });
    return out;
}

template <typename Model>
void assign_parameters(Model& model, const Eigen::VectorXd& values) {
    if (values.size() != parameter_count(model)) {
        throw std::invalid_argument("parameter vector has " + std::to_string(values.size()) + " entries, model has " +
                                    std::to_string(parameter_count(model)));
    }
    Eigen::Index offset = 0;
    model.visit([&](auto& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = values.segment(offset, m.size());
        offset += m.size();
    });
}

template <typename Model>
Model zeros_like(const Model& model) {
    Model out = model;
    out.visit([](auto& m) { m.setZero(); });
    return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

/// inputs: d_in x B. Returns 1 x B predictions. Throws DivergenceError naming
/// the first layer with a non-finite activation.
Eigen::RowVectorXd forward_batch(const FFNNModel& model, const Eigen::MatrixXd& inputs);
Eigen::RowVectorXd forward_batch(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs);

/// Representation-layer output, 2 d_in x B.
Eigen::MatrixXd encode(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs);
/// Final encoder state(s): H x B, or 2H x B when bidirectional ([forward; reverse]).
Eigen::MatrixXd encoder_state(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs);

template <typename Model>
double forward(const Model& model, const Eigen::VectorXd& x) {
    if (x.size() != model.input_dim()) {
        throw std::invalid_argument("input has length " + std::to_string(x.size()) + ", model expects " +
                                    std::to_string(model.input_dim()));
    }
    return forward_batch(model, x)(0);
}

/// Gradient of sum_b upstream(b) * yhat_b with respect to every parameter.
FFNNModel backward_output(const FFNNModel& model, const Eigen::MatrixXd& inputs, const Eigen::RowVectorXd& upstream);
EncoderDecoderModel backward_output(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs,
                                    const Eigen::RowVectorXd& upstream);

/// Mean absolute error of the batch and its gradient. X is n x d (row per
/// sample); subgradient of |r| at r = 0 is 0.
template <typename Model>
Model backward(const Model& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double* loss = nullptr);

/// Row-wise forward over X (n x d); n = 0 yields an empty vector.
template <typename Model>
Eigen::VectorXd predict(const Model& model, const Eigen::MatrixXd& X);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    int max_epochs = 100;
    int batch_size = 256;
    AdamConfig adam;
    int patience = 10;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    double clip_norm = 5.0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_mae = 0.0;       // mean of mini-batch losses during the epoch
    double validation_mae = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_validation_mae = 0.0;
    bool stopped_early = false;
};

template <typename Model>
struct TrainResult {
    Model model;
    TrainHistory history;
};

/// Mini-batch Adam on MAE with seeded shuffling, global-norm clipping, and
/// early stopping on the chronologically last validation_fraction of rows.
/// Returns the best-validation parameters. Throws DivergenceError.
template <typename Model>
TrainResult<Model> train(Model model, const Dataset& data, const TrainConfig& config);

}  // namespace ghicast
