#include <random>
#include <stdexcept>

#include "ghicast/error.hpp"
#include "recurrent_impl.hpp"

namespace ghicast {

namespace {

DenseLayer make_dense(int in, int out, Activation activation, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    DenseLayer layer;
    layer.weight = Eigen::MatrixXd::NullaryExpr(out, in, [&] { return normal(rng); });
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = activation;
    return layer;
}

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::selu: return selu(z);
        case Activation::relu: return relu(z);
    }
    return z;
}

Eigen::MatrixXd activation_derivative(Activation a, const Eigen::MatrixXd& z) {
    switch (a) {
        case Activation::identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
        case Activation::selu: return z.unaryExpr([](double v) { return selu_derivative(v); });
        case Activation::relu: return z.unaryExpr([](double v) { return relu_derivative(v); });
    }
    return z;
}

struct DenseCache {
    Eigen::MatrixXd input;
    Eigen::MatrixXd pre;
    Eigen::MatrixXd out;
};

DenseCache dense_forward(const DenseLayer& layer, const Eigen::MatrixXd& x) {
    DenseCache c;
    c.input = x;
    c.pre = layer.weight * x;
    c.pre.colwise() += layer.bias;
    c.out = activate(layer.activation, c.pre);
    return c;
}

/// Accumulates into grad, returns dL/dinput.
Eigen::MatrixXd dense_backward(const DenseLayer& layer, const DenseCache& c, const Eigen::MatrixXd& d_out,
                               DenseLayer& grad) {
    const Eigen::MatrixXd d_pre = (d_out.array() * activation_derivative(layer.activation, c.pre).array()).matrix();
    grad.weight.noalias() += d_pre * c.input.transpose();
    grad.bias.noalias() += d_pre.rowwise().sum();
    return layer.weight.transpose() * d_pre;
}

void check_finite(const Eigen::MatrixXd& m, int layer_index, const char* name) {
    if (!m.allFinite()) {
        throw DivergenceError("non-finite activation in layer " + std::to_string(layer_index) + " (" + name + ")");
    }
}

void check_input(int expected, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != expected) {
        throw std::invalid_argument("input dimension " + std::to_string(inputs.rows()) + " does not match model input " +
                                    std::to_string(expected));
    }
}

// --- FFNN ------------------------------------------------------------------

struct FFNNTrace {
    DenseCache l1, l2, l3;
};

FFNNTrace ffnn_trace(const FFNNModel& model, const Eigen::MatrixXd& inputs) {
    check_input(model.input_dim(), inputs);
    FFNNTrace t;
    t.l1 = dense_forward(model.hidden1, inputs);
    t.l2 = dense_forward(model.hidden2, t.l1.out);
    t.l3 = dense_forward(model.output, t.l2.out);
    if (!t.l3.out.allFinite()) {
        check_finite(t.l1.out, 0, "hidden1");
        check_finite(t.l2.out, 1, "hidden2");
        check_finite(t.l3.out, 2, "output");
    }
    return t;
}

// --- Encoder-decoder -------------------------------------------------------

struct EncDecTrace {
    detail::SequenceTrace forward_enc;
    detail::SequenceTrace reverse_enc;
    Eigen::MatrixXd enc_state;
    DenseCache rep;
    detail::SequenceTrace dec;
    DenseCache out;
};

std::vector<Eigen::MatrixXd> scalar_steps(const Eigen::MatrixXd& inputs, bool reversed) {
    const auto d = inputs.rows();
    std::vector<Eigen::MatrixXd> steps;
    steps.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index t = 0; t < d; ++t) {
        steps.emplace_back(inputs.row(reversed ? d - 1 - t : t));
    }
    return steps;
}

EncDecTrace encdec_encode(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs) {
    check_input(model.input_dim(), inputs);
    const auto batch = inputs.cols();
    const int H = model.hidden_size();
    EncDecTrace t;
    t.forward_enc = detail::run_sequence(model.encoder, scalar_steps(inputs, false), CellState::zero(H, batch));
    if (model.bidirectional) {
        t.reverse_enc =
            detail::run_sequence(model.encoder_reverse, scalar_steps(inputs, true), CellState::zero(H, batch));
        t.enc_state.resize(2 * H, batch);
        t.enc_state.topRows(H) = t.forward_enc.back().out.h;
        t.enc_state.bottomRows(H) = t.reverse_enc.back().out.h;
    } else {
        t.enc_state = t.forward_enc.back().out.h;
    }
    t.rep = dense_forward(model.representation, t.enc_state);
    return t;
}

EncDecTrace encdec_trace(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs) {
    EncDecTrace t = encdec_encode(model, inputs);
    const int Hd = model.decoder.hidden_size();
    std::vector<Eigen::MatrixXd> dec_inputs(static_cast<std::size_t>(model.decoder_steps), t.rep.out);
    t.dec = detail::run_sequence(model.decoder, dec_inputs, CellState::zero(Hd, inputs.cols()));
    t.out = dense_forward(model.output, t.dec.back().out.h);
    if (!t.out.out.allFinite()) {
        check_finite(t.enc_state, 0, "encoder");
        check_finite(t.rep.out, 1, "representation");
        check_finite(t.dec.back().out.h, 2, "decoder");
        check_finite(t.out.out, 3, "output");
    }
    return t;
}

void check_upstream(const Eigen::MatrixXd& inputs, const Eigen::RowVectorXd& upstream) {
    if (upstream.size() != inputs.cols()) {
        throw std::invalid_argument("upstream gradient length does not match batch size");
    }
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::selu: return "selu";
        case Activation::relu: return "relu";
    }
    return "?";
}

Activation parse_activation(std::string_view text) {
    if (text == "identity") return Activation::identity;
    if (text == "selu") return Activation::selu;
    if (text == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation '" + std::string(text) + "'");
}

FFNNModel make_ffnn(int input_dim, std::uint64_t seed) {
    if (input_dim < 1) {
        throw std::invalid_argument("FFNN input dimension must be positive");
    }
    std::mt19937_64 rng(seed);
    FFNNModel model;
    model.hidden1 = make_dense(input_dim, 2 * input_dim, Activation::selu, rng);
    model.hidden2 = make_dense(2 * input_dim, 2 * input_dim, Activation::selu, rng);
    model.output = make_dense(2 * input_dim, 1, Activation::relu, rng);
    return model;
}

EncoderDecoderModel make_encoder_decoder(int input_dim, const EncoderDecoderOptions& options, std::uint64_t seed) {
    if (input_dim < 1 || options.hidden_size < 1 || options.decoder_steps < 1) {
        throw std::invalid_argument("encoder-decoder dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    const int H = options.hidden_size;
    EncoderDecoderModel model;
    model.bidirectional = options.bidirectional;
    model.decoder_steps = options.decoder_steps;
    model.encoder = make_cell(options.cell, 1, H, rng());
    if (options.bidirectional) {
        model.encoder_reverse = make_cell(options.cell, 1, H, rng());
    } else {
        model.encoder_reverse.kind = options.cell;
    }
    const int enc_width = options.bidirectional ? 2 * H : H;
    model.representation = make_dense(enc_width, 2 * input_dim, Activation::selu, rng);
    model.decoder = make_cell(options.cell, 2 * input_dim, H, rng());
    model.output = make_dense(H, 1, Activation::relu, rng);
    if (model.representation.output_size() != 2 * input_dim) {
        throw std::logic_error("representation layer must have width 2 * input_dim");
    }
    return model;
}

Eigen::RowVectorXd forward_batch(const FFNNModel& model, const Eigen::MatrixXd& inputs) {
    return ffnn_trace(model, inputs).l3.out.row(0);
}

Eigen::RowVectorXd forward_batch(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs) {
    return encdec_trace(model, inputs).out.out.row(0);
}

Eigen::MatrixXd encode(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs) {
    return encdec_encode(model, inputs).rep.out;
}

Eigen::MatrixXd encoder_state(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs) {
    return encdec_encode(model, inputs).enc_state;
}

FFNNModel backward_output(const FFNNModel& model, const Eigen::MatrixXd& inputs, const Eigen::RowVectorXd& upstream) {
    check_upstream(inputs, upstream);
    const FFNNTrace t = ffnn_trace(model, inputs);
    FFNNModel grad = zeros_like(model);
    const Eigen::MatrixXd d2 = dense_backward(model.output, t.l3, upstream, grad.output);
    const Eigen::MatrixXd d1 = dense_backward(model.hidden2, t.l2, d2, grad.hidden2);
    dense_backward(model.hidden1, t.l1, d1, grad.hidden1);
    return grad;
}

EncoderDecoderModel backward_output(const EncoderDecoderModel& model, const Eigen::MatrixXd& inputs,
                                    const Eigen::RowVectorXd& upstream) {
    check_upstream(inputs, upstream);
    const EncDecTrace t = encdec_trace(model, inputs);
    EncoderDecoderModel grad = zeros_like(model);
    const int H = model.hidden_size();

    const Eigen::MatrixXd d_dec_h = dense_backward(model.output, t.out, upstream, grad.output);
    std::vector<Eigen::MatrixXd> d_dec_inputs;
    detail::backprop_sequence(model.decoder, t.dec, d_dec_h, grad.decoder, &d_dec_inputs);
    Eigen::MatrixXd d_rep = d_dec_inputs.front();
    for (std::size_t k = 1; k < d_dec_inputs.size(); ++k) {
        d_rep += d_dec_inputs[k];
    }
    const Eigen::MatrixXd d_enc = dense_backward(model.representation, t.rep, d_rep, grad.representation);
    detail::backprop_sequence(model.encoder, t.forward_enc, d_enc.topRows(H), grad.encoder, nullptr);
    if (model.bidirectional) {
        detail::backprop_sequence(model.encoder_reverse, t.reverse_enc, d_enc.bottomRows(H), grad.encoder_reverse,
                                  nullptr);
    }
    return grad;
}

template <typename Model>
Model backward(const Model& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double* loss) {
    if (X.rows() == 0 || X.rows() != y.size()) {
        throw std::invalid_argument("backward needs a non-empty batch with one label per row");
    }
    const Eigen::MatrixXd inputs = X.transpose();
    const Eigen::RowVectorXd yhat = forward_batch(model, inputs);
    const auto n = static_cast<double>(y.size());
    Eigen::RowVectorXd upstream(yhat.size());
    for (Eigen::Index i = 0; i < yhat.size(); ++i) {
        const double r = yhat(i) - y(i);
        upstream(i) = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / n;
    }
    if (loss != nullptr) {
        *loss = mae(y, yhat.transpose());
    }
    return backward_output(model, inputs, upstream);
}

template <typename Model>
Eigen::VectorXd predict(const Model& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.input_dim()) {
        throw DataError("feature matrix has " + std::to_string(X.cols()) + " columns; model expects d = " +
                        std::to_string(model.input_dim()));
    }
    Eigen::VectorXd out(X.rows());
    constexpr Eigen::Index chunk = 512;
    for (Eigen::Index start = 0; start < X.rows(); start += chunk) {
        const Eigen::Index len = std::min(chunk, X.rows() - start);
        const Eigen::MatrixXd inputs = X.middleRows(start, len).transpose();
        out.segment(start, len) = forward_batch(model, inputs).transpose();
    }
    return out;
}

template FFNNModel backward(const FFNNModel&, const Eigen::MatrixXd&, const Eigen::VectorXd&, double*);
template EncoderDecoderModel backward(const EncoderDecoderModel&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                      double*);
template Eigen::VectorXd predict(const FFNNModel&, const Eigen::MatrixXd&);
template Eigen::VectorXd predict(const EncoderDecoderModel&, const Eigen::MatrixXd&);

}  // namespace ghicast
