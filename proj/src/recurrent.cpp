#include <random>
#include <stdexcept>

#include "recurrent_impl.hpp"

namespace ghicast {

namespace {

Eigen::MatrixXd tanh_of(const Eigen::MatrixXd& m) { return m.array().tanh().matrix(); }

void check_shapes(const RecurrentCell& cell, const Eigen::MatrixXd& x, const CellState& state) {
    const int hidden = cell.hidden_size();
    if (x.rows() != cell.input_size() || state.h.rows() != hidden || state.h.cols() != x.cols()) {
        throw std::invalid_argument("cell_step shape mismatch: input " + std::to_string(x.rows()) + "x" +
                                    std::to_string(x.cols()) + ", state " + std::to_string(state.h.rows()) + "x" +
                                    std::to_string(state.h.cols()) + ", cell expects input " +
                                    std::to_string(cell.input_size()) + " hidden " + std::to_string(hidden));
    }
    if (cell.kind == CellKind::lstm && (state.c.rows() != hidden || state.c.cols() != x.cols())) {
        throw std::invalid_argument("cell_step: lstm cell state shape mismatch");
    }
}

detail::StepCache step_with_cache(const RecurrentCell& cell, const Eigen::MatrixXd& x, const CellState& state) {
    const int H = cell.hidden_size();
    detail::StepCache s;
    s.x = x;
    s.h_prev = state.h;
    Eigen::MatrixXd pre = cell.input_weight * x;
    pre.colwise() += cell.bias;
    switch (cell.kind) {
        case CellKind::rnn: {
            pre.noalias() += cell.recurrent_weight * state.h;
            s.gates = tanh_of(pre);
            s.out.h = s.gates;
            break;
        }
        case CellKind::lstm: {
            s.c_prev = state.c;
            pre.noalias() += cell.recurrent_weight * state.h;
            s.gates.resize(pre.rows(), pre.cols());
            s.gates.topRows(2 * H) = sigmoid(pre.topRows(2 * H));
            s.gates.middleRows(2 * H, H) = tanh_of(pre.middleRows(2 * H, H));
            s.gates.bottomRows(H) = sigmoid(pre.bottomRows(H));
            const auto i = s.gates.topRows(H).array();
            const auto f = s.gates.middleRows(H, H).array();
            const auto g = s.gates.middleRows(2 * H, H).array();
            const auto o = s.gates.bottomRows(H).array();
            s.out.c = (f * state.c.array() + i * g).matrix();
            s.tanh_c = tanh_of(s.out.c);
            s.out.h = (o * s.tanh_c.array()).matrix();
            break;
        }
        case CellKind::gru: {
            s.gates.resize(pre.rows(), pre.cols());
            pre.topRows(2 * H).noalias() += cell.recurrent_weight.topRows(2 * H) * state.h;
            s.gates.topRows(2 * H) = sigmoid(pre.topRows(2 * H));
            s.reset_h = (s.gates.middleRows(H, H).array() * state.h.array()).matrix();
            pre.bottomRows(H).noalias() += cell.recurrent_weight.bottomRows(H) * s.reset_h;
            s.gates.bottomRows(H) = tanh_of(pre.bottomRows(H));
            const auto z = s.gates.topRows(H).array();
            const auto n = s.gates.bottomRows(H).array();
            s.out.h = ((1.0 - z) * n + z * state.h.array()).matrix();
            break;
        }
    }
    return s;
}

}  // namespace

std::string to_string(CellKind kind) {
    switch (kind) {
        case CellKind::rnn: return "rnn";
        case CellKind::gru: return "gru";
        case CellKind::lstm: return "lstm";
    }
    return "?";
}

CellKind parse_cell_kind(std::string_view text) {
    if (text == "rnn") return CellKind::rnn;
    if (text == "gru") return CellKind::gru;
    if (text == "lstm") return CellKind::lstm;
    throw std::invalid_argument("unknown cell kind '" + std::string(text) + "'");
}

int gate_count(CellKind kind) {
    switch (kind) {
        case CellKind::rnn: return 1;
        case CellKind::gru: return 3;
        case CellKind::lstm: return 4;
    }
    return 1;
}

CellState cell_step(const RecurrentCell& cell, const Eigen::MatrixXd& x, const CellState& state) {
    check_shapes(cell, x, state);
    return step_with_cache(cell, x, state).out;
}

RecurrentCell make_cell(CellKind kind, int input_size, int hidden_size, std::uint64_t seed) {
    if (input_size < 1 || hidden_size < 1) {
        throw std::invalid_argument("recurrent cell sizes must be positive");
    }
    const int G = gate_count(kind);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    RecurrentCell cell;
    cell.kind = kind;
    const double in_std = 1.0 / std::sqrt(static_cast<double>(input_size));
    cell.input_weight = Eigen::MatrixXd::NullaryExpr(G * hidden_size, input_size, [&] { return in_std * normal(rng); });
    cell.recurrent_weight.resize(G * hidden_size, hidden_size);
    for (int g = 0; g < G; ++g) {
        const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(hidden_size, hidden_size, [&] { return normal(rng); });
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(hidden_size, hidden_size);
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < hidden_size; ++j) {
            if (r(j, j) < 0.0) q.col(j) = -q.col(j);
        }
        cell.recurrent_weight.middleRows(g * hidden_size, hidden_size) = q;
    }
    cell.bias = Eigen::VectorXd::Zero(G * hidden_size);
    if (kind == CellKind::lstm) {
        cell.bias.segment(hidden_size, hidden_size).setOnes();
    }
    return cell;
}

namespace detail {

SequenceTrace run_sequence(const RecurrentCell& cell, const std::vector<Eigen::MatrixXd>& inputs, CellState init) {
    SequenceTrace trace;
    trace.reserve(inputs.size());
    const CellState* state = &init;
    for (const auto& x : inputs) {
        check_shapes(cell, x, *state);
        trace.push_back(step_with_cache(cell, x, *state));
        state = &trace.back().out;
    }
    return trace;
}

void backprop_sequence(const RecurrentCell& cell, const SequenceTrace& trace, const Eigen::MatrixXd& d_h_final,
                       RecurrentCell& grad, std::vector<Eigen::MatrixXd>* d_inputs) {
    const int H = cell.hidden_size();
    if (d_inputs != nullptr) {
        d_inputs->assign(trace.size(), Eigen::MatrixXd());
    }
    Eigen::MatrixXd dh = d_h_final;
    Eigen::MatrixXd dc;
    if (cell.kind == CellKind::lstm) {
        dc = Eigen::MatrixXd::Zero(d_h_final.rows(), d_h_final.cols());
    }
    Eigen::MatrixXd d_pre;
    for (std::size_t k = trace.size(); k-- > 0;) {
        const StepCache& s = trace[k];
        Eigen::MatrixXd dh_prev;
        switch (cell.kind) {
            case CellKind::rnn: {
                d_pre = (dh.array() * (1.0 - s.gates.array().square())).matrix();
                dh_prev.noalias() = cell.recurrent_weight.transpose() * d_pre;
                grad.recurrent_weight.noalias() += d_pre * s.h_prev.transpose();
                break;
            }
            case CellKind::lstm: {
                const auto i = s.gates.topRows(H).array();
                const auto f = s.gates.middleRows(H, H).array();
                const auto g = s.gates.middleRows(2 * H, H).array();
                const auto o = s.gates.bottomRows(H).array();
                const auto tc = s.tanh_c.array();
                const Eigen::ArrayXXd dc_total = dc.array() + dh.array() * o * (1.0 - tc.square());
                d_pre.resize(4 * H, dh.cols());
                d_pre.topRows(H) = (dc_total * g * i * (1.0 - i)).matrix();
                d_pre.middleRows(H, H) = (dc_total * s.c_prev.array() * f * (1.0 - f)).matrix();
                d_pre.middleRows(2 * H, H) = (dc_total * i * (1.0 - g.square())).matrix();
                d_pre.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
                dc = (dc_total * f).matrix();
                dh_prev.noalias() = cell.recurrent_weight.transpose() * d_pre;
                grad.recurrent_weight.noalias() += d_pre * s.h_prev.transpose();
                break;
            }
            case CellKind::gru: {
                const auto z = s.gates.topRows(H).array();
                const auto r = s.gates.middleRows(H, H).array();
                const auto n = s.gates.bottomRows(H).array();
                const auto hp = s.h_prev.array();
                d_pre.resize(3 * H, dh.cols());
                const Eigen::ArrayXXd d_pre_n = dh.array() * (1.0 - z) * (1.0 - n.square());
                d_pre.bottomRows(H) = d_pre_n.matrix();
                d_pre.topRows(H) = (dh.array() * (hp - n) * z * (1.0 - z)).matrix();
                const Eigen::MatrixXd d_reset_h = cell.recurrent_weight.bottomRows(H).transpose() * d_pre_n.matrix();
                d_pre.middleRows(H, H) = (d_reset_h.array() * hp * r * (1.0 - r)).matrix();
                dh_prev = (dh.array() * z + d_reset_h.array() * r).matrix();
                dh_prev.noalias() += cell.recurrent_weight.topRows(2 * H).transpose() * d_pre.topRows(2 * H);
                grad.recurrent_weight.topRows(2 * H).noalias() += d_pre.topRows(2 * H) * s.h_prev.transpose();
                grad.recurrent_weight.bottomRows(H).noalias() += d_pre.bottomRows(H) * s.reset_h.transpose();
                break;
            }
        }
        grad.input_weight.noalias() += d_pre * s.x.transpose();
        grad.bias.noalias() += d_pre.rowwise().sum();
        if (d_inputs != nullptr) {
            (*d_inputs)[k].noalias() = cell.input_weight.transpose() * d_pre;
        }
        dh = std::move(dh_prev);
    }
}

}  // namespace detail

}  // namespace ghicast
