#pragma once

// Unrolled recurrent passes with the per-step caches BPTT needs.

#include <vector>

#include "ghicast/neural.hpp"

namespace ghicast::detail {

struct StepCache {
    Eigen::MatrixXd x;
    Eigen::MatrixXd h_prev;
    Eigen::MatrixXd c_prev;
    Eigen::MatrixXd gates;   // activated gate values, gates*H x B
    Eigen::MatrixXd tanh_c;  // lstm only
    Eigen::MatrixXd reset_h; // gru only: r (.) h_prev
    CellState out;
};

using SequenceTrace = std::vector<StepCache>;

SequenceTrace run_sequence(const RecurrentCell& cell, const std::vector<Eigen::MatrixXd>& inputs, CellState init);

/// Accumulates parameter gradients into `grad` given dL/dh of the final step.
/// When `d_inputs` is non-null it receives dL/dx_t for every step.
void backprop_sequence(const RecurrentCell& cell, const SequenceTrace& trace, const Eigen::MatrixXd& d_h_final,
                       RecurrentCell& grad, std::vector<Eigen::MatrixXd>* d_inputs);

}  // namespace ghicast::detail
