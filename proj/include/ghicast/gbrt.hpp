#pragma once

// Gradient-boosted regression trees with Huber-loss pseudo-residuals and
// robust (median-plus-clipped-mean) leaf values.

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "ghicast/features.hpp"

namespace ghicast {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes in pre-order; rows with x[feature] <= threshold go left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return nodes[leaf_index(x)].value; }
    int depth() const;
    int leaf_count() const;

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

/// A split must reduce the node's squared error by more than this fraction of
/// it, and must beat the best earlier candidate by the same margin.
inline constexpr double kSplitTieTolerance = 1e-12;

/// Midpoint of adjacent sorted values a < b, kept strictly below b.
double split_threshold(double a, double b);

/// Greedy least-squares tree: each split maximises squared-error reduction over
/// all (feature, midpoint) pairs with both children holding >= min_leaf rows;
/// ties go to the lowest feature, then the lowest threshold. Leaves hold the
/// mean target. Depth-0 or degenerate inputs yield a single leaf.
RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, int max_depth, int min_leaf);

/// Negative Huber gradient: clip(y - F, -delta, delta).
Eigen::VectorXd huber_pseudo_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& F, double delta);

/// median(r) + mean(clip(r - median(r), -delta, delta)). r must be non-empty.
double leaf_update_huber(std::span<const double> residuals, double delta);

double median_of(std::vector<double> values);
/// Linear-interpolation quantile (q in [0, 1]) of a non-empty sample.
double quantile_of(std::vector<double> values, double q);

struct GBRTConfig {
    int rounds = 200;
    double shrinkage = 0.1;
    int max_depth = 6;
    int min_leaf = 20;
    double delta_quantile = 0.9;  // delta per round = this quantile of |y - F|

    static int default_depth(FeatureMode mode) { return mode == FeatureMode::single ? 6 : 8; }
    void validate() const;
};

struct BoostingRound {
    double delta = 0.0;
    double loss_before = 0.0;  // mean Huber(delta) before the round's tree
    double loss_after = 0.0;   // same delta, after
};

struct TreeEnsemble {
    int input_dim = 0;
    double initial = 0.0;  // F0
    double shrinkage = 0.1;
    double delta_quantile = 0.9;
    int max_depth = 0;
    int min_leaf = 0;
    std::vector<RegressionTree> stages;
    std::vector<BoostingRound> rounds;  // training diagnostics, not persisted

    friend bool operator==(const TreeEnsemble& a, const TreeEnsemble& b) {
        return a.input_dim == b.input_dim && a.initial == b.initial && a.shrinkage == b.shrinkage &&
               a.delta_quantile == b.delta_quantile && a.max_depth == b.max_depth && a.min_leaf == b.min_leaf &&
               a.stages == b.stages;
    }
};

/// Stagewise Huber boosting from F0 = median(y). Each round's per-leaf step is
/// halved until that leaf's Huber loss does not increase, so the recorded
/// training loss is non-increasing round over round.
TreeEnsemble fit_gbrt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GBRTConfig& config);

/// F0 + sum nu * tree_i(x) over the first `stage_count` stages (all when negative).
Eigen::VectorXd predict_raw(const TreeEnsemble& ensemble, const Eigen::MatrixXd& X, int stage_count = -1);
/// predict_raw clamped at zero (GHI is non-negative).
Eigen::VectorXd predict(const TreeEnsemble& ensemble, const Eigen::MatrixXd& X);

}  // namespace ghicast
