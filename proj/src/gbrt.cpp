#include "ghicast/gbrt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ghicast/error.hpp"
#include "ghicast/numerics.hpp"

namespace ghicast {

namespace {

using SortedColumns = std::vector<std::vector<int>>;

SortedColumns presort(const Eigen::MatrixXd& X) {
    SortedColumns sorted(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
        auto& order = sorted[static_cast<std::size_t>(f)];
        order.resize(static_cast<std::size_t>(X.rows()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
    }
    return sorted;
}

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, int max_depth, int min_leaf,
                SortedColumns sorted)
        : X_(X), t_(targets), max_depth_(max_depth), min_leaf_(std::max(1, min_leaf)), sorted_(std::move(sorted)),
          goes_left_(static_cast<std::size_t>(X.rows()), 0), scratch_(static_cast<std::size_t>(X.rows())) {}

    RegressionTree build() {
        RegressionTree tree;
        if (X_.rows() > 0) {
            grow(tree, 0, static_cast<int>(X_.rows()), 0);
        } else {
            tree.nodes.push_back(TreeNode{});
        }
        return tree;
    }

private:
    struct Split {
        int feature = -1;
        int left_count = 0;
        double threshold = 0.0;
        double gain = 0.0;
    };

    int grow(RegressionTree& tree, int begin, int end, int depth) {
        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});

        std::vector<int> rows;
        if (sorted_.empty()) {
            rows.resize(static_cast<std::size_t>(end - begin));
            std::iota(rows.begin(), rows.end(), begin);
        } else {
            rows.assign(sorted_[0].begin() + begin, sorted_[0].begin() + end);
        }
        std::sort(rows.begin(), rows.end());
        double sum = 0.0;
        bool constant = true;
        for (int r : rows) {
            sum += t_(r);
            constant = constant && t_(r) == t_(rows.front());
        }
        const int n = end - begin;
        const double mean = sum / n;
        tree.nodes[index].value = mean;

        if (depth >= max_depth_ || constant || n < 2 * min_leaf_ || sorted_.empty()) {
            return index;
        }
        const Split best = find_split(begin, end, mean);
        if (best.feature < 0) {
            return index;
        }

        // Stable partition of every feature's segment into [left | right].
        const auto& order = sorted_[static_cast<std::size_t>(best.feature)];
        for (int k = begin; k < end; ++k) {
            goes_left_[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = (k - begin) < best.left_count;
        }
        for (auto& column : sorted_) {
            int l = begin;
            int r = begin + best.left_count;
            for (int k = begin; k < end; ++k) {
                const int row = column[static_cast<std::size_t>(k)];
                scratch_[static_cast<std::size_t>(goes_left_[static_cast<std::size_t>(row)] ? l++ : r++)] = row;
            }
            std::copy(scratch_.begin() + begin, scratch_.begin() + end, column.begin() + begin);
        }

        tree.nodes[index].feature = best.feature;
        tree.nodes[index].threshold = best.threshold;
        const int mid = begin + best.left_count;
        const int left = grow(tree, begin, mid, depth + 1);
        const int right = grow(tree, mid, end, depth + 1);
        tree.nodes[index].left = left;
        tree.nodes[index].right = right;
        return index;
    }

    Split find_split(int begin, int end, double mean) const {
        const int n = end - begin;
        double total = 0.0;
        double node_sse = 0.0;
        for (int k = begin; k < end; ++k) {
            const double c = t_(sorted_[0][static_cast<std::size_t>(k)]) - mean;
            total += c;
            node_sse += c * c;
        }
        const double parent_term = total * total / n;
        // Gains within this margin of each other are ties; the first candidate keeps them.
        const double margin = kSplitTieTolerance * node_sse;
        Split best;
        best.gain = margin;
        for (std::size_t f = 0; f < sorted_.size(); ++f) {
            const auto& order = sorted_[f];
            const auto fi = static_cast<Eigen::Index>(f);
            double left_sum = 0.0;
            for (int k = 1; k < n; ++k) {
                const int prev = order[static_cast<std::size_t>(begin + k - 1)];
                const int cur = order[static_cast<std::size_t>(begin + k)];
                left_sum += t_(prev) - mean;
                if (k < min_leaf_ || n - k < min_leaf_) {
                    continue;
                }
                const double a = X_(prev, fi);
                const double b = X_(cur, fi);
                if (!(a < b)) {
                    continue;
                }
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / k + right_sum * right_sum / (n - k) - parent_term;
                if (gain > best.gain + (best.feature < 0 ? 0.0 : margin)) {
                    best = {static_cast<int>(f), k, split_threshold(a, b), gain};
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& t_;
    int max_depth_;
    int min_leaf_;
    SortedColumns sorted_;
    std::vector<char> goes_left_;
    std::vector<int> scratch_;
};

double huber_sum(std::span<const double> residuals, double delta) {
    double s = 0.0;
    for (double r : residuals) s += huber(r, delta);
    return s;
}

}  // namespace

int RegressionTree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& node = nodes[static_cast<std::size_t>(i)];
        i = x(node.feature) <= node.threshold ? node.left : node.right;
    }
    return i;
}

int RegressionTree::depth() const {
    // Pre-order layout: recompute depths with an explicit stack.
    int deepest = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const TreeNode& node = nodes[static_cast<std::size_t>(i)];
        if (!node.is_leaf()) {
            stack.emplace_back(node.left, d + 1);
            stack.emplace_back(node.right, d + 1);
        }
    }
    return deepest;
}

int RegressionTree::leaf_count() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double split_threshold(double a, double b) {
    const double mid = a + (b - a) / 2.0;
    return mid < b ? mid : a;
}

RegressionTree fit_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets, int max_depth, int min_leaf) {
    if (X.rows() != targets.size()) {
        throw std::invalid_argument("fit_tree: X has " + std::to_string(X.rows()) + " rows but " +
                                    std::to_string(targets.size()) + " targets");
    }
    if (max_depth < 0) {
        throw std::invalid_argument("fit_tree: depth must be >= 0");
    }
    return TreeBuilder(X, targets, max_depth, min_leaf, presort(X)).build();
}

Eigen::VectorXd huber_pseudo_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& F, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("huber delta must be positive");
    if (y.size() != F.size()) throw std::invalid_argument("pseudo-residuals: length mismatch");
    return (y - F).cwiseMax(-delta).cwiseMin(delta);
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return lower + (upper - lower) / 2.0;
}

double quantile_of(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double leaf_update_huber(std::span<const double> residuals, double delta) {
    if (residuals.empty()) throw std::invalid_argument("leaf_update_huber: empty leaf");
    const double med = median_of(std::vector<double>(residuals.begin(), residuals.end()));
    double clipped = 0.0;
    for (double r : residuals) {
        clipped += std::clamp(r - med, -delta, delta);
    }
    return med + clipped / static_cast<double>(residuals.size());
}

void GBRTConfig::validate() const {
    if (rounds < 0) throw ConfigError("boosting rounds must be >= 0");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in (0, 1]");
    if (max_depth < 1) throw ConfigError("tree depth must be >= 1");
    if (min_leaf < 1) throw ConfigError("min samples per leaf must be >= 1");
    if (!(delta_quantile > 0.0 && delta_quantile <= 1.0)) throw ConfigError("delta quantile must lie in (0, 1]");
}

TreeEnsemble fit_gbrt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GBRTConfig& config) {
    config.validate();
    if (X.rows() == 0 || X.rows() != y.size()) {
        throw DataError("GBRT needs a non-empty dataset with one label per row");
    }
    const Eigen::Index n = X.rows();
    TreeEnsemble ensemble;
    ensemble.input_dim = static_cast<int>(X.cols());
    ensemble.shrinkage = config.shrinkage;
    ensemble.delta_quantile = config.delta_quantile;
    ensemble.max_depth = config.max_depth;
    ensemble.min_leaf = config.min_leaf;
    ensemble.initial = median_of(std::vector<double>(y.data(), y.data() + n));

    Eigen::VectorXd F = Eigen::VectorXd::Constant(n, ensemble.initial);
    const SortedColumns sorted = presort(X);
    std::vector<std::vector<int>> leaf_rows;
    std::vector<double> leaf_residuals;
    std::vector<double> moved;

    for (int round = 0; round < config.rounds; ++round) {
        const Eigen::VectorXd residual = y - F;
        std::vector<double> magnitude(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) magnitude[static_cast<std::size_t>(i)] = std::abs(residual(i));
        double delta = quantile_of(std::move(magnitude), config.delta_quantile);
        if (!(delta > 0.0)) {
            delta = 1e-12;  // every residual is already zero
        }
        const Eigen::VectorXd pseudo = residual.cwiseMax(-delta).cwiseMin(delta);
        RegressionTree tree = TreeBuilder(X, pseudo, config.max_depth, config.min_leaf, sorted).build();

        leaf_rows.assign(tree.nodes.size(), {});
        for (Eigen::Index i = 0; i < n; ++i) {
            leaf_rows[static_cast<std::size_t>(tree.leaf_index(X.row(i)))].push_back(static_cast<int>(i));
        }

        BoostingRound record;
        record.delta = delta;
        for (std::size_t leaf = 0; leaf < tree.nodes.size(); ++leaf) {
            const auto& rows = leaf_rows[leaf];
            if (!tree.nodes[leaf].is_leaf()) {
                continue;
            }
            if (rows.empty()) {
                tree.nodes[leaf].value = 0.0;
                continue;
            }
            leaf_residuals.clear();
            for (int r : rows) leaf_residuals.push_back(residual(r));
            const double before = huber_sum(leaf_residuals, delta);

            double step = leaf_update_huber(leaf_residuals, delta);
            double after = before;
            for (int attempt = 0; attempt < 60; ++attempt) {
                moved.clear();
                for (int r : rows) moved.push_back(y(r) - (F(r) + config.shrinkage * step));
                after = huber_sum(moved, delta);
                if (after <= before) break;
                step /= 2.0;
            }
            if (!(after <= before)) {
                step = 0.0;
                after = before;
            }
            tree.nodes[leaf].value = step;
            record.loss_before += before;
            record.loss_after += after;
        }
        record.loss_before /= static_cast<double>(n);
        record.loss_after /= static_cast<double>(n);
        if (record.loss_after > record.loss_before) {
            throw std::logic_error("boosting round increased training Huber loss");
        }

        for (Eigen::Index i = 0; i < n; ++i) {
            F(i) = F(i) + config.shrinkage * tree.predict(X.row(i));
        }
        ensemble.stages.push_back(std::move(tree));
        ensemble.rounds.push_back(record);
    }
    return ensemble;
}

Eigen::VectorXd predict_raw(const TreeEnsemble& ensemble, const Eigen::MatrixXd& X, int stage_count) {
    if (X.cols() != ensemble.input_dim) {
        throw DataError("feature matrix has " + std::to_string(X.cols()) + " columns; ensemble expects d = " +
                        std::to_string(ensemble.input_dim));
    }
    const std::size_t stages = stage_count < 0 ? ensemble.stages.size()
                                               : std::min(ensemble.stages.size(), static_cast<std::size_t>(stage_count));
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double f = ensemble.initial;
        for (std::size_t s = 0; s < stages; ++s) {
            f = f + ensemble.shrinkage * ensemble.stages[s].predict(X.row(i));
        }
        out(i) = f;
    }
    return out;
}

Eigen::VectorXd predict(const TreeEnsemble& ensemble, const Eigen::MatrixXd& X) {
    return predict_raw(ensemble, X).cwiseMax(0.0);
}

}  // namespace ghicast
