#pragma once

// Supervised (X, y) construction from irradiance tables, in the
// single-location and multi-location (target + N neighbors) layouts.

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ghicast/timeseries.hpp"

namespace ghicast {

enum class FeatureMode { single, multi };

std::string to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view text);

struct FeatureSpec {
    FeatureMode mode = FeatureMode::single;
    int p = 120;        // target lag
    int p_prime = 0;    // neighbor lag
    int neighbors = 0;  // N
    int lead = 1;       // T

    static FeatureSpec single(int p, int lead) { return {FeatureMode::single, p, 0, 0, lead}; }
    static FeatureSpec multi(int p, int p_prime, int neighbors, int lead) {
        return {FeatureMode::multi, p, p_prime, neighbors, lead};
    }

    /// Throws ConfigError.
    void validate() const;
    /// "-1" for single, "-<N+1>" for multi.
    std::string mode_label() const;

    friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// p for single mode, p + N p' + 2 (N + 1) for multi mode.
constexpr int input_dim(const FeatureSpec& spec) {
    if (spec.mode == FeatureMode::single) {
        return spec.p;
    }
    return spec.p + spec.neighbors * spec.p_prime + 2 * (spec.neighbors + 1);
}

/// Column ranges of each feature group within a row.
struct ColumnLayout {
    int ghi_end = 0;             // [0, ghi_end): target and neighbor GHI lags
    int direction_begin = 0;     // [direction_begin, speed_begin): wind directions
    int speed_begin = 0;         // [speed_begin, dim): wind speeds
    int dim = 0;
};

ColumnLayout column_layout(const FeatureSpec& spec);

struct Dataset {
    FeatureSpec spec;
    Eigen::MatrixXd X;  // n x d
    Eigen::VectorXd y;  // n
    std::vector<Hour> origins;  // prediction-origin hour t of each row
    std::size_t skipped_rows = 0;  // candidate rows rejected because a window touched a gap

    Eigen::Index rows() const { return X.rows(); }
    int dim() const { return static_cast<int>(X.cols()); }
};

/// Rows [I_j(t-p+1), ..., I_j(t)] -> I_j(t+T), ordered by t.
Dataset build_single(const IrradianceTable& table, const FeatureSpec& spec, int target);

/// Canonical layout: target lags, neighbor lag blocks in caller order, wind
/// directions [target, neighbors...], wind speeds in the same order.
Dataset build_multi(const IrradianceTable& table, const FeatureSpec& spec, int target, std::span<const int> neighbors);

/// Dispatches on spec.mode; neighbors ignored for single mode.
Dataset build_dataset(const IrradianceTable& table, const FeatureSpec& spec, int target,
                      std::span<const int> neighbors);

/// Location closest to the grid centre (ties: lowest id).
int default_target(const IrradianceTable& table);
/// The `count` locations nearest `target` by grid distance, ties broken by id.
std::vector<int> nearest_neighbors(const IrradianceTable& table, int target, int count);

/// Per-group scaling: GHI by train max, wind speed by train max, direction by 360.
struct Scaler {
    double ghi_scale = 1.0;
    double speed_scale = 1.0;
    static constexpr double direction_scale = 360.0;

    double ghi_to_scaled(double v) const { return v / ghi_scale; }
    double ghi_from_scaled(double v) const { return v * ghi_scale; }

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

/// Throws DataError on an empty dataset or a non-positive maximum.
Scaler scale_fit(const Dataset& train);
Dataset scale_apply(const Scaler& scaler, Dataset dataset);
Eigen::VectorXd unscale_ghi(const Scaler& scaler, const Eigen::VectorXd& scaled);

/// Columns f000..f{d-1}, label, origin_timestamp.
void write_dataset_csv(const Dataset& dataset, std::ostream& out);
/// Inverse of write_dataset_csv. Dataset::spec keeps its defaults; d comes from the header.
Dataset read_dataset_csv(std::istream& in);

}  // namespace ghicast
