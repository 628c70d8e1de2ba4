#pragma once

// Per-lead-time evaluation results, the MAE/RMSE table layout, and the
// plot-data CSV (`model,mode,T,mae,rmse`).

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ghicast/features.hpp"

namespace ghicast {

struct Metrics {
    double mae = 0.0;   // W/m^2
    double rmse = 0.0;  // W/m^2

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Maps a scaled feature matrix to scaled predictions.
using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// Inverse-scales predictions and labels to W/m^2, then applies the MAE/RMSE
/// definitions over every row. Throws DataError on an empty test set.
Metrics evaluate(const Predictor& predictor, const Dataset& test, const Scaler& scaler);
Metrics metrics_of(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

struct LeadEntry {
    int lead = 0;
    std::optional<Metrics> metrics;  // absent when that lead's training failed
    std::string failure;
};

struct LeadTimeReport {
    std::string model;  // e.g. "LSTM"
    std::string mode;   // e.g. "-1", "-17"
    std::vector<LeadEntry> entries;  // ascending lead

    std::string label() const { return model + mode; }
    const LeadEntry* find(int lead) const;
    /// Arithmetic mean over the present entries; nullopt when none are present.
    std::optional<Metrics> average() const;
};

/// 100 (MAE_single - MAE_multi) / MAE_single at lead T.
double improvement(const LeadTimeReport& single, const LeadTimeReport& multi, int lead);

/// Rows stably sorted by (model, T); absent cells have empty mae/rmse fields.
void emit_plot_data(std::span<const LeadTimeReport> reports, std::ostream& out);
/// Inverse of emit_plot_data; reports come back in first-appearance order of (model, mode).
std::vector<LeadTimeReport> parse_plot_data(std::istream& in);

/// Text table: one row per report, columns T=1 / T=24 / average x MAE / RMSE, one decimal.
std::string render_table(std::span<const LeadTimeReport> reports);

}  // namespace ghicast
