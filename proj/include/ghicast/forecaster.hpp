#pragma once

// A trained model bundled with the feature layout and scaler it was fitted
// with, plus the on-disk formats for both model families.
//
// Neural file: ASCII header lines `key value` terminated by `end_header\n`,
// followed by `param_count` float64 little-endian parameters in declaration
// order. GBRT file: plain text, trees serialized in pre-order.

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "ghicast/features.hpp"
#include "ghicast/gbrt.hpp"
#include "ghicast/neural.hpp"

namespace ghicast {

enum class ModelKind { ffnn, rnn, gru, lstm, bilstm, gbrt };

std::string to_string(ModelKind kind);
/// Table label: FFNN, RNN, GRU, LSTM, BiLSTM, GBRT.
std::string display_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
bool is_recurrent(ModelKind kind);
CellKind cell_kind_of(ModelKind kind);

struct ForecastSetup {
    FeatureSpec spec;
    Scaler scaler;
    int target = 0;
    std::vector<int> neighbors;

    friend bool operator==(const ForecastSetup&, const ForecastSetup&) = default;
};

using ModelVariant = std::variant<FFNNModel, EncoderDecoderModel, TreeEnsemble>;

struct Forecaster {
    ModelKind kind = ModelKind::ffnn;
    ForecastSetup setup;
    ModelVariant model;

    int input_dim() const;
    /// Scaled-unit predictions, clamped at zero. Throws DataError on a column mismatch.
    Eigen::VectorXd predict_scaled(const Eigen::MatrixXd& X) const;
    /// Predictions in W/m^2.
    Eigen::VectorXd predict_ghi(const Eigen::MatrixXd& X) const;
};

inline constexpr int kModelFormatVersion = 1;

void save_forecaster(const Forecaster& forecaster, std::ostream& out);
Forecaster load_forecaster(std::istream& in);
void save_forecaster_file(const Forecaster& forecaster, const std::string& path);
Forecaster load_forecaster_file(const std::string& path);

}  // namespace ghicast
