#pragma once

// Glue between tables, feature construction, model fitting and evaluation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ghicast/forecaster.hpp"
#include "ghicast/report.hpp"

namespace ghicast {

struct ModelFamily {
    ModelKind kind = ModelKind::ffnn;
    FeatureSpec spec;         // spec.lead is replaced per lead time
    int target = -1;          // < 0: default_target
    std::vector<int> neighbors;  // empty in multi mode: nearest_neighbors
    TrainConfig train;
    GBRTConfig gbrt;
    EncoderDecoderOptions network;
    std::uint64_t seed = 0;   // weight init; train.seed drives shuffling
};

struct TrainSummary {
    std::size_t train_rows = 0;
    std::size_t skipped_rows = 0;
    Metrics train_metrics;       // W/m^2, on the full training set
    TrainHistory history;        // neural models only
    std::vector<BoostingRound> rounds;  // gbrt only
};

struct TrainOutcome {
    Forecaster forecaster;
    TrainSummary summary;
};

/// Resolved (target, neighbors) for a family against a table.
std::pair<int, std::vector<int>> resolve_locations(const ModelFamily& family, const IrradianceTable& table);

TrainOutcome train_forecaster(const ModelFamily& family, const IrradianceTable& train_table, int lead);

/// Builds the forecaster's own feature layout over `table` and scores it.
Metrics evaluate_forecaster(const Forecaster& forecaster, const IrradianceTable& table);

/// Per-lead seed derivation: same base and lead always give the same seeds.
std::uint64_t lead_seed(std::uint64_t base, int lead);

/// The family with both seeds derived for `lead`; sweep_leads trains each lead with this.
ModelFamily for_lead(const ModelFamily& family, int lead);

/// Trains and evaluates one family at each lead, `jobs` leads at a time.
/// A lead whose training throws is recorded as absent with its message.
LeadTimeReport sweep_leads(const ModelFamily& family, const IrradianceTable& train_table,
                           const IrradianceTable& test_table, std::span<const int> leads, int jobs = 1);

}  // namespace ghicast
