#include "ghicast/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "ghicast/error.hpp"

namespace ghicast {

std::pair<int, std::vector<int>> resolve_locations(const ModelFamily& family, const IrradianceTable& table) {
    const int target = family.target >= 0 ? family.target : default_target(table);
    if (!table.contains(target)) {
        throw DataError("target location " + std::to_string(target) + " is not in the table");
    }
    std::vector<int> neighbors;
    if (family.spec.mode == FeatureMode::multi) {
        neighbors = family.neighbors.empty() ? nearest_neighbors(table, target, family.spec.neighbors)
                                             : family.neighbors;
    }
    return {target, std::move(neighbors)};
}

std::uint64_t lead_seed(std::uint64_t base, int lead) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(lead);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

ModelFamily for_lead(const ModelFamily& family, int lead) {
    ModelFamily f = family;
    f.seed = lead_seed(family.seed, lead);
    f.train.seed = lead_seed(family.train.seed ^ 0x5DEECE66DULL, lead);
    return f;
}

TrainOutcome train_forecaster(const ModelFamily& family, const IrradianceTable& train_table, int lead) {
    FeatureSpec spec = family.spec;
    spec.lead = lead;
    spec.validate();
    auto [target, neighbors] = resolve_locations(family, train_table);

    Dataset raw = build_dataset(train_table, spec, target, neighbors);
    if (raw.rows() == 0) {
        throw DataError("no complete training windows for p = " + std::to_string(spec.p) + ", T = " +
                        std::to_string(lead));
    }
    const Scaler scaler = scale_fit(raw);
    const Dataset scaled = scale_apply(scaler, raw);

    TrainOutcome out;
    out.forecaster.kind = family.kind;
    out.forecaster.setup = {spec, scaler, target, neighbors};
    out.summary.train_rows = static_cast<std::size_t>(raw.rows());
    out.summary.skipped_rows = raw.skipped_rows;

    const int d = input_dim(spec);
    switch (family.kind) {
        case ModelKind::ffnn: {
            auto result = train(make_ffnn(d, family.seed), scaled, family.train);
            out.summary.history = std::move(result.history);
            out.forecaster.model = std::move(result.model);
            break;
        }
        case ModelKind::rnn:
        case ModelKind::gru:
        case ModelKind::lstm:
        case ModelKind::bilstm: {
            EncoderDecoderOptions options = family.network;
            options.cell = cell_kind_of(family.kind);
            options.bidirectional = family.kind == ModelKind::bilstm;
            auto result = train(make_encoder_decoder(d, options, family.seed), scaled, family.train);
            out.summary.history = std::move(result.history);
            out.forecaster.model = std::move(result.model);
            break;
        }
        case ModelKind::gbrt: {
            TreeEnsemble ensemble = fit_gbrt(scaled.X, scaled.y, family.gbrt);
            out.summary.rounds = ensemble.rounds;
            out.forecaster.model = std::move(ensemble);
            break;
        }
    }
    out.summary.train_metrics =
        metrics_of(raw.y, out.forecaster.predict_ghi(scaled.X));
    return out;
}

Metrics evaluate_forecaster(const Forecaster& forecaster, const IrradianceTable& table) {
    const auto& setup = forecaster.setup;
    const Dataset raw = build_dataset(table, setup.spec, setup.target, setup.neighbors);
    if (raw.rows() == 0) {
        throw DataError("no complete test windows");
    }
    const Dataset scaled = scale_apply(setup.scaler, raw);
    return metrics_of(raw.y, forecaster.predict_ghi(scaled.X));
}

LeadTimeReport sweep_leads(const ModelFamily& family, const IrradianceTable& train_table,
                           const IrradianceTable& test_table, std::span<const int> leads, int jobs) {
    LeadTimeReport report;
    report.model = display_name(family.kind);
    report.mode = family.spec.mode_label();
    report.entries.resize(leads.size());

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < leads.size(); i = next++) {
            LeadEntry& entry = report.entries[i];
            entry.lead = leads[i];
            const ModelFamily f = for_lead(family, leads[i]);
            try {
                const auto outcome = train_forecaster(f, train_table, leads[i]);
                entry.metrics = evaluate_forecaster(outcome.forecaster, test_table);
            } catch (const std::exception& e) {
                entry.failure = e.what();
            }
        }
    };
    const int n_threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(leads.size(), 1)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    }
    std::sort(report.entries.begin(), report.entries.end(),
              [](const LeadEntry& a, const LeadEntry& b) { return a.lead < b.lead; });
    return report;
}

}  // namespace ghicast
