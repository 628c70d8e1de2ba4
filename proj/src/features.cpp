#include "ghicast/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "ghicast/error.hpp"
#include "ghicast/textio.hpp"

namespace ghicast {

namespace {

bool window_present(const LocationSeries& s, Hour from, Hour to) {
    for (Hour h = from; h <= to; ++h) {
        if (!s.has(h)) {
            return false;
        }
    }
    return true;
}

void check_length(const LocationSeries& s, const FeatureSpec& spec) {
    const auto needed = static_cast<std::size_t>(spec.p + spec.lead);
    if (s.span_hours() < needed) {
        throw DataError("series for location " + std::to_string(s.location.id) + " has " +
                        std::to_string(s.span_hours()) + " hours; need at least p + T = " + std::to_string(needed));
    }
}

Dataset finish(FeatureSpec spec, std::vector<double>&& values, std::vector<double>&& labels,
               std::vector<Hour>&& origins, std::size_t skipped) {
    const int d = input_dim(spec);
    const auto n = static_cast<Eigen::Index>(labels.size());
    Dataset ds;
    ds.spec = spec;
    ds.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, d);
    ds.y = Eigen::Map<const Eigen::VectorXd>(labels.data(), n);
    ds.origins = std::move(origins);
    ds.skipped_rows = skipped;
    return ds;
}

}  // namespace

std::string to_string(FeatureMode mode) { return mode == FeatureMode::single ? "single" : "multi"; }

FeatureMode parse_feature_mode(std::string_view text) {
    if (text == "single") return FeatureMode::single;
    if (text == "multi") return FeatureMode::multi;
    throw ConfigError("unknown mode '" + std::string(text) + "' (expected single or multi)");
}

void FeatureSpec::validate() const {
    if (p < 1) throw ConfigError("lag p must be >= 1");
    if (lead < 1) throw ConfigError("lead time T must be >= 1");
    if (mode == FeatureMode::single) {
        if (neighbors != 0 || p_prime != 0) {
            throw ConfigError("single mode requires N = 0 and p' = 0");
        }
    } else {
        if (neighbors < 1) throw ConfigError("multi mode requires N >= 1");
        if (p_prime < 1) throw ConfigError("multi mode requires p' >= 1");
    }
}

std::string FeatureSpec::mode_label() const {
    return "-" + std::to_string(mode == FeatureMode::single ? 1 : neighbors + 1);
}

ColumnLayout column_layout(const FeatureSpec& spec) {
    ColumnLayout layout;
    layout.dim = input_dim(spec);
    if (spec.mode == FeatureMode::single) {
        layout.ghi_end = layout.direction_begin = layout.speed_begin = layout.dim;
        return layout;
    }
    layout.ghi_end = spec.p + spec.neighbors * spec.p_prime;
    layout.direction_begin = layout.ghi_end;
    layout.speed_begin = layout.direction_begin + spec.neighbors + 1;
    return layout;
}

Dataset build_single(const IrradianceTable& table, const FeatureSpec& spec, int target) {
    spec.validate();
    if (spec.mode != FeatureMode::single) {
        throw ConfigError("build_single requires single mode");
    }
    const LocationSeries& s = table.series(target);
    check_length(s, spec);

    std::vector<double> values;
    std::vector<double> labels;
    std::vector<Hour> origins;
    std::size_t skipped = 0;
    for (Hour t = s.first + spec.p - 1; t + spec.lead <= s.last; ++t) {
        if (!window_present(s, t - spec.p + 1, t) || !s.has(t + spec.lead)) {
            ++skipped;
            continue;
        }
        for (Hour h = t - spec.p + 1; h <= t; ++h) {
            values.push_back(s.ghi[s.index(h)]);
        }
        labels.push_back(s.ghi[s.index(t + spec.lead)]);
        origins.push_back(t);
    }
    return finish(spec, std::move(values), std::move(labels), std::move(origins), skipped);
}

Dataset build_multi(const IrradianceTable& table, const FeatureSpec& spec, int target, std::span<const int> neighbors) {
    spec.validate();
    if (spec.mode != FeatureMode::multi) {
        throw ConfigError("build_multi requires multi mode");
    }
    if (static_cast<int>(neighbors.size()) != spec.neighbors) {
        throw ConfigError("expected " + std::to_string(spec.neighbors) + " neighbors, got " +
                          std::to_string(neighbors.size()));
    }
    std::set<int> distinct(neighbors.begin(), neighbors.end());
    if (distinct.size() != neighbors.size() || distinct.count(target) != 0) {
        throw ConfigError("neighbor list must be distinct and exclude the target");
    }

    const LocationSeries& tgt = table.series(target);
    check_length(tgt, spec);
    std::vector<const LocationSeries*> others;
    for (int id : neighbors) {
        if (!table.contains(id)) {
            throw DataError("missing neighbor series for location " + std::to_string(id));
        }
        others.push_back(&table.series(id));
    }

    std::vector<double> values;
    std::vector<double> labels;
    std::vector<Hour> origins;
    std::size_t skipped = 0;
    for (Hour t = tgt.first + spec.p - 1; t + spec.lead <= tgt.last; ++t) {
        bool ok = window_present(tgt, t - spec.p + 1, t) && tgt.has(t + spec.lead);
        for (const auto* n : others) {
            ok = ok && window_present(*n, t - spec.p_prime + 1, t);
        }
        if (!ok) {
            ++skipped;
            continue;
        }
        for (Hour h = t - spec.p + 1; h <= t; ++h) {
            values.push_back(tgt.ghi[tgt.index(h)]);
        }
        for (const auto* n : others) {
            for (Hour h = t - spec.p_prime + 1; h <= t; ++h) {
                values.push_back(n->ghi[n->index(h)]);
            }
        }
        values.push_back(tgt.wind_direction[tgt.index(t)]);
        for (const auto* n : others) {
            values.push_back(n->wind_direction[n->index(t)]);
        }
        values.push_back(tgt.wind_speed[tgt.index(t)]);
        for (const auto* n : others) {
            values.push_back(n->wind_speed[n->index(t)]);
        }
        labels.push_back(tgt.ghi[tgt.index(t + spec.lead)]);
        origins.push_back(t);
    }
    return finish(spec, std::move(values), std::move(labels), std::move(origins), skipped);
}

Dataset build_dataset(const IrradianceTable& table, const FeatureSpec& spec, int target,
                      std::span<const int> neighbors) {
    if (spec.mode == FeatureMode::single) {
        return build_single(table, spec, target);
    }
    return build_multi(table, spec, target, neighbors);
}

int default_target(const IrradianceTable& table) {
    const auto locs = table.locations();
    if (locs.empty()) {
        throw DataError("empty table has no target location");
    }
    int min_r = locs.front().grid_row, max_r = min_r, min_c = locs.front().grid_col, max_c = min_c;
    for (const auto& l : locs) {
        min_r = std::min(min_r, l.grid_row);
        max_r = std::max(max_r, l.grid_row);
        min_c = std::min(min_c, l.grid_col);
        max_c = std::max(max_c, l.grid_col);
    }
    // Twice the centre keeps the comparison in integers.
    const int cr2 = min_r + max_r;
    const int cc2 = min_c + max_c;
    int best = locs.front().id;
    long best_d = -1;
    for (const auto& l : locs) {
        const long dr = 2L * l.grid_row - cr2;
        const long dc = 2L * l.grid_col - cc2;
        const long d = dr * dr + dc * dc;
        if (best_d < 0 || d < best_d) {
            best_d = d;
            best = l.id;
        }
    }
    return best;
}

std::vector<int> nearest_neighbors(const IrradianceTable& table, int target, int count) {
    const LocationId t = table.series(target).location;
    auto locs = table.locations();
    std::erase_if(locs, [&](const LocationId& l) { return l.id == target; });
    if (static_cast<int>(locs.size()) < count) {
        throw DataError("table has " + std::to_string(locs.size()) + " non-target locations; " +
                        std::to_string(count) + " neighbors requested");
    }
    const auto dist = [&](const LocationId& l) {
        const long dr = l.grid_row - t.grid_row;
        const long dc = l.grid_col - t.grid_col;
        return dr * dr + dc * dc;
    };
    std::stable_sort(locs.begin(), locs.end(), [&](const LocationId& a, const LocationId& b) {
        const long da = dist(a), db = dist(b);
        return da != db ? da < db : a.id < b.id;
    });
    std::vector<int> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(locs[static_cast<std::size_t>(i)].id);
    }
    return out;
}

Scaler scale_fit(const Dataset& train) {
    if (train.rows() == 0) {
        throw DataError("cannot fit scaler on an empty dataset");
    }
    const ColumnLayout layout = column_layout(train.spec);
    Scaler scaler;
    scaler.ghi_scale = std::max(train.X.leftCols(layout.ghi_end).maxCoeff(), train.y.maxCoeff());
    if (!(scaler.ghi_scale > 0.0) || !std::isfinite(scaler.ghi_scale)) {
        throw DataError("degenerate training GHI maximum (" + text::format_double(scaler.ghi_scale) + ")");
    }
    if (train.spec.mode == FeatureMode::multi) {
        scaler.speed_scale = train.X.middleCols(layout.speed_begin, layout.dim - layout.speed_begin).maxCoeff();
        if (!(scaler.speed_scale > 0.0) || !std::isfinite(scaler.speed_scale)) {
            throw DataError("degenerate training wind-speed maximum (" + text::format_double(scaler.speed_scale) + ")");
        }
    }
    return scaler;
}

Dataset scale_apply(const Scaler& scaler, Dataset dataset) {
    const ColumnLayout layout = column_layout(dataset.spec);
    dataset.X.leftCols(layout.ghi_end) /= scaler.ghi_scale;
    dataset.y /= scaler.ghi_scale;
    if (dataset.spec.mode == FeatureMode::multi) {
        dataset.X.middleCols(layout.direction_begin, layout.speed_begin - layout.direction_begin) /=
            Scaler::direction_scale;
        dataset.X.middleCols(layout.speed_begin, layout.dim - layout.speed_begin) /= scaler.speed_scale;
    }
    return dataset;
}

Eigen::VectorXd unscale_ghi(const Scaler& scaler, const Eigen::VectorXd& scaled) { return scaled * scaler.ghi_scale; }

void write_dataset_csv(const Dataset& dataset, std::ostream& out) {
    char name[16];
    for (int j = 0; j < dataset.dim(); ++j) {
        std::snprintf(name, sizeof(name), "f%03d", j);
        out << name << ',';
    }
    out << "label,origin_timestamp\n";
    for (Eigen::Index i = 0; i < dataset.rows(); ++i) {
        for (int j = 0; j < dataset.dim(); ++j) {
            out << text::format_double(dataset.X(i, j)) << ',';
        }
        out << text::format_double(dataset.y(i)) << ',' << format_iso_hour(dataset.origins[static_cast<std::size_t>(i)])
            << '\n';
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset CSV is empty");
    const auto header = text::split(text::trim(line), ',');
    if (header.size() < 2 || header[header.size() - 2] != "label" || header.back() != "origin_timestamp") {
        throw DataError("line 1: dataset header must end with label,origin_timestamp");
    }
    const auto d = static_cast<Eigen::Index>(header.size() - 2);
    std::vector<double> values;
    std::vector<double> labels;
    std::vector<Hour> origins;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        const auto f = text::split(trimmed, ',');
        if (f.size() != header.size()) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(f.size()));
        }
        for (std::size_t j = 0; j + 1 < f.size(); ++j) {
            const auto v = text::parse_double(f[j]);
            if (!v) throw DataError("line " + std::to_string(line_no) + ": malformed number '" + std::string(f[j]) + "'");
            (j + 2 < f.size() ? values : labels).push_back(*v);
        }
        const auto t = parse_iso_hour(f.back());
        if (!t) throw DataError("line " + std::to_string(line_no) + ": malformed timestamp");
        origins.push_back(*t);
    }
    Dataset out;
    const auto n = static_cast<Eigen::Index>(labels.size());
    out.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, d);
    out.y = Eigen::Map<const Eigen::VectorXd>(labels.data(), n);
    out.origins = std::move(origins);
    return out;
}

}  // namespace ghicast
