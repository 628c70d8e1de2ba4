#include "ghicast/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ghicast/error.hpp"
#include "ghicast/numerics.hpp"
#include "ghicast/textio.hpp"

namespace ghicast {

Metrics metrics_of(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    if (y.size() == 0) {
        throw DataError("cannot evaluate on an empty test set");
    }
    return {mae(y, yhat), rmse(y, yhat)};
}

Metrics evaluate(const Predictor& predictor, const Dataset& test, const Scaler& scaler) {
    if (test.rows() == 0) {
        throw DataError("cannot evaluate on an empty test set");
    }
    const Eigen::VectorXd yhat = unscale_ghi(scaler, predictor(test.X));
    const Eigen::VectorXd y = unscale_ghi(scaler, test.y);
    return metrics_of(y, yhat);
}

const LeadEntry* LeadTimeReport::find(int lead) const {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const LeadEntry& e) { return e.lead == lead; });
    return it == entries.end() ? nullptr : &*it;
}

std::optional<Metrics> LeadTimeReport::average() const {
    Metrics sum;
    int count = 0;
    for (const auto& e : entries) {
        if (e.metrics) {
            sum.mae += e.metrics->mae;
            sum.rmse += e.metrics->rmse;
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return Metrics{sum.mae / count, sum.rmse / count};
}

double improvement(const LeadTimeReport& single, const LeadTimeReport& multi, int lead) {
    const LeadEntry* s = single.find(lead);
    const LeadEntry* m = multi.find(lead);
    if (s == nullptr || m == nullptr || !s->metrics || !m->metrics) {
        throw DataError("lead " + std::to_string(lead) + " missing from " + (s && s->metrics ? multi : single).label());
    }
    if (s->metrics->mae == 0.0) {
        throw DataError("single-location MAE is zero at lead " + std::to_string(lead));
    }
    return 100.0 * (s->metrics->mae - m->metrics->mae) / s->metrics->mae;
}

void emit_plot_data(std::span<const LeadTimeReport> reports, std::ostream& out) {
    struct Row {
        const LeadTimeReport* report;
        const LeadEntry* entry;
    };
    std::vector<Row> rows;
    for (const auto& r : reports) {
        for (const auto& e : r.entries) rows.push_back({&r, &e});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.report->model != b.report->model) return a.report->model < b.report->model;
        return a.entry->lead < b.entry->lead;
    });
    out << "model,mode,T,mae,rmse\n";
    for (const auto& row : rows) {
        out << row.report->model << ',' << row.report->mode << ',' << row.entry->lead << ',';
        if (row.entry->metrics) {
            out << text::format_double(row.entry->metrics->mae) << ',' << text::format_double(row.entry->metrics->rmse);
        } else {
            out << ',';
        }
        out << '\n';
    }
}

std::vector<LeadTimeReport> parse_plot_data(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    std::vector<LeadTimeReport> reports;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        if (!header) {
            if (trimmed != "model,mode,T,mae,rmse") {
                throw DataError("line " + std::to_string(line_no) + ": expected header 'model,mode,T,mae,rmse'");
            }
            header = true;
            continue;
        }
        const auto f = text::split(trimmed, ',');
        const auto lead = f.size() == 5 ? text::parse_int(f[2]) : std::nullopt;
        if (!lead) throw DataError("line " + std::to_string(line_no) + ": malformed report row");
        const std::pair<std::string, std::string> key{std::string(f[0]), std::string(f[1])};
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, reports.size()).first;
            reports.push_back({key.first, key.second, {}});
        }
        LeadEntry entry;
        entry.lead = static_cast<int>(*lead);
        if (!text::trim(f[3]).empty() || !text::trim(f[4]).empty()) {
            const auto m = text::parse_double(f[3]);
            const auto r = text::parse_double(f[4]);
            if (!m || !r) throw DataError("line " + std::to_string(line_no) + ": malformed metric values");
            entry.metrics = Metrics{*m, *r};
        } else {
            entry.failure = "absent";
        }
        reports[it->second].entries.push_back(entry);
    }
    if (!header) throw DataError("report CSV is missing its header");
    for (auto& r : reports) {
        std::stable_sort(r.entries.begin(), r.entries.end(),
                         [](const LeadEntry& a, const LeadEntry& b) { return a.lead < b.lead; });
    }
    return reports;
}

std::string render_table(std::span<const LeadTimeReport> reports) {
    const auto cell = [](const std::optional<Metrics>& m, bool rmse) -> std::string {
        if (!m) return "-";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", rmse ? m->rmse : m->mae);
        return buf;
    };
    const auto at = [](const LeadTimeReport& r, int lead) -> std::optional<Metrics> {
        const LeadEntry* e = r.find(lead);
        return e ? e->metrics : std::nullopt;
    };
    std::size_t label_width = 5;
    for (const auto& r : reports) label_width = std::max(label_width, r.label().size());

    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-*s | %-15s | %-15s | %-15s\n", static_cast<int>(label_width), "", "T=1 hr",
                  "T=24 hr", "24 hr avg");
    out << buf;
    std::snprintf(buf, sizeof(buf), "%-*s | %7s %7s | %7s %7s | %7s %7s\n", static_cast<int>(label_width), "Model",
                  "MAE", "RMSE", "MAE", "RMSE", "MAE", "RMSE");
    out << buf;
    out << std::string(label_width + 54, '-') << '\n';
    std::string previous_mode;
    for (const auto& r : reports) {
        if (!previous_mode.empty() && r.mode != previous_mode) {
            out << std::string(label_width + 54, '-') << '\n';
        }
        previous_mode = r.mode;
        const auto t1 = at(r, 1);
        const auto t24 = at(r, 24);
        const auto avg = r.average();
        std::snprintf(buf, sizeof(buf), "%-*s | %7s %7s | %7s %7s | %7s %7s\n", static_cast<int>(label_width),
                      r.label().c_str(), cell(t1, false).c_str(), cell(t1, true).c_str(), cell(t24, false).c_str(),
                      cell(t24, true).c_str(), cell(avg, false).c_str(), cell(avg, true).c_str());
        out << buf;
    }
    return out.str();
}

}  // namespace ghicast
