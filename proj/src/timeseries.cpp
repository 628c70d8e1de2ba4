#include "ghicast/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "ghicast/error.hpp"
#include "ghicast/textio.hpp"

namespace ghicast {

namespace {

constexpr std::string_view kHeader = "timestamp,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction";

struct Civil {
    int year;
    unsigned month;
    unsigned day;
};

Civil civil_from_days(Hour days) {
    days += 719468;
    const Hour era = (days >= 0 ? days : days - 146096) / 146097;
    const auto doe = static_cast<unsigned>(days - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned day = doy - (153 * mp + 2) / 5 + 1;
    const unsigned month = mp < 10 ? mp + 3 : mp - 9;
    const auto year = static_cast<int>(yoe + era * 400) + (month <= 2 ? 1 : 0);
    return {year, month, day};
}

Hour floor_div(Hour a, Hour b) {
    Hour q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

bool is_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

unsigned to_unsigned(std::string_view s) {
    unsigned v = 0;
    for (char c : s) {
        v = v * 10 + static_cast<unsigned>(c - '0');
    }
    return v;
}

std::string location_label(const LocationId& loc) {
    return "location " + std::to_string(loc.id);
}

bool value_in_range(const HourlyRecord& r, std::string* field) {
    if (!std::isfinite(r.ghi) || r.ghi < 0.0) {
        *field = "ghi";
        return false;
    }
    if (!std::isfinite(r.wind_speed) || r.wind_speed < 0.0) {
        *field = "wind_speed";
        return false;
    }
    if (!std::isfinite(r.wind_direction) || r.wind_direction < 0.0 || r.wind_direction >= 360.0) {
        *field = "wind_direction";
        return false;
    }
    return true;
}

double field_value(const HourlyRecord& r, const std::string& field) {
    if (field == "ghi") return r.ghi;
    if (field == "wind_speed") return r.wind_speed;
    return r.wind_direction;
}

bool record_less(const HourlyRecord& a, const HourlyRecord& b) {
    if (a.location.id != b.location.id) return a.location.id < b.location.id;
    return a.timestamp < b.timestamp;
}

}  // namespace

int year_of(Hour t) { return civil_from_days(floor_div(t, 24)).year; }

int hour_of_day(Hour t) { return static_cast<int>(t - floor_div(t, 24) * 24); }

std::optional<Hour> parse_iso_hour(std::string_view text) {
    // YYYY-MM-DDTHH:MMZ or YYYY-MM-DDTHH:MM:SSZ
    text = text::trim(text);
    if (text.size() != 17 && text.size() != 20) {
        return std::nullopt;
    }
    if (text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' || text.back() != 'Z') {
        return std::nullopt;
    }
    const auto year = text.substr(0, 4);
    const auto month = text.substr(5, 2);
    const auto day = text.substr(8, 2);
    const auto hour = text.substr(11, 2);
    const auto minute = text.substr(14, 2);
    if (!is_digits(year) || !is_digits(month) || !is_digits(day) || !is_digits(hour) || !is_digits(minute)) {
        return std::nullopt;
    }
    if (text.size() == 20 && (text[16] != ':' || text.substr(17, 2) != "00")) {
        return std::nullopt;
    }
    const unsigned m = to_unsigned(month);
    const unsigned d = to_unsigned(day);
    const unsigned h = to_unsigned(hour);
    if (m < 1 || m > 12 || d < 1 || d > 31 || h > 23 || to_unsigned(minute) != 0) {
        return std::nullopt;
    }
    const int y = static_cast<int>(to_unsigned(year));
    const Hour t = hour_from_civil(y, m, d, h);
    const Civil back = civil_from_days(floor_div(t, 24));
    if (back.year != y || back.month != m || back.day != d) {
        return std::nullopt;  // e.g. Feb 30
    }
    return t;
}

std::string format_iso_hour(Hour t) {
    const Civil c = civil_from_days(floor_div(t, 24));
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02uT%02d:00Z", c.year, c.month, c.day, hour_of_day(t));
    return buffer;
}

std::size_t LocationSeries::missing_hours() const {
    return static_cast<std::size_t>(std::count(present.begin(), present.end(), char{0}));
}

IrradianceTable IrradianceTable::from_records(std::vector<HourlyRecord> records) {
    for (const auto& r : records) {
        std::string field;
        if (!value_in_range(r, &field)) {
            throw DataError("out-of-range " + field + " = " + text::format_double(field_value(r, field)) + " at " +
                            location_label(r.location) + ", " + format_iso_hour(r.timestamp));
        }
        if (r.location.id < 0) {
            throw DataError("negative location id " + std::to_string(r.location.id));
        }
    }
    std::stable_sort(records.begin(), records.end(), record_less);

    IrradianceTable table;
    for (std::size_t i = 0; i < records.size();) {
        std::size_t j = i;
        const LocationId loc = records[i].location;
        while (j < records.size() && records[j].location.id == loc.id) {
            if (records[j].location != loc) {
                throw DataError("location " + std::to_string(loc.id) + " has inconsistent grid coordinates");
            }
            if (j > i && records[j].timestamp == records[j - 1].timestamp) {
                throw DataError("duplicate record for " + location_label(loc) + " at " +
                                format_iso_hour(records[j].timestamp));
            }
            ++j;
        }
        LocationSeries s;
        s.location = loc;
        s.first = records[i].timestamp;
        s.last = records[j - 1].timestamp;
        const std::size_t span = s.span_hours();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.ghi.assign(span, nan);
        s.wind_speed.assign(span, nan);
        s.wind_direction.assign(span, nan);
        s.present.assign(span, 0);
        for (std::size_t k = i; k < j; ++k) {
            const auto idx = s.index(records[k].timestamp);
            s.ghi[idx] = records[k].ghi;
            s.wind_speed[idx] = records[k].wind_speed;
            s.wind_direction[idx] = records[k].wind_direction;
            s.present[idx] = 1;
        }
        table.series_.push_back(std::move(s));
        i = j;
    }
    table.records_ = std::move(records);
    return table;
}

std::vector<LocationId> IrradianceTable::locations() const {
    std::vector<LocationId> out;
    out.reserve(series_.size());
    for (const auto& s : series_) {
        out.push_back(s.location);
    }
    return out;
}

bool IrradianceTable::contains(int location_id) const {
    return std::any_of(series_.begin(), series_.end(),
                       [&](const LocationSeries& s) { return s.location.id == location_id; });
}

const LocationSeries& IrradianceTable::series(int location_id) const {
    auto it = std::lower_bound(series_.begin(), series_.end(), location_id,
                               [](const LocationSeries& s, int id) { return s.location.id < id; });
    if (it == series_.end() || it->location.id != location_id) {
        throw DataError("location " + std::to_string(location_id) + " not present in table");
    }
    return *it;
}

Hour IrradianceTable::first_hour() const {
    if (series_.empty()) throw DataError("empty table");
    Hour t = series_.front().first;
    for (const auto& s : series_) t = std::min(t, s.first);
    return t;
}

Hour IrradianceTable::last_hour() const {
    if (series_.empty()) throw DataError("empty table");
    Hour t = series_.front().last;
    for (const auto& s : series_) t = std::max(t, s.last);
    return t;
}

IrradianceTable parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<HourlyRecord> records;
    std::map<std::pair<int, Hour>, std::size_t> seen;

    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) {
            continue;
        }
        if (!header_seen) {
            if (trimmed != kHeader) {
                throw DataError("line " + std::to_string(line_no) + ": expected header '" + std::string(kHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = text::split(trimmed, ',');
        const auto fail = [&](const std::string& what) {
            return DataError("line " + std::to_string(line_no) + ": " + what);
        };
        if (fields.size() != 7) {
            throw fail("expected 7 fields, found " + std::to_string(fields.size()));
        }
        HourlyRecord r;
        const auto ts = parse_iso_hour(fields[0]);
        if (!ts) throw fail("malformed timestamp '" + std::string(fields[0]) + "'");
        r.timestamp = *ts;
        const auto id = text::parse_int(fields[1]);
        const auto row = text::parse_int(fields[2]);
        const auto col = text::parse_int(fields[3]);
        if (!id || !row || !col) throw fail("malformed location fields");
        if (*id < 0) throw fail("location_id must be non-negative");
        r.location = {static_cast<int>(*id), static_cast<int>(*row), static_cast<int>(*col)};
        const auto ghi = text::parse_double(fields[4]);
        const auto speed = text::parse_double(fields[5]);
        const auto dir = text::parse_double(fields[6]);
        if (!ghi) throw fail("malformed ghi '" + std::string(fields[4]) + "'");
        if (!speed) throw fail("malformed wind_speed '" + std::string(fields[5]) + "'");
        if (!dir) throw fail("malformed wind_direction '" + std::string(fields[6]) + "'");
        r.ghi = *ghi;
        r.wind_speed = *speed;
        r.wind_direction = *dir;
        std::string field;
        if (!value_in_range(r, &field)) {
            throw fail("out-of-range " + field + " = " + text::format_double(field_value(r, field)));
        }
        const auto key = std::make_pair(r.location.id, r.timestamp);
        if (auto it = seen.find(key); it != seen.end()) {
            throw fail("duplicate record for " + location_label(r.location) + " at " + format_iso_hour(r.timestamp) +
                       " (first seen on line " + std::to_string(it->second) + ")");
        }
        seen.emplace(key, line_no);
        records.push_back(r);
    }
    if (!header_seen) {
        throw DataError("line 1: missing header");
    }
    return IrradianceTable::from_records(std::move(records));
}

IrradianceTable parse_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    return parse_csv(in);
}

void emit_csv(const IrradianceTable& table, std::ostream& out) {
    out << kHeader << '\n';
    for (const auto& r : table.records()) {
        out << format_iso_hour(r.timestamp) << ',' << r.location.id << ',' << r.location.grid_row << ','
            << r.location.grid_col << ',' << text::format_double(r.ghi) << ',' << text::format_double(r.wind_speed)
            << ',' << text::format_double(r.wind_direction) << '\n';
    }
}

void emit_csv_file(const IrradianceTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    emit_csv(table, out);
    if (!out) {
        throw DataError("write failed for '" + path + "'");
    }
}

YearRange parse_year_range(std::string_view text) {
    text = text::trim(text);
    const auto dash = text.find('-', 1);
    const auto first = text::parse_int(text.substr(0, dash));
    const auto last = dash == std::string_view::npos ? first : text::parse_int(text.substr(dash + 1));
    if (!first || !last || *first > *last) {
        throw ConfigError("invalid year range '" + std::string(text) + "' (expected e.g. 2000-2011)");
    }
    return {static_cast<int>(*first), static_cast<int>(*last)};
}

IrradianceTable select_years(const IrradianceTable& table, YearRange years) {
    std::vector<HourlyRecord> kept;
    for (const auto& r : table.records()) {
        if (years.contains(year_of(r.timestamp))) kept.push_back(r);
    }
    if (kept.empty()) {
        throw DataError("no records in years " + std::to_string(years.first) + "-" + std::to_string(years.last));
    }
    return IrradianceTable::from_records(std::move(kept));
}

TableSplit split_by_year(const IrradianceTable& table, YearRange train_years, YearRange test_years) {
    if (train_years.first > train_years.last || test_years.first > test_years.last) {
        throw ConfigError("year range with first > last");
    }
    if (train_years.first <= test_years.last && test_years.first <= train_years.last) {
        throw ConfigError("train years " + std::to_string(train_years.first) + "-" + std::to_string(train_years.last) +
                          " overlap test years " + std::to_string(test_years.first) + "-" +
                          std::to_string(test_years.last));
    }
    std::vector<HourlyRecord> train;
    std::vector<HourlyRecord> test;
    std::size_t dropped = 0;
    for (const auto& r : table.records()) {
        const int y = year_of(r.timestamp);
        if (train_years.contains(y)) {
            train.push_back(r);
        } else if (test_years.contains(y)) {
            test.push_back(r);
        } else {
            ++dropped;
        }
    }
    if (train.empty()) throw DataError("train split is empty");
    if (test.empty()) throw DataError("test split is empty");
    return {IrradianceTable::from_records(std::move(train)), IrradianceTable::from_records(std::move(test)), dropped};
}

ValidationReport validate_records(std::span<const HourlyRecord> records) {
    ValidationReport report;
    std::vector<HourlyRecord> sorted(records.begin(), records.end());
    std::stable_sort(sorted.begin(), sorted.end(), record_less);

    struct Span {
        LocationId loc;
        Hour first;
        Hour last;
    };
    std::vector<Span> spans;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& r = sorted[i];
        std::string field;
        if (!value_in_range(r, &field)) {
            report.bad_values.push_back({r.location, r.timestamp, field, field_value(r, field)});
        }
        const bool new_location = i == 0 || sorted[i - 1].location.id != r.location.id;
        if (new_location) {
            spans.push_back({r.location, r.timestamp, r.timestamp});
            continue;
        }
        const Hour prev = sorted[i - 1].timestamp;
        if (r.timestamp == prev) {
            report.duplicates.push_back({r.location, r.timestamp});
        } else if (r.timestamp > prev + 1) {
            report.gaps.push_back({r.location, prev + 1, static_cast<std::size_t>(r.timestamp - prev - 1)});
        }
        spans.back().last = r.timestamp;
    }
    if (!spans.empty()) {
        const Span& ref = spans.front();
        for (const auto& s : spans) {
            if (s.first != ref.first || s.last != ref.last) {
                report.span_mismatches.push_back({s.loc, s.first, s.last, ref.first, ref.last});
            }
        }
    }
    return report;
}

ValidationReport validate_table(const IrradianceTable& table) { return validate_records(table.records()); }

std::string describe(const ValidationReport& report) {
    std::ostringstream out;
    for (const auto& g : report.gaps) {
        out << "gap: " << location_label(g.location) << " missing " << g.hours << " hour(s) from "
            << format_iso_hour(g.first_missing) << '\n';
    }
    for (const auto& b : report.bad_values) {
        out << "bad value: " << location_label(b.location) << " at " << format_iso_hour(b.timestamp) << ' ' << b.field
            << " = " << text::format_double(b.value) << '\n';
    }
    for (const auto& d : report.duplicates) {
        out << "duplicate: " << location_label(d.location) << " at " << format_iso_hour(d.timestamp) << '\n';
    }
    for (const auto& m : report.span_mismatches) {
        out << "span mismatch: " << location_label(m.location) << " covers " << format_iso_hour(m.first) << ".."
            << format_iso_hour(m.last) << ", expected " << format_iso_hour(m.expected_first) << ".."
            << format_iso_hour(m.expected_last) << '\n';
    }
    return out.str();
}

}  // namespace ghicast
