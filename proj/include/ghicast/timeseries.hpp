#pragma once

// Hourly irradiance/wind tables on a location grid: parsing, emission,
// validation, splitting and a synthetic advected-cloud generator.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ghicast {

/// UTC hours since 1970-01-01T00:00Z.
using Hour = std::int64_t;

constexpr Hour hour_from_civil(int year, unsigned month, unsigned day, unsigned hour) {
    // days-from-civil over the proleptic Gregorian calendar
    const int y = year - (month <= 2 ? 1 : 0);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const Hour days = static_cast<Hour>(era) * 146097 + static_cast<Hour>(doe) - 719468;
    return days * 24 + hour;
}
int year_of(Hour t);
int hour_of_day(Hour t);

/// Parses `YYYY-MM-DDTHH:00Z` (minutes must be zero). Returns nullopt on malformed text.
std::optional<Hour> parse_iso_hour(std::string_view text);
std::string format_iso_hour(Hour t);

struct LocationId {
    int id = 0;
    int grid_row = 0;
    int grid_col = 0;

    friend bool operator==(const LocationId&, const LocationId&) = default;
};

struct HourlyRecord {
    Hour timestamp = 0;
    LocationId location;
    double ghi = 0.0;             // W/m^2
    double wind_speed = 0.0;      // m/s
    double wind_direction = 0.0;  // degrees, [0, 360)

    friend bool operator==(const HourlyRecord&, const HourlyRecord&) = default;
};

/// Dense hourly view of one location over [first, last]; hours absent from
/// the source are flagged in `present` and hold NaN.
struct LocationSeries {
    LocationId location;
    Hour first = 0;
    Hour last = -1;
    std::vector<double> ghi;
    std::vector<double> wind_speed;
    std::vector<double> wind_direction;
    std::vector<char> present;

    bool covers(Hour t) const { return t >= first && t <= last; }
    bool has(Hour t) const { return covers(t) && present[index(t)] != 0; }
    std::size_t index(Hour t) const { return static_cast<std::size_t>(t - first); }
    std::size_t span_hours() const { return static_cast<std::size_t>(last - first + 1); }
    std::size_t missing_hours() const;
};

/// Immutable table of hourly records sorted by (location, timestamp).
class IrradianceTable {
public:
    IrradianceTable() = default;

    /// Validates value ranges and uniqueness, then sorts. Throws DataError.
    static IrradianceTable from_records(std::vector<HourlyRecord> records);

    std::span<const HourlyRecord> records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    /// Locations sorted by id.
    std::vector<LocationId> locations() const;
    bool contains(int location_id) const;
    /// Throws DataError when the location is absent.
    const LocationSeries& series(int location_id) const;

    Hour first_hour() const;
    Hour last_hour() const;

    friend bool operator==(const IrradianceTable& a, const IrradianceTable& b) {
        return a.records_ == b.records_;
    }

private:
    std::vector<HourlyRecord> records_;
    std::vector<LocationSeries> series_;
};

IrradianceTable parse_csv(std::istream& in);
IrradianceTable parse_csv_file(const std::string& path);
/// Canonical emission: header, one row per record, shortest round-trip decimals.
void emit_csv(const IrradianceTable& table, std::ostream& out);
void emit_csv_file(const IrradianceTable& table, const std::string& path);

struct YearRange {
    int first = 0;
    int last = 0;

    bool contains(int year) const { return year >= first && year <= last; }
};

/// Accepts `2000-2011` or a single year `2012`.
YearRange parse_year_range(std::string_view text);

struct TableSplit {
    IrradianceTable train;
    IrradianceTable test;
    std::size_t dropped = 0;
};

/// Records whose year lies in `years`; throws DataError when none do.
IrradianceTable select_years(const IrradianceTable& table, YearRange years);

TableSplit split_by_year(const IrradianceTable& table, YearRange train_years, YearRange test_years);

struct ValidationReport {
    struct Gap {
        LocationId location;
        Hour first_missing = 0;
        std::size_t hours = 0;
    };
    struct BadValue {
        LocationId location;
        Hour timestamp = 0;
        std::string field;
        double value = 0.0;
    };
    struct SpanMismatch {
        LocationId location;
        Hour first = 0;
        Hour last = 0;
        Hour expected_first = 0;
        Hour expected_last = 0;
    };
    struct Duplicate {
        LocationId location;
        Hour timestamp = 0;
    };

    std::vector<Gap> gaps;
    std::vector<BadValue> bad_values;
    std::vector<SpanMismatch> span_mismatches;
    std::vector<Duplicate> duplicates;

    bool empty() const {
        return gaps.empty() && bad_values.empty() && span_mismatches.empty() && duplicates.empty();
    }
};

/// Report-only check of raw records; nothing is modified.
ValidationReport validate_records(std::span<const HourlyRecord> records);
ValidationReport validate_table(const IrradianceTable& table);
std::string describe(const ValidationReport& report);

// ---------------------------------------------------------------------------
// Synthetic data

inline constexpr double kClearSkyAmplitude = 1000.0;  // W/m^2
inline constexpr double kGridCellKm = 10.0;

/// max(0, A sin(pi (h - 6) / 12)) with h the UTC hour of day.
double clear_sky_ghi(Hour t);

struct SyntheticConfig {
    int rows = 5;
    int cols = 5;
    int hours = 24;
    std::uint64_t seed = 0;
    double cloud_speed = 1.0;         // grid cells per hour
    Hour start = hour_from_civil(2000, 1, 1, 0);
    double cloud_probability = 0.5;   // chance of a blob per lattice cell; 0 gives clear sky
    double lattice_cells = 4.0;       // blob lattice pitch in grid cells
    double direction_step_deg = 10.0; // std-dev of the hourly wind-direction random walk
    std::optional<double> fixed_direction_deg;
};

/// Attenuation factor in [0.2, 1.0] of a frozen cloud texture sampled at
/// texture-frame coordinates (x east, y south, in grid cells).
class CloudField {
public:
    CloudField(std::uint64_t seed, double probability, double lattice_cells);
    double attenuation(double x, double y) const;

private:
    std::uint64_t seed_;
    double probability_;
    double pitch_;
};

IrradianceTable generate_synthetic(const SyntheticConfig& config);
IrradianceTable generate_synthetic(int rows, int cols, int hours, std::uint64_t seed, double cloud_speed);

}  // namespace ghicast
