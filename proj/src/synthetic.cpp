#include <cmath>
#include <numbers>
#include <random>

#include "ghicast/error.hpp"
#include "ghicast/timeseries.hpp"

namespace ghicast {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

double clear_sky_ghi(Hour t) {
    const int h = hour_of_day(t);
    if (h <= 6 || h >= 18) {
        return 0.0;
    }
    return std::max(0.0, kClearSkyAmplitude * std::sin(std::numbers::pi * (h - 6) / 12.0));
}

CloudField::CloudField(std::uint64_t seed, double probability, double lattice_cells)
    : seed_(splitmix64(seed ^ 0xC10D5EEDULL)), probability_(probability), pitch_(lattice_cells) {}

double CloudField::attenuation(double x, double y) const {
    const auto ci = static_cast<long long>(std::floor(x / pitch_));
    const auto cj = static_cast<long long>(std::floor(y / pitch_));
    double occlusion = 0.0;
    for (long long di = -3; di <= 3; ++di) {
        for (long long dj = -3; dj <= 3; ++dj) {
            const long long i = ci + di;
            const long long j = cj + dj;
            std::uint64_t h = splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(i) * 0x632BE59BD9B4E019ULL +
                                                            static_cast<std::uint64_t>(j)));
            if (unit(h) >= probability_) {
                continue;
            }
            h = splitmix64(h);
            const double bx = (static_cast<double>(i) + unit(h)) * pitch_;
            h = splitmix64(h);
            const double by = (static_cast<double>(j) + unit(h)) * pitch_;
            h = splitmix64(h);
            const double sigma = pitch_ * (0.35 + 0.4 * unit(h));
            h = splitmix64(h);
            const double intensity = 0.6 + 0.6 * unit(h);
            const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
            occlusion += intensity * std::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
    return 1.0 - 0.8 * std::min(1.0, occlusion);
}

IrradianceTable generate_synthetic(const SyntheticConfig& config) {
    if (config.rows <= 0 || config.cols <= 0) {
        throw ConfigError("synthetic grid must be at least 1x1");
    }
    if (config.hours < 1) {
        throw ConfigError("synthetic hours must be >= 1");
    }
    if (config.cloud_speed < 0.0 || config.lattice_cells <= 0.0) {
        throw ConfigError("cloud speed must be >= 0 and lattice pitch > 0");
    }

    const auto hours = static_cast<std::size_t>(config.hours);
    std::vector<double> direction(hours);
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> initial(0.0, 360.0);
    std::normal_distribution<double> turn(0.0, config.direction_step_deg);
    double theta = config.fixed_direction_deg.value_or(initial(rng));
    for (std::size_t h = 0; h < hours; ++h) {
        theta = std::fmod(theta, 360.0);
        if (theta < 0.0) theta += 360.0;
        if (theta >= 360.0) theta = 0.0;
        direction[h] = theta;
        if (!config.fixed_direction_deg) {
            theta += turn(rng);
        }
    }

    // Cumulative displacement of the frozen cloud texture; wind at hour h
    // carries the field from h to h+1.
    std::vector<double> shift_x(hours, 0.0);
    std::vector<double> shift_y(hours, 0.0);
    for (std::size_t h = 1; h < hours; ++h) {
        const double rad = direction[h - 1] * std::numbers::pi / 180.0;
        shift_x[h] = shift_x[h - 1] + config.cloud_speed * std::sin(rad);
        shift_y[h] = shift_y[h - 1] - config.cloud_speed * std::cos(rad);
    }

    const double wind_speed = config.cloud_speed * kGridCellKm * 1000.0 / 3600.0;
    const CloudField clouds(config.seed, config.cloud_probability, config.lattice_cells);

    std::vector<HourlyRecord> records;
    records.reserve(static_cast<std::size_t>(config.rows * config.cols) * hours);
    for (int r = 0; r < config.rows; ++r) {
        for (int c = 0; c < config.cols; ++c) {
            const LocationId loc{r * config.cols + c, r, c};
            for (std::size_t h = 0; h < hours; ++h) {
                const Hour t = config.start + static_cast<Hour>(h);
                const double clear = clear_sky_ghi(t);
                const double att = clear > 0.0 ? clouds.attenuation(c - shift_x[h], r - shift_y[h]) : 1.0;
                records.push_back({t, loc, clear * att, wind_speed, direction[h]});
            }
        }
    }
    return IrradianceTable::from_records(std::move(records));
}

IrradianceTable generate_synthetic(int rows, int cols, int hours, std::uint64_t seed, double cloud_speed) {
    SyntheticConfig config;
    config.rows = rows;
    config.cols = cols;
    config.hours = hours;
    config.seed = seed;
    config.cloud_speed = cloud_speed;
    return generate_synthetic(config);
}

}  // namespace ghicast
