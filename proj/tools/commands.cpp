#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

#include "ghicast/error.hpp"
#include "ghicast/pipeline.hpp"
#include "ghicast/textio.hpp"

namespace ghicast::cli {
namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::pair<int, int> parse_grid(const std::string& text) {
    static const std::regex pattern("^([0-9]{1,4})x([0-9]{1,4})$");
    std::smatch m;
    if (!std::regex_match(text, m, pattern)) {
        throw ConfigError("--grid expects RxC, got '" + text + "'");
    }
    const int rows = std::stoi(m[1]);
    const int cols = std::stoi(m[2]);
    if (rows < 1 || cols < 1) {
        throw ConfigError("--grid dimensions must be >= 1, got '" + text + "'");
    }
    return {rows, cols};
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto part : text::split(text, ',')) {
        part = text::trim(part);
        if (!part.empty()) out.emplace_back(part);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    for (const auto& item : split_list(text)) {
        const auto v = text::parse_int(item);
        if (!v) throw ConfigError(std::string(what) + ": '" + item + "' is not an integer");
        out.push_back(static_cast<int>(*v));
    }
    return out;
}

/// "1-24", "1,24", "1-6,12". Sorted, unique, each in 1..24.
std::vector<int> parse_leads(const std::string& text) {
    std::vector<int> leads;
    for (const auto& item : split_list(text)) {
        const auto dash = item.find('-');
        const auto lo = text::parse_int(std::string_view(item).substr(0, dash));
        const auto hi = dash == std::string::npos ? lo : text::parse_int(std::string_view(item).substr(dash + 1));
        if (!lo || !hi || *lo > *hi) throw ConfigError("--leads: malformed item '" + item + "'");
        for (auto t = *lo; t <= *hi; ++t) {
            if (t < 1 || t > 24) throw ConfigError("--leads: lead " + std::to_string(t) + " outside 1..24");
            leads.push_back(static_cast<int>(t));
        }
    }
    if (leads.empty()) throw ConfigError("--leads is empty");
    std::sort(leads.begin(), leads.end());
    leads.erase(std::unique(leads.begin(), leads.end()), leads.end());
    return leads;
}

/// "auto" splits off the last calendar year as test data (all years train
/// when the table covers a single year).
YearRange resolve_years(const std::string& text, const IrradianceTable& table, bool train_side) {
    if (text != "auto") return parse_year_range(text);
    const int first = year_of(table.first_hour());
    const int last = year_of(table.last_hour());
    if (first == last) return {first, last};
    return train_side ? YearRange{first, last - 1} : YearRange{last, last};
}

// ---------------------------------------------------------------------------

struct ModelArgs {
    std::string data;
    std::string train_years = "auto";
    int p = 0;
    int p_prime = 2;
    int neighbors = 16;
    int target = -1;
    std::string neighbor_ids;
    std::uint64_t seed = 0;
    int epochs = 100;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int patience = 10;
    double validation_fraction = 0.1;
    double clip_norm = 5.0;
    int hidden = 64;
    int decoder_steps = 1;
    int rounds = 200;
    double shrinkage = 0.1;
    int depth = 0;
    int min_leaf = 20;
    double delta_quantile = 0.9;
};

void add_model_options(CLI::App& app, ModelArgs& a) {
    app.add_option("--data", a.data, "Input table CSV")->required();
    app.add_option("--train-years", a.train_years, "Training years, e.g. 2000-2011 (auto: all but the last year)");
    app.add_option("--p", a.p, "Target lag p (0: 120 single, 72 multi)")->check(CLI::NonNegativeNumber);
    app.add_option("--p-prime", a.p_prime, "Neighbor lag p' (multi)")->check(CLI::NonNegativeNumber);
    app.add_option("--neighbors", a.neighbors, "Neighbor count N (multi)")->check(CLI::NonNegativeNumber);
    app.add_option("--target", a.target, "Target location id (-1: nearest the grid centre)");
    app.add_option("--neighbor-ids", a.neighbor_ids, "Comma-separated neighbor ids (empty: nearest N)");
    app.add_option("--seed", a.seed, "Seed for initialization and shuffling");
    app.add_option("--epochs", a.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
    app.add_option("--batch-size", a.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    app.add_option("--lr", a.learning_rate, "Adam learning rate");
    app.add_option("--beta1", a.beta1, "Adam beta1");
    app.add_option("--beta2", a.beta2, "Adam beta2");
    app.add_option("--epsilon", a.epsilon, "Adam epsilon");
    app.add_option("--patience", a.patience, "Early-stopping patience in epochs");
    app.add_option("--val-fraction", a.validation_fraction, "Validation fraction (last rows by time)");
    app.add_option("--clip-norm", a.clip_norm, "Global gradient-norm clip (0: off)");
    app.add_option("--hidden", a.hidden, "Recurrent hidden size H")->check(CLI::PositiveNumber);
    app.add_option("--decoder-steps", a.decoder_steps, "Decoder steps R")->check(CLI::PositiveNumber);
    app.add_option("--rounds", a.rounds, "GBRT boosting rounds")->check(CLI::NonNegativeNumber);
    app.add_option("--shrinkage", a.shrinkage, "GBRT shrinkage");
    app.add_option("--depth", a.depth, "GBRT max depth (0: 6 single, 8 multi)")->check(CLI::NonNegativeNumber);
    app.add_option("--min-leaf", a.min_leaf, "GBRT minimum rows per leaf")->check(CLI::PositiveNumber);
    app.add_option("--delta-quantile", a.delta_quantile, "GBRT Huber delta quantile of |residual|");
}

ModelFamily family_for(const ModelArgs& a, ModelKind kind, FeatureMode mode) {
    ModelFamily f;
    f.kind = kind;
    f.spec.mode = mode;
    f.spec.p = a.p > 0 ? a.p : (mode == FeatureMode::single ? 120 : 72);
    if (mode == FeatureMode::multi) {
        f.spec.p_prime = a.p_prime;
        f.spec.neighbors = a.neighbors;
        f.neighbors = parse_int_list(a.neighbor_ids, "--neighbor-ids");
        if (!f.neighbors.empty() && static_cast<int>(f.neighbors.size()) != a.neighbors) {
            throw ConfigError("--neighbor-ids lists " + std::to_string(f.neighbors.size()) + " ids but --neighbors is " +
                              std::to_string(a.neighbors));
        }
    }
    f.target = a.target;
    f.seed = a.seed;
    f.train.seed = a.seed;
    f.train.max_epochs = a.epochs;
    f.train.batch_size = a.batch_size;
    f.train.adam = {a.learning_rate, a.beta1, a.beta2, a.epsilon};
    f.train.patience = a.patience;
    f.train.validation_fraction = a.validation_fraction;
    f.train.clip_norm = a.clip_norm;
    f.train.validate();
    f.network.hidden_size = a.hidden;
    f.network.decoder_steps = a.decoder_steps;
    f.gbrt.rounds = a.rounds;
    f.gbrt.shrinkage = a.shrinkage;
    f.gbrt.max_depth = a.depth > 0 ? a.depth : GBRTConfig::default_depth(mode);
    f.gbrt.min_leaf = a.min_leaf;
    f.gbrt.delta_quantile = a.delta_quantile;
    f.gbrt.validate();
    return f;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
    if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<LeadTimeReport> read_report_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report '" + path + "'");
    try {
        return parse_plot_data(in);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::string plot_csv(std::span<const LeadTimeReport> reports) {
    std::ostringstream out;
    emit_plot_data(reports, out);
    return out.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string grid = "5x5";
    int hours = 8760;
    std::uint64_t seed = 0;
    std::string out;
    double cloud_speed = 1.0;
    double cloud_probability = 0.5;
    double lattice = 4.0;
    double direction_step = 10.0;
    std::optional<double> direction;
    std::string start = "2000-01-01";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SyntheticConfig config;
    std::tie(config.rows, config.cols) = parse_grid(a.grid);
    config.hours = a.hours;
    config.seed = a.seed;
    config.cloud_speed = a.cloud_speed;
    config.cloud_probability = a.cloud_probability;
    config.lattice_cells = a.lattice;
    config.direction_step_deg = a.direction_step;
    config.fixed_direction_deg = a.direction;
    const auto start = parse_iso_hour(a.start + "T00:00Z");
    if (!start) throw ConfigError("--start expects YYYY-MM-DD, got '" + a.start + "'");
    config.start = *start;

    const IrradianceTable table = generate_synthetic(config);
    emit_csv_file(table, a.out);
    out << "wrote " << table.size() << " records (" << config.rows << "x" << config.cols << " grid, " << config.hours
        << " hours) to " << a.out << '\n';
    return kOk;
}

struct TrainArgs {
    ModelArgs model;
    std::string kind = "lstm";
    std::string mode = "single";
    int lead = 1;
    std::string out;
    std::string dump_dataset;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const ModelKind kind = parse_model_kind(a.kind);
    const FeatureMode mode = parse_feature_mode(a.mode);
    const ModelFamily family = for_lead(family_for(a.model, kind, mode), a.lead);

    const IrradianceTable table = parse_csv_file(a.model.data);
    const IrradianceTable train_table = select_years(table, resolve_years(a.model.train_years, table, true));
    const TrainOutcome outcome = train_forecaster(family, train_table, a.lead);
    save_forecaster_file(outcome.forecaster, a.out);

    if (!a.dump_dataset.empty()) {
        const auto& setup = outcome.forecaster.setup;
        const Dataset scaled =
            scale_apply(setup.scaler, build_dataset(train_table, setup.spec, setup.target, setup.neighbors));
        std::ofstream dump(a.dump_dataset, std::ios::binary);
        if (!dump) throw DataError("cannot write '" + a.dump_dataset + "'");
        write_dataset_csv(scaled, dump);
    }

    const auto& s = outcome.summary;
    const auto& setup = outcome.forecaster.setup;
    out << display_name(kind) << setup.spec.mode_label() << " T=" << a.lead << " d=" << input_dim(setup.spec)
        << " target=" << setup.target << " rows=" << s.train_rows << " skipped=" << s.skipped_rows << '\n';
    if (kind == ModelKind::gbrt) {
        out << "rounds " << s.rounds.size() << ", depth " << family.gbrt.max_depth;
    } else {
        out << "epochs run " << s.history.epochs.size() << " (best " << s.history.best_epoch
            << (s.history.stopped_early ? ", stopped early" : "") << "), validation MAE "
            << fixed(s.history.best_validation_mae * setup.scaler.ghi_scale);
    }
    out << ", train MAE " << fixed(s.train_metrics.mae) << ", train RMSE " << fixed(s.train_metrics.rmse) << '\n';
    out << "model written to " << a.out << '\n';
    return kOk;
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string dataset;
    std::string test_years = "auto";
    std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Forecaster forecaster = load_forecaster_file(a.model);
    Metrics metrics;
    std::size_t rows = 0;
    if (!a.dataset.empty()) {
        std::ifstream in(a.dataset);
        if (!in) throw DataError("cannot open dataset '" + a.dataset + "'");
        const Dataset scaled = read_dataset_csv(in);
        if (scaled.rows() == 0) throw DataError("dataset '" + a.dataset + "' has no rows");
        metrics = metrics_of(unscale_ghi(forecaster.setup.scaler, scaled.y), forecaster.predict_ghi(scaled.X));
        rows = static_cast<std::size_t>(scaled.rows());
    } else {
        const IrradianceTable table = parse_csv_file(a.data);
        const IrradianceTable test = select_years(table, resolve_years(a.test_years, table, false));
        metrics = evaluate_forecaster(forecaster, test);
        const auto& setup = forecaster.setup;
        rows = static_cast<std::size_t>(build_dataset(test, setup.spec, setup.target, setup.neighbors).rows());
    }
    const LeadTimeReport report{display_name(forecaster.kind),
                                forecaster.setup.spec.mode_label(),
                                {LeadEntry{forecaster.setup.spec.lead, metrics, {}}}};
    out << report.label() << " T=" << forecaster.setup.spec.lead << " rows=" << rows << " MAE " << fixed(metrics.mae)
        << " RMSE " << fixed(metrics.rmse) << '\n';
    if (!a.out.empty()) write_text_file(a.out, plot_csv(std::span(&report, 1)));
    return kOk;
}

struct SweepArgs {
    ModelArgs model;
    std::string models = "ffnn,rnn,lstm,gbrt";
    std::string modes = "single,multi";
    std::string leads = "1-24";
    std::string test_years = "auto";
    int jobs = 1;
    std::string out;
    std::string table;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
    std::vector<ModelKind> kinds;
    for (const auto& k : split_list(a.models)) kinds.push_back(parse_model_kind(k));
    std::vector<FeatureMode> modes;
    for (const auto& m : split_list(a.modes)) modes.push_back(parse_feature_mode(m));
    if (kinds.empty() || modes.empty()) throw ConfigError("--models and --modes must be non-empty");
    const std::vector<int> leads = parse_leads(a.leads);

    std::vector<ModelFamily> families;
    for (const FeatureMode mode : modes) {
        for (const ModelKind kind : kinds) families.push_back(family_for(a.model, kind, mode));
    }

    const IrradianceTable table = parse_csv_file(a.model.data);
    const TableSplit split = split_by_year(table, resolve_years(a.model.train_years, table, true),
                                           resolve_years(a.test_years, table, false));

    std::vector<LeadTimeReport> reports;
    for (const auto& family : families) {
        reports.push_back(sweep_leads(family, split.train, split.test, leads, a.jobs));
        for (const auto& e : reports.back().entries) {
            if (!e.metrics) err << reports.back().label() << " T=" << e.lead << " failed: " << e.failure << '\n';
        }
    }
    write_text_file(a.out, plot_csv(reports));
    const std::string rendered = render_table(reports);
    if (!a.table.empty()) write_text_file(a.table, rendered);
    out << rendered;
    return kOk;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string single;
    std::string multi;
    std::string out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
    std::vector<std::pair<LeadTimeReport, LeadTimeReport>> pairs;
    std::vector<LeadTimeReport> all;
    if (!a.single.empty() || !a.multi.empty()) {
        if (a.single.empty() || a.multi.empty()) throw ConfigError("--single and --multi must be given together");
        const auto singles = read_report_file(a.single);
        const auto multis = read_report_file(a.multi);
        for (const auto& s : singles) {
            for (const auto& m : multis) {
                if (m.model == s.model) pairs.emplace_back(s, m);
            }
        }
        all.insert(all.end(), singles.begin(), singles.end());
        all.insert(all.end(), multis.begin(), multis.end());
    }
    for (const auto& path : a.inputs) {
        const auto reports = read_report_file(path);
        all.insert(all.end(), reports.begin(), reports.end());
    }
    if (all.empty()) throw ConfigError("report needs --in or --single/--multi inputs");
    if (a.single.empty()) {
        std::map<std::string, const LeadTimeReport*> single_of;
        for (const auto& r : all) {
            if (r.mode == "-1" && !single_of.count(r.model)) single_of[r.model] = &r;
        }
        for (const auto& r : all) {
            auto it = single_of.find(r.model);
            if (r.mode != "-1" && it != single_of.end()) pairs.emplace_back(*it->second, r);
        }
    }

    out << render_table(all);
    if (!pairs.empty()) out << "\nMAE improvement, single -> multi\n";
    for (const auto& [s, m] : pairs) {
        for (const auto& e : s.entries) {
            const LeadEntry* other = m.find(e.lead);
            if (!e.metrics || other == nullptr || !other->metrics) continue;
            out << s.label() << " -> " << m.label() << " T=" << e.lead << ": " << fixed(improvement(s, m, e.lead), 2)
                << "%\n";
        }
    }
    if (!a.out.empty()) write_text_file(a.out, plot_csv(all));
    return kOk;
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Appends `--key value...` for every config-file key not already given as a
/// flag, so flags win over the file. Keys are long flag names.
std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        }
    }
    if (path.empty() || has_flag(args, "--help") || has_flag(args, "-h")) return args;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    const auto items = CLI::ConfigINI().from_config(in);
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty()) {
            throw ConfigError("config file '" + path + "': sections are not supported (key '" + item.fullname() + "')");
        }
        const std::string flag = "--" + item.name;
        if (flag == "--config" || has_flag(args, flag)) continue;
        args.push_back(flag);
        args.insert(args.end(), item.inputs.begin(), item.inputs.end());
    }
    return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hourly GHI forecasting: synthetic data, model training, evaluation and reports", "ghicast"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    std::string config_path;
    const auto setup_config = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path,
                        "Flat `key = value` file; keys are long flag names without dashes, flags take precedence");
    };

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic advected-cloud grid table");
    setup_config(synth_cmd);
    synth_cmd->add_option("--grid", synth.grid, "Grid size RxC");
    synth_cmd->add_option("--hours", synth.hours, "Number of hours")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_option("--out", synth.out, "Output CSV path")->required();
    synth_cmd->add_option("--cloud-speed", synth.cloud_speed, "Cloud advection speed, grid cells per hour");
    synth_cmd->add_option("--cloud-probability", synth.cloud_probability, "Blob probability per lattice cell");
    synth_cmd->add_option("--lattice", synth.lattice, "Blob lattice pitch in grid cells");
    synth_cmd->add_option("--direction-step", synth.direction_step, "Hourly wind-direction random-walk std-dev, deg");
    synth_cmd->add_option("--direction", synth.direction, "Fixed wind direction in degrees (unset: random walk)");
    synth_cmd->add_option("--start", synth.start, "First day, YYYY-MM-DD");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train one model for one lead time");
    setup_config(train_cmd);
    add_model_options(*train_cmd, train.model);
    train_cmd->add_option("--model", train.kind, "ffnn, rnn, gru, lstm, bilstm or gbrt");
    train_cmd->add_option("--mode", train.mode, "single or multi");
    train_cmd->add_option("--lead", train.lead, "Lead time T in hours")->check(CLI::Range(1, 24));
    train_cmd->add_option("--out", train.out, "Model file to write")->required();
    train_cmd->add_option("--dump-dataset", train.dump_dataset, "Also write the scaled training dataset CSV");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score a saved model");
    setup_config(eval_cmd);
    eval_cmd->add_option("--model", eval.model, "Model file")->required();
    auto* eval_data = eval_cmd->add_option("--data", eval.data, "Table CSV to build test windows from");
    auto* eval_dataset = eval_cmd->add_option("--dataset", eval.dataset, "Pre-built scaled dataset CSV");
    eval_data->excludes(eval_dataset);
    eval_cmd->add_option("--test-years", eval.test_years, "Test years (auto: the last year)");
    eval_cmd->add_option("--out", eval.out, "Report CSV to write");

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Train and score each model/mode for every lead time");
    setup_config(sweep_cmd);
    add_model_options(*sweep_cmd, sweep.model);
    sweep_cmd->add_option("--models", sweep.models, "Comma-separated model kinds");
    sweep_cmd->add_option("--modes", sweep.modes, "Comma-separated feature modes");
    sweep_cmd->add_option("--leads", sweep.leads, "Lead times, e.g. 1-24 or 1,24");
    sweep_cmd->add_option("--test-years", sweep.test_years, "Test years (auto: the last year)");
    sweep_cmd->add_option("--jobs", sweep.jobs, "Concurrent lead-time jobs")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--out", sweep.out, "Report CSV to write")->required();
    sweep_cmd->add_option("--table", sweep.table, "Also write the rendered table here");

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "Merge reports, print improvements, emit plot data");
    setup_config(report_cmd);
    report_cmd->add_option("--in", report.inputs, "Report CSV (repeatable)");
    report_cmd->add_option("--single", report.single, "Report CSV of single-location models");
    report_cmd->add_option("--multi", report.multi, "Report CSV of multi-location models");
    report_cmd->add_option("--out", report.out, "Merged plot-data CSV to write");

    std::vector<std::string> expanded;
    try {
        expanded = expand_config(args);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const CLI::ParseError& e) {
        err << "error: config file: " << e.what() << '\n';
        return kUsage;
    }
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kOk : kUsage;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth, out);
        if (train_cmd->parsed()) return cmd_train(train, out);
        if (eval_cmd->parsed()) {
            if (eval.data.empty() && eval.dataset.empty()) throw ConfigError("eval needs --data or --dataset");
            return cmd_eval(eval, out);
        }
        if (sweep_cmd->parsed()) return cmd_sweep(sweep, out, err);
        if (report_cmd->parsed()) return cmd_report(report, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

}  // namespace ghicast::cli
