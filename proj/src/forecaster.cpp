#include "ghicast/forecaster.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ghicast/error.hpp"
#include "ghicast/textio.hpp"

namespace ghicast {

namespace {

constexpr std::string_view kNeuralMagic = "GHICAST-NN";
constexpr std::string_view kTreeMagic = "GHICAST-GBRT";

using Header = std::map<std::string, std::string>;

void write_setup(std::ostream& out, ModelKind kind, const ForecastSetup& setup) {
    out << "kind " << to_string(kind) << '\n';
    out << "feature_mode " << to_string(setup.spec.mode) << '\n';
    out << "p " << setup.spec.p << '\n';
    out << "p_prime " << setup.spec.p_prime << '\n';
    out << "neighbors " << setup.spec.neighbors << '\n';
    out << "lead " << setup.spec.lead << '\n';
    out << "target " << setup.target << '\n';
    out << "neighbor_ids";
    for (int id : setup.neighbors) out << ' ' << id;
    out << '\n';
    out << "ghi_scale " << text::format_double(setup.scaler.ghi_scale) << '\n';
    out << "speed_scale " << text::format_double(setup.scaler.speed_scale) << '\n';
}

const std::string& field(const Header& h, const std::string& key) {
    auto it = h.find(key);
    if (it == h.end()) throw DataError("model file missing '" + key + "'");
    return it->second;
}

long long int_field(const Header& h, const std::string& key) {
    const auto v = text::parse_int(field(h, key));
    if (!v) throw DataError("model file field '" + key + "' is not an integer");
    return *v;
}

double double_field(const Header& h, const std::string& key) {
    const auto v = text::parse_double(field(h, key));
    if (!v) throw DataError("model file field '" + key + "' is not a number");
    return *v;
}

ForecastSetup read_setup(const Header& h) {
    ForecastSetup s;
    s.spec.mode = parse_feature_mode(field(h, "feature_mode"));
    s.spec.p = static_cast<int>(int_field(h, "p"));
    s.spec.p_prime = static_cast<int>(int_field(h, "p_prime"));
    s.spec.neighbors = static_cast<int>(int_field(h, "neighbors"));
    s.spec.lead = static_cast<int>(int_field(h, "lead"));
    s.spec.validate();
    s.target = static_cast<int>(int_field(h, "target"));
    const std::string& ids = field(h, "neighbor_ids");
    for (auto token : text::split(ids, ' ')) {
        if (text::trim(token).empty()) continue;
        const auto v = text::parse_int(token);
        if (!v) throw DataError("bad neighbor id in model file");
        s.neighbors.push_back(static_cast<int>(*v));
    }
    if (static_cast<int>(s.neighbors.size()) != s.spec.neighbors) {
        throw DataError("model file neighbor list does not match N");
    }
    s.scaler.ghi_scale = double_field(h, "ghi_scale");
    s.scaler.speed_scale = double_field(h, "speed_scale");
    return s;
}

/// Reads `key value` lines until `terminator`; the first line must be `magic version`.
Header read_header(std::istream& in, std::string_view magic, std::string_view terminator) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty model file");
    const auto parts = text::split(line, ' ');
    if (parts.size() != 2 || parts[0] != magic) {
        throw DataError("not a " + std::string(magic) + " model file");
    }
    if (text::parse_int(parts[1]) != kModelFormatVersion) {
        throw DataError("unsupported model format version '" + std::string(parts[1]) + "'");
    }
    Header h;
    while (std::getline(in, line)) {
        if (line == terminator) return h;
        const auto space = line.find(' ');
        const std::string key = line.substr(0, space);
        h[key] = space == std::string::npos ? std::string{} : line.substr(space + 1);
    }
    throw DataError("model file header not terminated by '" + std::string(terminator) + "'");
}

void write_le_doubles(std::ostream& out, const Eigen::VectorXd& values) {
    std::vector<char> bytes(static_cast<std::size_t>(values.size()) * 8);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) {
            bytes[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
        }
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Eigen::VectorXd read_le_doubles(std::istream& in, Eigen::Index count) {
    std::vector<unsigned char> bytes(static_cast<std::size_t>(count) * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw DataError("model file truncated: expected " + std::to_string(count) + " parameters");
    }
    Eigen::VectorXd values(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

void save_neural(const Forecaster& f, std::ostream& out) {
    out << kNeuralMagic << ' ' << kModelFormatVersion << '\n';
    write_setup(out, f.kind, f.setup);
    Eigen::VectorXd params;
    if (const auto* m = std::get_if<FFNNModel>(&f.model)) {
        out << "input_dim " << m->input_dim() << '\n';
        out << "activations " << to_string(m->hidden1.activation) << ' ' << to_string(m->hidden2.activation) << ' '
            << to_string(m->output.activation) << '\n';
        params = flatten(*m);
    } else {
        const auto& e = std::get<EncoderDecoderModel>(f.model);
        out << "input_dim " << e.input_dim() << '\n';
        out << "cell " << to_string(e.kind()) << '\n';
        out << "hidden " << e.hidden_size() << '\n';
        out << "decoder_steps " << e.decoder_steps << '\n';
        out << "bidirectional " << (e.bidirectional ? 1 : 0) << '\n';
        out << "activations " << to_string(e.representation.activation) << ' ' << to_string(e.output.activation)
            << '\n';
        params = flatten(e);
    }
    out << "param_count " << params.size() << '\n';
    out << "end_header\n";
    write_le_doubles(out, params);
}

std::vector<Activation> read_activations(const Header& h, std::size_t expected) {
    std::vector<Activation> acts;
    for (auto token : text::split(field(h, "activations"), ' ')) {
        acts.push_back(parse_activation(token));
    }
    if (acts.size() != expected) throw DataError("model file has wrong activation count");
    return acts;
}

Forecaster load_neural(std::istream& in) {
    const Header h = read_header(in, kNeuralMagic, "end_header");
    Forecaster f;
    f.kind = parse_model_kind(field(h, "kind"));
    f.setup = read_setup(h);
    const auto d = static_cast<int>(int_field(h, "input_dim"));
    if (d != input_dim(f.setup.spec)) throw DataError("model input_dim disagrees with its feature layout");
    const auto count = static_cast<Eigen::Index>(int_field(h, "param_count"));
    const Eigen::VectorXd params = read_le_doubles(in, count);
    if (f.kind == ModelKind::ffnn) {
        FFNNModel m = make_ffnn(d, 0);
        const auto acts = read_activations(h, 3);
        m.hidden1.activation = acts[0];
        m.hidden2.activation = acts[1];
        m.output.activation = acts[2];
        if (parameter_count(m) != count) throw DataError("model parameter count does not match its topology");
        assign_parameters(m, params);
        f.model = std::move(m);
    } else {
        EncoderDecoderOptions opts;
        opts.cell = parse_cell_kind(field(h, "cell"));
        opts.hidden_size = static_cast<int>(int_field(h, "hidden"));
        opts.decoder_steps = static_cast<int>(int_field(h, "decoder_steps"));
        opts.bidirectional = int_field(h, "bidirectional") != 0;
        EncoderDecoderModel m = make_encoder_decoder(d, opts, 0);
        const auto acts = read_activations(h, 2);
        m.representation.activation = acts[0];
        m.output.activation = acts[1];
        if (parameter_count(m) != count) throw DataError("model parameter count does not match its topology");
        assign_parameters(m, params);
        f.model = std::move(m);
    }
    return f;
}

void save_tree(const RegressionTree& tree, std::ostream& out) {
    out << "tree " << tree.nodes.size() << '\n';
    // Nodes are stored in pre-order, so a linear dump is the pre-order walk.
    for (const auto& node : tree.nodes) {
        if (node.is_leaf()) {
            out << "leaf " << text::format_double(node.value) << '\n';
        } else {
            out << "split " << node.feature << ' ' << text::format_double(node.threshold) << '\n';
        }
    }
}

void save_gbrt(const Forecaster& f, std::ostream& out) {
    const auto& e = std::get<TreeEnsemble>(f.model);
    out << kTreeMagic << ' ' << kModelFormatVersion << '\n';
    write_setup(out, f.kind, f.setup);
    out << "input_dim " << e.input_dim << '\n';
    out << "f0 " << text::format_double(e.initial) << '\n';
    out << "shrinkage " << text::format_double(e.shrinkage) << '\n';
    out << "delta_rule quantile " << text::format_double(e.delta_quantile) << '\n';
    out << "max_depth " << e.max_depth << '\n';
    out << "min_leaf " << e.min_leaf << '\n';
    out << "stages " << e.stages.size() << '\n';
    out << "end_header\n";
    for (const auto& tree : e.stages) {
        save_tree(tree, out);
    }
    out << "end\n";
}

int read_subtree(const std::vector<std::string>& lines, std::size_t& cursor, RegressionTree& tree, int input_dim) {
    if (cursor >= lines.size()) throw DataError("tree truncated");
    const auto parts = text::split(lines[cursor++], ' ');
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    if (parts.size() == 2 && parts[0] == "leaf") {
        const auto v = text::parse_double(parts[1]);
        if (!v) throw DataError("bad leaf value");
        tree.nodes[static_cast<std::size_t>(index)].value = *v;
        return index;
    }
    if (parts.size() != 3 || parts[0] != "split") throw DataError("bad tree node line");
    const auto feat = text::parse_int(parts[1]);
    const auto thr = text::parse_double(parts[2]);
    if (!feat || !thr || *feat < 0 || *feat >= input_dim) throw DataError("bad split node");
    tree.nodes[static_cast<std::size_t>(index)].feature = static_cast<int>(*feat);
    tree.nodes[static_cast<std::size_t>(index)].threshold = *thr;
    const int left = read_subtree(lines, cursor, tree, input_dim);
    const int right = read_subtree(lines, cursor, tree, input_dim);
    tree.nodes[static_cast<std::size_t>(index)].left = left;
    tree.nodes[static_cast<std::size_t>(index)].right = right;
    return index;
}

Forecaster load_gbrt(std::istream& in) {
    const Header h = read_header(in, kTreeMagic, "end_header");
    Forecaster f;
    f.kind = parse_model_kind(field(h, "kind"));
    if (f.kind != ModelKind::gbrt) throw DataError("tree model file with non-gbrt kind");
    f.setup = read_setup(h);
    TreeEnsemble e;
    e.input_dim = static_cast<int>(int_field(h, "input_dim"));
    if (e.input_dim != input_dim(f.setup.spec)) throw DataError("model input_dim disagrees with its feature layout");
    e.initial = double_field(h, "f0");
    e.shrinkage = double_field(h, "shrinkage");
    const auto rule = text::split(field(h, "delta_rule"), ' ');
    if (rule.size() != 2 || rule[0] != "quantile") throw DataError("unknown delta rule");
    e.delta_quantile = text::parse_double(rule[1]).value_or(0.9);
    e.max_depth = static_cast<int>(int_field(h, "max_depth"));
    e.min_leaf = static_cast<int>(int_field(h, "min_leaf"));
    const auto stages = int_field(h, "stages");
    std::string line;
    for (long long s = 0; s < stages; ++s) {
        if (!std::getline(in, line)) throw DataError("ensemble truncated");
        const auto parts = text::split(line, ' ');
        const auto count = parts.size() == 2 && parts[0] == "tree" ? text::parse_int(parts[1]) : std::nullopt;
        if (!count || *count < 1) throw DataError("bad tree header");
        std::vector<std::string> lines(static_cast<std::size_t>(*count));
        for (auto& l : lines) {
            if (!std::getline(in, l)) throw DataError("tree truncated");
        }
        RegressionTree tree;
        std::size_t cursor = 0;
        read_subtree(lines, cursor, tree, e.input_dim);
        if (cursor != lines.size()) throw DataError("tree node count mismatch");
        e.stages.push_back(std::move(tree));
    }
    f.model = std::move(e);
    return f;
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::ffnn: return "ffnn";
        case ModelKind::rnn: return "rnn";
        case ModelKind::gru: return "gru";
        case ModelKind::lstm: return "lstm";
        case ModelKind::bilstm: return "bilstm";
        case ModelKind::gbrt: return "gbrt";
    }
    return "?";
}

std::string display_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::ffnn: return "FFNN";
        case ModelKind::rnn: return "RNN";
        case ModelKind::gru: return "GRU";
        case ModelKind::lstm: return "LSTM";
        case ModelKind::bilstm: return "BiLSTM";
        case ModelKind::gbrt: return "GBRT";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view text) {
    for (auto k : {ModelKind::ffnn, ModelKind::rnn, ModelKind::gru, ModelKind::lstm, ModelKind::bilstm, ModelKind::gbrt}) {
        if (text == to_string(k)) return k;
    }
    throw ConfigError("unknown model '" + std::string(text) + "' (expected ffnn, rnn, gru, lstm, bilstm, gbrt)");
}

bool is_recurrent(ModelKind kind) {
    return kind == ModelKind::rnn || kind == ModelKind::gru || kind == ModelKind::lstm || kind == ModelKind::bilstm;
}

CellKind cell_kind_of(ModelKind kind) {
    switch (kind) {
        case ModelKind::rnn: return CellKind::rnn;
        case ModelKind::gru: return CellKind::gru;
        case ModelKind::lstm:
        case ModelKind::bilstm: return CellKind::lstm;
        default: throw ConfigError(to_string(kind) + " is not a recurrent model");
    }
}

int Forecaster::input_dim() const {
    return std::visit(
        [](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, TreeEnsemble>) {
                return m.input_dim;
            } else {
                return m.input_dim();
            }
        },
        model);
}

Eigen::VectorXd Forecaster::predict_scaled(const Eigen::MatrixXd& X) const {
    if (X.cols() != input_dim()) {
        throw DataError("feature matrix has " + std::to_string(X.cols()) + " columns; model expects d = " +
                        std::to_string(input_dim()));
    }
    return std::visit([&](const auto& m) -> Eigen::VectorXd { return predict(m, X).cwiseMax(0.0); }, model);
}

Eigen::VectorXd Forecaster::predict_ghi(const Eigen::MatrixXd& X) const {
    return unscale_ghi(setup.scaler, predict_scaled(X));
}

void save_forecaster(const Forecaster& forecaster, std::ostream& out) {
    if (std::holds_alternative<TreeEnsemble>(forecaster.model)) {
        save_gbrt(forecaster, out);
    } else {
        save_neural(forecaster, out);
    }
}

Forecaster load_forecaster(std::istream& in) {
    const auto start = in.tellg();
    std::string first;
    std::getline(in, first);
    in.clear();
    in.seekg(start);
    if (first.rfind(std::string(kTreeMagic) + " ", 0) == 0) {
        return load_gbrt(in);
    }
    if (first.rfind(std::string(kNeuralMagic) + " ", 0) == 0) {
        return load_neural(in);
    }
    throw DataError("unrecognised model file");
}

void save_forecaster_file(const Forecaster& forecaster, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    save_forecaster(forecaster, out);
    if (!out) throw DataError("write failed for '" + path + "'");
}

Forecaster load_forecaster_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    return load_forecaster(in);
}

}  // namespace ghicast
