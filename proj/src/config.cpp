#include "protohead/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace protohead {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long long to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for '" + key + "': '" + value + "'");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for '" + key + "': '" + value + "'");
    }
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(static_cast<int>(to_int(key, trim(item))));
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

void check_choice(const std::string& key, const std::string& value,
                  std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
        if (value == a) return;
    }
    std::string opts;
    for (const char* a : allowed) {
        if (!opts.empty()) opts += ", ";
        opts += a;
    }
    throw ConfigError("config: '" + key + "' must be one of {" + opts + "}, got '" + value + "'");
}

void validate(const RunConfig& c) {
    auto positive = [](const char* key, auto v) {
        if (!(v > 0)) throw ConfigError(std::string("config: '") + key + "' must be positive");
    };
    check_choice("dataset.kind", c.dataset.kind, {"synthetic", "archive"});
    if (c.dataset.kind == "archive" && c.dataset.archive_manifest.empty()) {
        throw ConfigError("config: dataset.kind=archive requires dataset.archive_manifest");
    }
    positive("dataset.num_tasks", c.dataset.num_tasks);
    if (c.dataset.classes_per_task < 2) {
        throw ConfigError("config: dataset.classes_per_task must be at least 2");
    }
    positive("dataset.train_per_class", c.dataset.train_per_class);
    positive("dataset.test_per_class", c.dataset.test_per_class);
    positive("dataset.image_channels", c.dataset.image_channels);
    positive("dataset.image_height", c.dataset.image_height);
    positive("dataset.image_width", c.dataset.image_width);
    if (c.dataset.noise < 0.0) throw ConfigError("config: dataset.noise must be non-negative");
    positive("model.feature_dim", c.model.feature_dim);
    for (int h : c.model.hidden) positive("model.hidden", h);
    positive("model.hypernet_hidden", c.model.hypernet_hidden);
    positive("model.proto_height", c.model.proto_height);
    positive("model.proto_width", c.model.proto_width);
    if (c.loss.stability < 0.0) throw ConfigError("config: loss.stability must be non-negative");
    if (c.loss.sp_weight < 0.0) throw ConfigError("config: loss.sp_weight must be non-negative");
    positive("loss.temperature", c.loss.temperature);
    check_choice("loss.proto_teacher", c.loss.proto_teacher, {"live", "frozen"});
    check_choice("optim.kind", c.optim.kind, {"adam", "sgd"});
    positive("optim.lr", c.optim.lr);
    positive("optim.proto_lr", c.optim.proto_lr);
    positive("optim.eps", c.optim.eps);
    if (!(c.optim.beta1 >= 0.0 && c.optim.beta1 < 1.0 && c.optim.beta2 >= 0.0 &&
          c.optim.beta2 < 1.0)) {
        throw ConfigError("config: optimizer betas must lie in [0, 1)");
    }
    positive("train.epochs", c.train.epochs);
    positive("train.batch_size", c.train.batch_size);
    check_choice("init.prototypes", c.proto_init, {"semantic", "random"});
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset.kind = v; }},
        {"dataset.archive_manifest", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset.archive_manifest = v; }},
        {"dataset.num_tasks", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.num_tasks = static_cast<int>(to_int(k, v)); }},
        {"dataset.classes_per_task", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.classes_per_task = static_cast<int>(to_int(k, v)); }},
        {"dataset.train_per_class", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.train_per_class = static_cast<int>(to_int(k, v)); }},
        {"dataset.test_per_class", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.test_per_class = static_cast<int>(to_int(k, v)); }},
        {"dataset.image_channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.image_channels = static_cast<int>(to_int(k, v)); }},
        {"dataset.image_height", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.image_height = static_cast<int>(to_int(k, v)); }},
        {"dataset.image_width", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.image_width = static_cast<int>(to_int(k, v)); }},
        {"dataset.noise", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.noise = to_double(k, v); }},
        {"dataset.shuffle_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.dataset.shuffle_seed = static_cast<std::uint64_t>(to_int(k, v)); }},
        {"model.feature_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.feature_dim = static_cast<int>(to_int(k, v)); }},
        {"model.hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.hidden = to_int_list(k, v); }},
        {"model.hypernet_hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.hypernet_hidden = static_cast<int>(to_int(k, v)); }},
        {"model.proto_height", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.proto_height = static_cast<int>(to_int(k, v)); }},
        {"model.proto_width", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.proto_width = static_cast<int>(to_int(k, v)); }},
        {"init.prototypes", [](RunConfig& c, const std::string&, const std::string& v) { c.proto_init = v; }},
        {"loss.stability", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.stability = to_double(k, v); }},
        {"loss.sp_weight", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.sp_weight = to_double(k, v); }},
        {"loss.temperature", [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.temperature = to_double(k, v); }},
        {"loss.proto_teacher", [](RunConfig& c, const std::string&, const std::string& v) { c.loss.proto_teacher = v; }},
        {"optim.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.optim.kind = v; }},
        {"optim.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.lr = to_double(k, v); }},
        {"optim.beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.beta1 = to_double(k, v); }},
        {"optim.beta2", [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.beta2 = to_double(k, v); }},
        {"optim.eps", [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.eps = to_double(k, v); }},
        {"optim.proto_lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.optim.proto_lr = to_double(k, v); }},
        {"train.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = static_cast<int>(to_int(k, v)); }},
        {"train.batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = static_cast<int>(to_int(k, v)); }},
        {"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
        {"run.output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
    };
    return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not key=value: '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw ConfigError("config: unknown key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
        }
        it->second(cfg, key, value);
    }
    validate(cfg);
    return cfg;
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "dataset.kind = " << c.dataset.kind << "\n";
    out << "dataset.archive_manifest = " << c.dataset.archive_manifest << "\n";
    out << "dataset.num_tasks = " << c.dataset.num_tasks << "\n";
    out << "dataset.classes_per_task = " << c.dataset.classes_per_task << "\n";
    out << "dataset.train_per_class = " << c.dataset.train_per_class << "\n";
    out << "dataset.test_per_class = " << c.dataset.test_per_class << "\n";
    out << "dataset.image_channels = " << c.dataset.image_channels << "\n";
    out << "dataset.image_height = " << c.dataset.image_height << "\n";
    out << "dataset.image_width = " << c.dataset.image_width << "\n";
    out << "dataset.noise = " << fmt_double(c.dataset.noise) << "\n";
    out << "dataset.shuffle_seed = " << c.dataset.shuffle_seed << "\n";
    out << "model.feature_dim = " << c.model.feature_dim << "\n";
    out << "model.hidden = " << fmt_int_list(c.model.hidden) << "\n";
    out << "model.hypernet_hidden = " << c.model.hypernet_hidden << "\n";
    out << "model.proto_height = " << c.model.proto_height << "\n";
    out << "model.proto_width = " << c.model.proto_width << "\n";
    out << "init.prototypes = " << c.proto_init << "\n";
    out << "loss.stability = " << fmt_double(c.loss.stability) << "\n";
    out << "loss.sp_weight = " << fmt_double(c.loss.sp_weight) << "\n";
    out << "loss.temperature = " << fmt_double(c.loss.temperature) << "\n";
    out << "loss.proto_teacher = " << c.loss.proto_teacher << "\n";
    out << "optim.kind = " << c.optim.kind << "\n";
    out << "optim.lr = " << fmt_double(c.optim.lr) << "\n";
    out << "optim.beta1 = " << fmt_double(c.optim.beta1) << "\n";
    out << "optim.beta2 = " << fmt_double(c.optim.beta2) << "\n";
    out << "optim.eps = " << fmt_double(c.optim.eps) << "\n";
    out << "optim.proto_lr = " << fmt_double(c.optim.proto_lr) << "\n";
    out << "train.epochs = " << c.train.epochs << "\n";
    out << "train.batch_size = " << c.train.batch_size << "\n";
    out << "run.seed = " << c.seed << "\n";
    out << "run.output_dir = " << c.output_dir << "\n";
    return out.str();
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::optional<SweepAxis> parse_axis(const std::string& name) {
    if (name == "proto_shape") return SweepAxis::ProtoShape;
    if (name == "stability") return SweepAxis::Stability;
    if (name == "lsp_weight") return SweepAxis::SpWeight;
    if (name == "init") return SweepAxis::Init;
    return std::nullopt;
}

const char* axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::ProtoShape: return "proto_shape";
        case SweepAxis::Stability: return "stability";
        case SweepAxis::SpWeight: return "lsp_weight";
        case SweepAxis::Init: return "init";
    }
    return "?";
}

RunConfig apply_axis(const RunConfig& base, SweepAxis axis, const std::string& value) {
    RunConfig cfg = base;
    switch (axis) {
        case SweepAxis::ProtoShape: {
            const int side = static_cast<int>(to_int("proto_shape", value));
            if (side < 1) throw ConfigError("config: proto_shape must be positive");
            cfg.model.proto_height = side;
            cfg.model.proto_width = side;
            break;
        }
        case SweepAxis::Stability:
            cfg.loss.stability = to_double("stability", value);
            break;
        case SweepAxis::SpWeight:
            cfg.loss.sp_weight = to_double("lsp_weight", value);
            break;
        case SweepAxis::Init:
            cfg.proto_init = value;
            break;
    }
    validate(cfg);
    return cfg;
}

}  // namespace protohead
