#include "vtcc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace vtcc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& text) {
    double v = 0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return v;
}

int64_t to_int(const std::string& key, const std::string& text) {
    int64_t v = 0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected an integer, got '" + text + "'");
    }
    return v;
}

uint64_t to_u64(const std::string& key, const std::string& text) {
    uint64_t v = 0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected an unsigned integer, got '" + text + "'");
    }
    return v;
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) out.push_back(to_double(key, item));
    }
    return out;
}

std::vector<double> to_list(const std::string& key, const std::string& text, size_t expected) {
    auto out = to_list(key, text);
    if (out.size() != expected) {
        throw ConfigError(key + ": expected " + std::to_string(expected) + " comma-separated values, got '" + text +
                          "'");
    }
    return out;
}

template <typename Range>
std::string join(const Range& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ",";
        out += fmt(static_cast<double>(v));
    }
    return out;
}

struct Field {
    std::string key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string& key, const std::string& value)> set;
};

#define VTCC_INT_FIELD(name, member)                                                                     \
    Field {                                                                                              \
        name, [](const TrainConfig& c) { return std::to_string(c.member); },                             \
            [](TrainConfig& c, const std::string& k, const std::string& v) {                             \
                c.member = static_cast<decltype(c.member)>(to_int(k, v));                                \
            }                                                                                            \
    }
#define VTCC_REAL_FIELD(name, member)                                                                    \
    Field {                                                                                              \
        name, [](const TrainConfig& c) { return fmt(c.member); },                                        \
            [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); } \
    }
#define VTCC_PAIR_FIELD(name, member)                                                                    \
    Field {                                                                                              \
        name, [](const TrainConfig& c) { return fmt(c.member.first) + "," + fmt(c.member.second); },     \
            [](TrainConfig& c, const std::string& k, const std::string& v) {                             \
                const auto l = to_list(k, v, 2);                                                         \
                c.member = {l[0], l[1]};                                                                 \
            }                                                                                            \
    }
#define VTCC_ARRAY_FIELD(name, member, n)                                                                \
    Field {                                                                                              \
        name, [](const TrainConfig& c) { return join(c.member); },                                       \
            [](TrainConfig& c, const std::string& k, const std::string& v) {                             \
                const auto l = to_list(k, v, n);                                                         \
                for (size_t i = 0; i < n; ++i) c.member[i] = l[i];                                       \
            }                                                                                            \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        VTCC_INT_FIELD("model.image_side", model.image_side),
        Field{"model.stem", [](const TrainConfig& c) { return to_string(c.model.stem.kind); },
              [](TrainConfig& c, const std::string&, const std::string& v) {
                  c.model.stem.kind = parse_stem_kind(trim(v));
              }},
        VTCC_INT_FIELD("model.patch_size", model.stem.patch_size),
        VTCC_INT_FIELD("model.conv_blocks", model.stem.conv_blocks),
        Field{"model.stem_channels", [](const TrainConfig& c) { return join(c.model.stem.channels); },
              [](TrainConfig& c, const std::string& k, const std::string& v) {
                  c.model.stem.channels.clear();
                  for (double x : to_list(k, v)) c.model.stem.channels.push_back(static_cast<int>(x));
              }},
        VTCC_INT_FIELD("model.in_channels", model.stem.in_channels),
        VTCC_INT_FIELD("model.embed_dim", model.stem.embed_dim),
        VTCC_INT_FIELD("model.depth", model.encoder.depth),
        VTCC_INT_FIELD("model.heads", model.encoder.heads),
        VTCC_REAL_FIELD("model.mlp_ratio", model.encoder.mlp_ratio),
        Field{"model.pos_encoding", [](const TrainConfig& c) { return to_string(c.model.encoder.pos_encoding); },
              [](TrainConfig& c, const std::string&, const std::string& v) {
                  c.model.encoder.pos_encoding = parse_pos_encoding(trim(v));
              }},
        Field{"model.pool", [](const TrainConfig& c) { return to_string(c.model.encoder.pool); },
              [](TrainConfig& c, const std::string&, const std::string& v) {
                  c.model.encoder.pool = parse_pooling(trim(v));
              }},
        VTCC_INT_FIELD("model.hidden_dim", model.projector.hidden_dim),
        VTCC_INT_FIELD("model.instance_out_dim", model.projector.instance_out_dim),
        VTCC_INT_FIELD("model.clusters", model.projector.clusters),
        VTCC_REAL_FIELD("loss.tau_instance", loss.tau_instance),
        VTCC_REAL_FIELD("loss.tau_cluster", loss.tau_cluster),
        VTCC_REAL_FIELD("loss.entropy_weight", loss.entropy_weight),
        VTCC_REAL_FIELD("optim.lr", optim.lr),
        VTCC_REAL_FIELD("optim.beta1", optim.beta1),
        VTCC_REAL_FIELD("optim.beta2", optim.beta2),
        VTCC_REAL_FIELD("optim.eps", optim.eps),
        VTCC_PAIR_FIELD("augment.crop_scale", augment.crop_scale),
        VTCC_PAIR_FIELD("augment.aspect_range", augment.aspect_range),
        VTCC_REAL_FIELD("augment.flip_prob", augment.flip_prob),
        VTCC_ARRAY_FIELD("augment.jitter", augment.jitter, 4),
        VTCC_REAL_FIELD("augment.jitter_prob", augment.jitter_prob),
        VTCC_REAL_FIELD("augment.grayscale_prob", augment.grayscale_prob),
        VTCC_ARRAY_FIELD("augment.blur_prob", augment.blur_prob, 2),
        VTCC_ARRAY_FIELD("augment.solarize_prob", augment.solarize_prob, 2),
        Field{"augment.norm_mean", [](const TrainConfig& c) { return join(c.augment.norm_mean); },
              [](TrainConfig& c, const std::string& k, const std::string& v) {
                  c.augment.norm_mean.clear();
                  for (double x : to_list(k, v)) c.augment.norm_mean.push_back(static_cast<float>(x));
              }},
        Field{"augment.norm_std", [](const TrainConfig& c) { return join(c.augment.norm_std); },
              [](TrainConfig& c, const std::string& k, const std::string& v) {
                  c.augment.norm_std.clear();
                  for (double x : to_list(k, v)) c.augment.norm_std.push_back(static_cast<float>(x));
              }},
        Field{"data.kind", [](const TrainConfig& c) { return to_string(c.data.kind); },
              [](TrainConfig& c, const std::string&, const std::string& v) {
                  c.data.kind = parse_dataset_kind(trim(v));
              }},
        Field{"data.path", [](const TrainConfig& c) { return c.data.path; },
              [](TrainConfig& c, const std::string&, const std::string& v) { c.data.path = trim(v); }},
        VTCC_INT_FIELD("data.classes", data.synthetic.classes),
        VTCC_INT_FIELD("data.per_class", data.synthetic.per_class),
        VTCC_INT_FIELD("data.side", data.synthetic.side),
        Field{"data.seed", [](const TrainConfig& c) { return std::to_string(c.data.synthetic.seed); },
              [](TrainConfig& c, const std::string& k, const std::string& v) { c.data.synthetic.seed = to_u64(k, v); }},
        VTCC_REAL_FIELD("data.noise", data.synthetic.noise),
        Field{"train.projectors", [](const TrainConfig& c) { return to_string(c.projectors); },
              [](TrainConfig& c, const std::string&, const std::string& v) {
                  c.projectors = parse_projector_mode(trim(v));
              }},
        VTCC_INT_FIELD("train.batch_size", batch_size),
        VTCC_INT_FIELD("train.epochs", epochs),
        Field{"train.seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
              [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); }},
        VTCC_INT_FIELD("train.checkpoint_every", checkpoint_every),
        VTCC_INT_FIELD("train.eval_every", eval_every),
        VTCC_INT_FIELD("train.eval_batch_size", eval_batch_size),
        Field{"train.out", [](const TrainConfig& c) { return c.out_dir; },
              [](TrainConfig& c, const std::string&, const std::string& v) { c.out_dir = trim(v); }},
    };
    return table;
}

}  // namespace

std::string to_string(ProjectorMode mode) {
    switch (mode) {
        case ProjectorMode::kBoth: return "both";
        case ProjectorMode::kInstanceOnly: return "instance";
        case ProjectorMode::kClusterOnly: return "cluster";
    }
    return "both";
}

ProjectorMode parse_projector_mode(const std::string& text) {
    if (text == "both") return ProjectorMode::kBoth;
    if (text == "instance") return ProjectorMode::kInstanceOnly;
    if (text == "cluster") return ProjectorMode::kClusterOnly;
    throw ConfigError("unknown projector mode '" + text + "' (both, instance, cluster)");
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::large() {
    TrainConfig c;
    c.model = ModelConfig::vit_small(10);
    c.augment.output_side = c.model.image_side;
    c.batch_size = 128;
    c.epochs = 1000;
    c.checkpoint_every = 100;
    c.data.kind = DatasetKind::kImageDir;
    c.data.path = "data/train";
    c.out_dir = "runs/large";
    return c;
}

void TrainConfig::validate() const {
    model.validate();
    try {
        loss.validate();
    } catch (const ContractError& e) {
        throw ConfigError(std::string("loss: ") + e.what());
    }
    AugmentationSpec a = augment;
    a.output_side = model.image_side;
    a.validate();
    if (!a.norm_mean.empty() && a.norm_mean.size() != 3) throw ConfigError("augment.norm_mean needs 3 values");
    if (model.stem.in_channels != 3) throw ConfigError("model.in_channels must be 3 (inputs are expanded to RGB)");
    if (model.projector.clusters < 2) throw ConfigError("model.clusters must be at least 2");
    if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
    if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
    if (checkpoint_every < 0 || eval_every < 0) throw ConfigError("train.checkpoint_every and eval_every must be >= 0");
    if (eval_batch_size < 1) throw ConfigError("train.eval_batch_size must be positive");
    if (!(optim.lr > 0 && optim.beta1 > 0 && optim.beta1 < 1 && optim.beta2 > 0 && optim.beta2 < 1 && optim.eps > 0)) {
        throw ConfigError("optimizer settings out of range");
    }
    if (data.kind == DatasetKind::kSynthetic) {
        data.synthetic.validate();
    } else if (data.path.empty()) {
        throw ConfigError("data.path is required for data.kind=" + to_string(data.kind));
    }
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
    return out;
}

void apply_setting(TrainConfig& config, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(config, key, value);
            config.augment.output_side = config.model.image_side;
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
    std::stringstream ss(text);
    std::string line;
    int number = 0;
    while (std::getline(ss, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key=value");
        try {
            apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(number) + ": " + e.what());
        }
    }
    return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

}  // namespace vtcc
