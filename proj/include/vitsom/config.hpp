#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "vitsom/errors.hpp"
#include "vitsom/som.hpp"
#include "vitsom/vit.hpp"

namespace vitsom::config {

// Full run configuration. Backbone fields set to 0 mean "use the task
// preset" (clustering 16/64/4/2 h2, classification 192/768/12 h3).
struct TrainConfig {
    vit::Task task = vit::Task::kClustering;
    std::string dataset = "mnist";  // mnist | fashion_mnist | usps | cifar10 | synth
    std::string data_root;
    std::size_t subset = 0;  // 0 = full training split

    std::size_t som_height = 24, som_width = 24;
    som::Metric metric = som::Metric::kCosine;
    double t_min = 0.001;

    std::size_t total_steps = 1000;
    std::size_t batch_size = 64;
    double lr_init = 0.01, lr_min = 1e-6;
    double beta1 = 0.9, beta2 = 0.999;
    double weight_decay = 0.05;
    double gamma_final = -1.0;  // <0 = task default (0.005 clustering, 0.01 classification)
    double warmup_fraction = 0.1;
    std::uint64_t seed = 0;
    std::size_t eval_interval = 0;  // 0 = only at the end
    bool augment = true;

    // Optional backbone overrides (0 = preset).
    std::size_t patch_size = 4;
    std::size_t embed_dim = 0, mlp_dim = 0, encoder_depth = 0, decoder_depth = 0, num_heads = 0;

    double resolved_gamma_final() const {
        if (gamma_final >= 0.0) return gamma_final;
        return task == vit::Task::kClustering ? 0.005 : 0.01;
    }

    std::size_t warmup_steps() const {
        return static_cast<std::size_t>(warmup_fraction * static_cast<double>(total_steps));
    }

    void validate() const {
        if (total_steps == 0) throw ConfigError("train.total_steps must be >= 1");
        if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
        if (som_height == 0 || som_width == 0) throw ConfigError("som map must be nonempty");
        if (lr_init <= 0.0) throw ConfigError("train.lr_init must be > 0");
        if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
            throw ConfigError("train.warmup_fraction must be in [0,1]");
        if (t_min <= 0.0) throw ConfigError("som.t_min must be > 0");
    }
};

namespace detail_cfg {

template <typename T>
T parse_number(const std::string& key, const std::string& value, std::size_t line) {
    std::istringstream is(value);
    T out{};
    is >> out;
    if (is.fail() || !is.eof())
        throw ConfigError("line " + std::to_string(line) + ": invalid value '" + value +
                          "' for key '" + key + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value, std::size_t line) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("line " + std::to_string(line) + ": invalid boolean '" + value +
                      "' for key '" + key + "'");
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail_cfg

// Plain key=value format with dotted keys; '#' starts a comment.
inline TrainConfig parse_config_text(std::istream& in) {
    TrainConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail_cfg::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" +
                              line + "'");
        const std::string key = detail_cfg::trim(line.substr(0, eq));
        const std::string value = detail_cfg::trim(line.substr(eq + 1));
        using detail_cfg::parse_bool;
        using detail_cfg::parse_number;
        if (key == "task") c.task = vit::task_from_name(value);
        else if (key == "dataset") c.dataset = value;
        else if (key == "data.root") c.data_root = value;
        else if (key == "data.subset") c.subset = parse_number<std::size_t>(key, value, lineno);
        else if (key == "som.height") c.som_height = parse_number<std::size_t>(key, value, lineno);
        else if (key == "som.width") c.som_width = parse_number<std::size_t>(key, value, lineno);
        else if (key == "som.metric") c.metric = som::metric_from_name(value);
        else if (key == "som.t_min") c.t_min = parse_number<double>(key, value, lineno);
        else if (key == "train.total_steps") c.total_steps = parse_number<std::size_t>(key, value, lineno);
        else if (key == "train.batch_size") c.batch_size = parse_number<std::size_t>(key, value, lineno);
        else if (key == "train.lr_init") c.lr_init = parse_number<double>(key, value, lineno);
        else if (key == "train.lr_min") c.lr_min = parse_number<double>(key, value, lineno);
        else if (key == "train.beta1") c.beta1 = parse_number<double>(key, value, lineno);
        else if (key == "train.beta2") c.beta2 = parse_number<double>(key, value, lineno);
        else if (key == "train.weight_decay") c.weight_decay = parse_number<double>(key, value, lineno);
        else if (key == "train.gamma_final") c.gamma_final = parse_number<double>(key, value, lineno);
        else if (key == "train.warmup_fraction") c.warmup_fraction = parse_number<double>(key, value, lineno);
        else if (key == "train.seed") c.seed = parse_number<std::uint64_t>(key, value, lineno);
        else if (key == "train.eval_interval") c.eval_interval = parse_number<std::size_t>(key, value, lineno);
        else if (key == "train.augment") c.augment = parse_bool(key, value, lineno);
        else if (key == "vit.patch_size") c.patch_size = parse_number<std::size_t>(key, value, lineno);
        else if (key == "vit.embed_dim") c.embed_dim = parse_number<std::size_t>(key, value, lineno);
        else if (key == "vit.mlp_dim") c.mlp_dim = parse_number<std::size_t>(key, value, lineno);
        else if (key == "vit.encoder_depth") c.encoder_depth = parse_number<std::size_t>(key, value, lineno);
        else if (key == "vit.decoder_depth") c.decoder_depth = parse_number<std::size_t>(key, value, lineno);
        else if (key == "vit.num_heads") c.num_heads = parse_number<std::size_t>(key, value, lineno);
        else
            throw ConfigError("line " + std::to_string(lineno) + ": unknown config key '" + key +
                              "'");
    }
    c.validate();
    return c;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config_text(in);
}

}  // namespace vitsom::config
