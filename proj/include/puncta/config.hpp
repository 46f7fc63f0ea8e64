#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "puncta/errors.hpp"
#include "puncta/io.hpp"
#include "puncta/synth.hpp"
#include "puncta/texture.hpp"
#include "puncta/ttgpr.hpp"

namespace puncta {

struct SegTrainConfig {
    int steps = 1500;
    int batch = 8;
    double lr = 2e-4;
    double weight_decay = 1e-4;
    double lambda_dice = 1.0;
    double lambda_ft = 1.0;
    double ft_alpha = 0.3;
    double ft_beta = 0.7;
    double ft_gamma = 0.75;
    double eps = 1e-6;
};

struct RFTrainConfig {
    int steps = 6000;
    int batch = 8;
    double lr = 2e-4;
    double weight_decay = 1e-4;
    double ema_decay = 0.999;
};

struct DataConfig {
    std::string backgrounds_dir; // empty: generate textures instead
    int train_pairs = 600;
    int test_pairs = 200;
    TextureParams texture;
};

struct EvalConfig {
    double threshold = 0.5;
    std::string roi_path;
};

struct RunConfig {
    std::uint64_t seed = 0;
    SynthConfig synth;
    DataConfig data;
    SegTrainConfig seg;
    RFTrainConfig rf;
    TTGPRConfig ttgpr;
    EvalConfig eval;
    std::set<std::string> explicit_keys; // keys present in the parsed file
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw validation_error("config line " + std::to_string(line) + ": bad number '" + v + "'");
    }
}

inline long long parse_int(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw validation_error("config line " + std::to_string(line) + ": bad integer '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const std::uint64_t d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw validation_error("config line " + std::to_string(line) + ": bad integer '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw validation_error("config line " + std::to_string(line) + ": bad boolean '" + v + "'");
}

// One row per known key keeps parse and serialize in lockstep.
template <typename OnInt, typename OnDouble, typename OnU64, typename OnBool, typename OnString>
void for_each_config_key(RunConfig& c, OnInt oi, OnDouble od, OnU64 ou, OnBool ob, OnString os) {
    ou("seed", c.seed);
    oi("synth.patch_size", c.synth.patch_size);
    oi("synth.clusters_lo", c.synth.clusters_lo);
    oi("synth.clusters_hi", c.synth.clusters_hi);
    oi("synth.puncta_lo", c.synth.puncta_lo);
    oi("synth.puncta_hi", c.synth.puncta_hi);
    od("synth.cluster_spread", c.synth.cluster_spread);
    od("synth.line_pattern_prob", c.synth.line_pattern_prob);
    od("synth.radius_lo", c.synth.radius_lo);
    od("synth.radius_hi", c.synth.radius_hi);
    od("synth.spread_lo", c.synth.spread_lo);
    od("synth.spread_hi", c.synth.spread_hi);
    od("synth.amplitude_lo", c.synth.amplitude_lo);
    od("synth.amplitude_hi", c.synth.amplitude_hi);
    od("synth.blur_sigma_lo", c.synth.blur_sigma_lo);
    od("synth.blur_sigma_hi", c.synth.blur_sigma_hi);
    od("synth.gain_lo", c.synth.gain_lo);
    od("synth.gain_hi", c.synth.gain_hi);
    od("synth.clamp_lo", c.synth.clamp_lo);
    od("synth.clamp_hi", c.synth.clamp_hi);
    oi("synth.local_window", c.synth.local_window);
    os("data.backgrounds_dir", c.data.backgrounds_dir);
    oi("data.train_pairs", c.data.train_pairs);
    oi("data.test_pairs", c.data.test_pairs);
    oi("data.texture_octaves", c.data.texture.octaves);
    od("data.texture_gain", c.data.texture.gain);
    od("data.texture_orientation_jitter", c.data.texture.orientation_jitter);
    od("data.texture_contrast", c.data.texture.contrast);
    oi("seg.steps", c.seg.steps);
    oi("seg.batch", c.seg.batch);
    od("seg.lr", c.seg.lr);
    od("seg.weight_decay", c.seg.weight_decay);
    od("seg.lambda_dice", c.seg.lambda_dice);
    od("seg.lambda_ft", c.seg.lambda_ft);
    od("seg.ft_alpha", c.seg.ft_alpha);
    od("seg.ft_beta", c.seg.ft_beta);
    od("seg.ft_gamma", c.seg.ft_gamma);
    od("seg.eps", c.seg.eps);
    oi("rf.steps", c.rf.steps);
    oi("rf.batch", c.rf.batch);
    od("rf.lr", c.rf.lr);
    od("rf.weight_decay", c.rf.weight_decay);
    od("rf.ema_decay", c.rf.ema_decay);
    oi("ttgpr.iterations", c.ttgpr.iterations);
    od("ttgpr.t_start", c.ttgpr.t_start);
    od("ttgpr.t_end", c.ttgpr.t_end);
    od("ttgpr.w_tversky", c.ttgpr.w_tversky);
    od("ttgpr.w_stab", c.ttgpr.w_stab);
    od("ttgpr.w_edge", c.ttgpr.w_edge);
    od("ttgpr.alpha_tversky", c.ttgpr.alpha_tversky);
    od("ttgpr.beta_tversky", c.ttgpr.beta_tversky);
    od("ttgpr.eta", c.ttgpr.eta);
    od("ttgpr.rho", c.ttgpr.rho);
    od("ttgpr.tau_seed", c.ttgpr.tau_seed);
    oi("ttgpr.max_seeds", c.ttgpr.max_seeds);
    od("ttgpr.eps", c.ttgpr.eps);
    oi("ttgpr.euler_steps", c.ttgpr.rf.euler_steps);
    ob("ttgpr.clip_output", c.ttgpr.rf.clip_output);
    od("eval.threshold", c.eval.threshold);
    os("eval.roi_path", c.eval.roi_path);
}

inline bool apply_config_key(RunConfig& c, const std::string& key, const std::string& value,
                             int line) {
    bool hit = false;
    for_each_config_key(
        c,
        [&](const char* k, int& slot) {
            if (key == k) {
                slot = static_cast<int>(parse_int(value, line));
                hit = true;
            }
        },
        [&](const char* k, double& slot) {
            if (key == k) {
                slot = parse_double(value, line);
                hit = true;
            }
        },
        [&](const char* k, std::uint64_t& slot) {
            if (key == k) {
                slot = parse_u64(value, line);
                hit = true;
            }
        },
        [&](const char* k, bool& slot) {
            if (key == k) {
                slot = parse_bool(value, line);
                hit = true;
            }
        },
        [&](const char* k, std::string& slot) {
            if (key == k) {
                slot = value;
                hit = true;
            }
        });
    return hit;
}

} // namespace detail

inline void validate(const RunConfig& c) {
    validate(c.synth);
    validate(c.data.texture);
    validate(c.ttgpr);
    if (c.data.train_pairs < 1 || c.data.test_pairs < 1)
        throw validation_error("config: pair counts must be >= 1");
    if (c.seg.steps < 0 || c.rf.steps < 0) throw validation_error("config: negative step count");
    if (c.seg.batch < 1 || c.rf.batch < 1) throw validation_error("config: batch must be >= 1");
    if (c.seg.lr < 0 || c.rf.lr < 0 || c.seg.weight_decay < 0 || c.rf.weight_decay < 0)
        throw validation_error("config: negative rate");
    if (!(c.seg.ft_gamma > 0)) throw validation_error("config: ft_gamma must be > 0");
    if (!(c.rf.ema_decay >= 0 && c.rf.ema_decay < 1))
        throw validation_error("config: ema_decay outside [0,1)");
    if (!(c.eval.threshold > 0 && c.eval.threshold < 1))
        throw validation_error("config: eval threshold outside (0,1)");
    if (!c.data.backgrounds_dir.empty() && !std::filesystem::is_directory(c.data.backgrounds_dir))
        throw validation_error("config: backgrounds_dir does not exist: " + c.data.backgrounds_dir);
    if (!c.eval.roi_path.empty() && !std::filesystem::exists(c.eval.roi_path))
        throw validation_error("config: roi_path does not exist: " + c.eval.roi_path);
}

// Line-based `key = value` with '#' comments and optional [section] headers;
// dotted keys work with or without a section. Unknown keys are errors.
inline RunConfig parse_config(std::istream& is) {
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw validation_error("config line " + std::to_string(lineno) +
                                       ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw validation_error("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw validation_error("config line " + std::to_string(lineno) + ": empty key");
        if (key.find('.') == std::string::npos && !section.empty()) key = section + "." + key;
        if (!detail::apply_config_key(cfg, key, value, lineno))
            throw validation_error("config line " + std::to_string(lineno) + ": unknown key '" +
                                   key + "'");
        cfg.explicit_keys.insert(key);
    }
    validate(cfg);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config: " + path);
    return parse_config(is);
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    std::string last_section;
    auto section_of = [](const std::string& key) {
        const auto dot = key.find('.');
        return dot == std::string::npos ? std::string() : key.substr(0, dot);
    };
    auto bare = [](const std::string& key) {
        const auto dot = key.find('.');
        return dot == std::string::npos ? key : key.substr(dot + 1);
    };
    auto emit = [&](const std::string& key, const std::string& value) {
        const std::string sec = section_of(key);
        if (sec != last_section) {
            os << "[" << sec << "]\n";
            last_section = sec;
        }
        os << bare(key) << " = " << value << "\n";
    };
    auto& c = const_cast<RunConfig&>(cfg); // for_each_config_key binds mutable refs; read-only here
    detail::for_each_config_key(
        c, [&](const char* k, int& v) { emit(k, std::to_string(v)); },
        [&](const char* k, double& v) { emit(k, g17(v)); },
        [&](const char* k, std::uint64_t& v) { emit(k, std::to_string(v)); },
        [&](const char* k, bool& v) { emit(k, v ? "true" : "false"); },
        [&](const char* k, std::string& v) {
            if (!v.empty()) emit(k, v);
        });
    return os.str();
}

} // namespace puncta
