#include "pcq/config.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "pcq/error.hpp"

namespace pcq {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "config key '" + key + "': bad number '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError,
                    "config key '" + key + "': bad integer '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw Error(ErrorCode::ConfigError, "config key '" + key + "': bad boolean '" + value + "'");
}

void apply_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "scales") {
        std::istringstream parts(value);
        std::string item;
        std::size_t i = 0;
        while (std::getline(parts, item, ',')) {
            if (i >= 3) break;
            cfg.scales[i++] = parse_double(key, trim(item));
        }
        if (i != 3) {
            throw Error(ErrorCode::ConfigError, "config key 'scales' needs 3 comma-separated values");
        }
    } else if (key == "neighbor_count") {
        cfg.neighbor_count = parse_u64(key, value);
        if (cfg.neighbor_count != 30) {
            throw Error(ErrorCode::ConfigError,
                        "neighbor_count is fixed at 30 by the 306-dim difference layout");
        }
    } else if (key == "curvature_k") {
        cfg.curvature_k = parse_u64(key, value);
        if (cfg.curvature_k < 2) {
            throw Error(ErrorCode::ConfigError, "curvature_k must be at least 2");
        }
    } else if (key == "reference_voxel") {
        cfg.reference_voxel = parse_double(key, value);
        if (!(cfg.reference_voxel > 0.0)) {
            throw Error(ErrorCode::ConfigError, "reference_voxel must be positive");
        }
    } else if (key == "reference_max") {
        cfg.reference_max = parse_u64(key, value);
        if (cfg.reference_max == 0) {
            throw Error(ErrorCode::ConfigError, "reference_max must be positive");
        }
    } else if (key == "enable_curvature") {
        cfg.enable_curvature = parse_bool(key, value);
    } else if (key == "enable_luma") {
        cfg.enable_luma = parse_bool(key, value);
    } else if (key == "enable_chroma") {
        cfg.enable_chroma = parse_bool(key, value);
    } else if (key == "epochs") {
        cfg.train.epochs = parse_u64(key, value);
        if (cfg.train.epochs < 1) {
            throw Error(ErrorCode::ConfigError, "epochs must be at least 1");
        }
    } else if (key == "batch_size") {
        cfg.train.batch_size = parse_u64(key, value);
        if (cfg.train.batch_size < 2) {
            throw Error(ErrorCode::ConfigError, "batch_size must be at least 2");
        }
    } else if (key == "weight_decay") {
        cfg.train.weight_decay = parse_double(key, value);
    } else if (key == "lr0") {
        cfg.train.lr0 = parse_double(key, value);
    } else if (key == "lr_min") {
        cfg.train.lr_min = parse_double(key, value);
    } else if (key == "lambda1") {
        cfg.train.lambda1 = parse_double(key, value);
    } else if (key == "lambda2") {
        cfg.train.lambda2 = parse_double(key, value);
    } else if (key == "margin") {
        cfg.train.margin = parse_double(key, value);
    } else if (key == "cache_dir") {
        cfg.cache_dir = value;
    } else if (key == "seed") {
        cfg.seed = parse_u64(key, value);
    } else if (key == "mos_lo") {
        cfg.mos_lo = parse_double(key, value);
    } else if (key == "mos_hi") {
        cfg.mos_hi = parse_double(key, value);
    } else {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
}

}  // namespace

PipelineConfig parse_config(std::istream& in) {
    PipelineConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ConfigError,
                        "config line " + std::to_string(line_no) + " has no '='");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw Error(ErrorCode::ConfigError,
                        "config line " + std::to_string(line_no) + " has an empty key");
        }
        apply_key(cfg, key, value);
    }
    if (!(cfg.mos_hi > cfg.mos_lo)) {
        throw Error(ErrorCode::ConfigError, "mos range needs mos_hi > mos_lo");
    }
    cfg.train.seed = cfg.seed;
    return cfg;
}

PipelineConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
    return parse_config(in);
}

void echo_config(const PipelineConfig& cfg, std::ostream& out) {
    out << "# scales=" << cfg.scales[0] << "," << cfg.scales[1] << "," << cfg.scales[2] << "\n";
    out << "# neighbor_count=" << cfg.neighbor_count << "\n";
    out << "# curvature_k=" << cfg.curvature_k << "\n";
    out << "# reference_voxel=" << cfg.reference_voxel << "\n";
    out << "# reference_max=" << cfg.reference_max << "\n";
    out << "# enable_curvature=" << (cfg.enable_curvature ? "true" : "false") << "\n";
    out << "# enable_luma=" << (cfg.enable_luma ? "true" : "false") << "\n";
    out << "# enable_chroma=" << (cfg.enable_chroma ? "true" : "false") << "\n";
    out << "# epochs=" << cfg.train.epochs << "\n";
    out << "# batch_size=" << cfg.train.batch_size << "\n";
    out << "# weight_decay=" << cfg.train.weight_decay << "\n";
    out << "# lr0=" << cfg.train.lr0 << "\n";
    out << "# lr_min=" << cfg.train.lr_min << "\n";
    out << "# lambda1=" << cfg.train.lambda1 << "\n";
    out << "# lambda2=" << cfg.train.lambda2 << "\n";
    out << "# margin=" << cfg.train.margin << "\n";
    out << "# cache_dir=" << cfg.cache_dir << "\n";
    out << "# seed=" << cfg.seed << "\n";
    out << "# mos_lo=" << cfg.mos_lo << "\n";
    out << "# mos_hi=" << cfg.mos_hi << "\n";
}

}  // namespace pcq
