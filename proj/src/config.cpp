#include "railseg/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "railseg/common.hpp"

namespace railseg {

const char* ablation_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::full: return "full";
        case AblationVariant::cube_partition: return "cube_partition";
        case AblationVariant::no_downsample: return "no_downsample";
        case AblationVariant::mlp_only: return "mlp_only";
        case AblationVariant::no_density: return "no_density";
    }
    return "full";
}

AblationVariant ablation_from_name(const std::string& name) {
    if (name == "full") return AblationVariant::full;
    if (name == "cube_partition") return AblationVariant::cube_partition;
    if (name == "no_downsample") return AblationVariant::no_downsample;
    if (name == "mlp_only") return AblationVariant::mlp_only;
    if (name == "no_density") return AblationVariant::no_density;
    fail_usage("unknown ablation variant: " + name);
}

PartitionConfig PipelineConfig::partition() const {
    PartitionConfig p;
    p.alpha_min = deg_to_rad(alpha_min_deg);
    p.alpha_max = deg_to_rad(alpha_max_deg);
    p.beta_min = deg_to_rad(beta_min_deg);
    p.beta_max = deg_to_rad(beta_max_deg);
    p.r_min = r_min;
    p.r_max = r_max;
    p.d_alpha = deg_to_rad(d_alpha_deg);
    p.d_beta = deg_to_rad(d_beta_deg);
    p.d_r = d_r;
    p.mode = partition_mode;
    p.cube_cell = cube_cell;
    p.cube_region = region;
    p.normalized_corner_distance = normalized_corner_distance;
    return p;
}

PartitionConfig PipelineConfig::effective_partition() const {
    PartitionConfig p = partition();
    if (ablation == AblationVariant::cube_partition) p.mode = PartitionMode::cube;
    return p;
}

PipelineConfig default_config() { return PipelineConfig{}; }

namespace {

// shortest representation that parses back to the same double
std::string fmt_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail_usage("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return int(n);
    } catch (const std::exception&) {
        fail_usage("config: bad integer value for " + key + ": '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return uint64_t(n);
    } catch (const std::exception&) {
        fail_usage("config: bad integer value for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail_usage("config: bad boolean value for " + key + ": '" + v + "'");
}

std::string fmt_list(const std::vector<int32_t>& xs) {
    std::string out;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(xs[i]);
    }
    return out;
}

std::vector<int32_t> parse_list(const std::string& key, const std::string& v) {
    std::vector<int32_t> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
    if (out.empty()) fail_usage("config: empty list for " + key);
    return out;
}

struct KeyBinding {
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

// Canonical key order for serialization; the map drives parse, get and set.
const std::vector<std::pair<std::string, KeyBinding>>& key_table() {
    static const std::vector<std::pair<std::string, KeyBinding>> table = [] {
        std::vector<std::pair<std::string, KeyBinding>> t;
        auto dbl = [&t](const char* key, auto member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) { return fmt_double(c.*member); },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.*member = parse_double(key, v);
                          }}});
        };
        auto integer = [&t](const char* key, auto member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) { return std::to_string(c.*member); },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.*member = parse_int(key, v);
                          }}});
        };
        auto boolean = [&t](const char* key, auto member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) {
                              return std::string(c.*member ? "true" : "false");
                          },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.*member = parse_bool(key, v);
                          }}});
        };

        t.push_back({"region.x_min",
                     {[](const PipelineConfig& c) { return fmt_double(c.region.x_min); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.region.x_min = parse_double("region.x_min", v);
                      }}});
        t.push_back({"region.x_max",
                     {[](const PipelineConfig& c) { return fmt_double(c.region.x_max); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.region.x_max = parse_double("region.x_max", v);
                      }}});
        t.push_back({"region.y_min",
                     {[](const PipelineConfig& c) { return fmt_double(c.region.y_min); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.region.y_min = parse_double("region.y_min", v);
                      }}});
        t.push_back({"region.y_max",
                     {[](const PipelineConfig& c) { return fmt_double(c.region.y_max); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.region.y_max = parse_double("region.y_max", v);
                      }}});
        t.push_back({"region.z_min",
                     {[](const PipelineConfig& c) { return fmt_double(c.region.z_min); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.region.z_min = parse_double("region.z_min", v);
                      }}});
        t.push_back({"region.z_max",
                     {[](const PipelineConfig& c) { return fmt_double(c.region.z_max); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.region.z_max = parse_double("region.z_max", v);
                      }}});

        t.push_back({"partition.mode",
                     {[](const PipelineConfig& c) {
                          return std::string(c.partition_mode == PartitionMode::pyramid
                                                 ? "pyramid"
                                                 : "cube");
                      },
                      [](PipelineConfig& c, const std::string& v) {
                          if (v == "pyramid") c.partition_mode = PartitionMode::pyramid;
                          else if (v == "cube") c.partition_mode = PartitionMode::cube;
                          else fail_usage("config: partition.mode must be pyramid or cube");
                      }}});
        dbl("partition.alpha_min_deg", &PipelineConfig::alpha_min_deg);
        dbl("partition.alpha_max_deg", &PipelineConfig::alpha_max_deg);
        dbl("partition.beta_min_deg", &PipelineConfig::beta_min_deg);
        dbl("partition.beta_max_deg", &PipelineConfig::beta_max_deg);
        dbl("partition.r_min", &PipelineConfig::r_min);
        dbl("partition.r_max", &PipelineConfig::r_max);
        dbl("partition.d_alpha_deg", &PipelineConfig::d_alpha_deg);
        dbl("partition.d_beta_deg", &PipelineConfig::d_beta_deg);
        dbl("partition.d_r", &PipelineConfig::d_r);
        for (int axis = 0; axis < 3; ++axis) {
            const std::string key = std::string("partition.cube_d") + "xyz"[axis];
            t.push_back({key,
                         {[axis](const PipelineConfig& c) {
                              return fmt_double(c.cube_cell[size_t(axis)]);
                          },
                          [axis, key](PipelineConfig& c, const std::string& v) {
                              c.cube_cell[size_t(axis)] = parse_double(key, v);
                          }}});
        }
        boolean("partition.normalized_corner_distance",
                &PipelineConfig::normalized_corner_distance);

        integer("encoder.k", &PipelineConfig::k);
        dbl("encoder.sigma", &PipelineConfig::sigma);
        t.push_back({"encoder.mlp",
                     {[](const PipelineConfig& c) { return fmt_list(c.mlp_widths); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.mlp_widths = parse_list("encoder.mlp", v);
                      }}});
        t.push_back({"network.channels",
                     {[](const PipelineConfig& c) { return fmt_list(c.network_channels); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.network_channels = parse_list("network.channels", v);
                      }}});

        auto train_dbl = [&t](const char* key, double TrainSettings::* member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) { return fmt_double(c.train.*member); },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.train.*member = parse_double(key, v);
                          }}});
        };
        auto train_int = [&t](const char* key, int TrainSettings::* member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) {
                              return std::to_string(c.train.*member);
                          },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.train.*member = parse_int(key, v);
                          }}});
        };
        auto train_bool = [&t](const char* key, bool TrainSettings::* member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) {
                              return std::string(c.train.*member ? "true" : "false");
                          },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.train.*member = parse_bool(key, v);
                          }}});
        };
        train_dbl("train.lr", &TrainSettings::lr);
        train_int("train.lr_decay_epochs", &TrainSettings::lr_decay_epochs);
        train_dbl("train.lr_decay_factor", &TrainSettings::lr_decay_factor);
        train_int("train.epochs", &TrainSettings::epochs);
        train_int("train.batch", &TrainSettings::batch);
        train_dbl("train.momentum", &TrainSettings::momentum);
        t.push_back({"train.seed",
                     {[](const PipelineConfig& c) { return std::to_string(c.train.seed); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.train.seed = parse_u64("train.seed", v);
                      }}});
        train_dbl("train.class_weight_rail", &TrainSettings::class_weight_rail);
        train_bool("train.unweighted", &TrainSettings::unweighted);
        train_dbl("train.grad_clip", &TrainSettings::grad_clip);
        train_bool("train.augment", &TrainSettings::augment);
        train_dbl("train.augment_rotation_deg", &TrainSettings::augment_rotation_deg);
        train_dbl("train.augment_scale_jitter", &TrainSettings::augment_scale_jitter);
        train_dbl("train.augment_noise_sigma", &TrainSettings::augment_noise_sigma);
        train_dbl("train.bn_momentum", &TrainSettings::bn_momentum);

        auto synth_dbl = [&t](const char* key, double SynthSettings::* member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) { return fmt_double(c.synth.*member); },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.synth.*member = parse_double(key, v);
                          }}});
        };
        auto synth_int = [&t](const char* key, int SynthSettings::* member) {
            t.push_back({key,
                         {[member](const PipelineConfig& c) {
                              return std::to_string(c.synth.*member);
                          },
                          [member, key = std::string(key)](PipelineConfig& c,
                                                           const std::string& v) {
                              c.synth.*member = parse_int(key, v);
                          }}});
        };
        synth_dbl("synth.pitch_fov_deg", &SynthSettings::pitch_fov_deg);
        synth_dbl("synth.horiz_fov_deg", &SynthSettings::horiz_fov_deg);
        synth_dbl("synth.max_range", &SynthSettings::max_range);
        synth_dbl("synth.range_noise", &SynthSettings::range_noise);
        synth_int("synth.pitch_samples", &SynthSettings::pitch_samples);
        synth_int("synth.horiz_samples", &SynthSettings::horiz_samples);
        synth_dbl("synth.sensor_height", &SynthSettings::sensor_height);
        synth_dbl("synth.ground_roughness", &SynthSettings::ground_roughness);
        synth_dbl("synth.bed_height", &SynthSettings::bed_height);
        synth_dbl("synth.rail_height", &SynthSettings::rail_height);
        synth_dbl("synth.rail_width", &SynthSettings::rail_width);
        synth_dbl("synth.gauge", &SynthSettings::gauge);
        synth_dbl("synth.corridor", &SynthSettings::corridor);
        synth_dbl("synth.clutter_density", &SynthSettings::clutter_density);

        t.push_back({"ablation.variant",
                     {[](const PipelineConfig& c) { return std::string(ablation_name(c.ablation)); },
                      [](PipelineConfig& c, const std::string& v) {
                          c.ablation = ablation_from_name(v);
                      }}});
        boolean("run.deterministic", &PipelineConfig::deterministic);
        integer("run.threads", &PipelineConfig::threads);
        return t;
    }();
    return table;
}

const KeyBinding* find_key(const std::string& key) {
    for (const auto& [k, binding] : key_table())
        if (k == key) return &binding;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

bool PipelineConfig::operator==(const PipelineConfig& other) const {
    return serialize_config(*this) == serialize_config(other);
}

std::string serialize_config(const PipelineConfig& config) {
    std::string out;
    std::string section;
    for (const auto& [key, binding] : key_table()) {
        const std::string sec = key.substr(0, key.find('.'));
        if (sec != section) {
            if (!out.empty()) out += "\n";
            section = sec;
        }
        out += key + " = " + binding.get(config) + "\n";
    }
    return out;
}

void config_set(PipelineConfig& config, const std::string& key, const std::string& value) {
    const KeyBinding* binding = find_key(key);
    if (!binding) fail_usage("config: unknown key '" + key + "'");
    binding->set(config, value);
}

std::string config_get(const PipelineConfig& config, const std::string& key) {
    const KeyBinding* binding = find_key(key);
    if (!binding) fail_usage("config: unknown key '" + key + "'");
    return binding->get(config);
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail_usage("config: line " + std::to_string(line_no) + " is not key = value");
        config_set(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_data("config: cannot open: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void save_config_file(const PipelineConfig& config, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail_data("config: cannot open for writing: " + path);
    out << serialize_config(config);
    if (!out) fail_data("config: write failed: " + path);
}

std::string architecture_string(const PipelineConfig& config) {
    std::string s = "pfe:";
    if (config.ablation == AblationVariant::mlp_only) {
        s += "mlp4," + fmt_list(std::vector<int32_t>(config.mlp_widths.begin() + 1,
                                                     config.mlp_widths.end()));
    } else {
        s += fmt_list(config.mlp_widths);
    }
    s += "|net:" + fmt_list(config.network_channels);
    s += "|classes:2|expand:2";
    return s;
}

}  // namespace railseg
