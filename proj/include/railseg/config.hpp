#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "railseg/partition.hpp"
#include "railseg/types.hpp"

namespace railseg {

enum class AblationVariant { full, cube_partition, no_downsample, mlp_only, no_density };

const char* ablation_name(AblationVariant v);
AblationVariant ablation_from_name(const std::string& name);

struct TrainSettings {
    double lr = 0.001;
    int lr_decay_epochs = 10;     // divide lr by decay_factor every N epochs
    double lr_decay_factor = 10.0;
    int epochs = 60;
    int batch = 1;                // frames per parameter update
    double momentum = 0.9;
    uint64_t seed = 1;
    double class_weight_rail = 9.0;
    bool unweighted = false;
    double grad_clip = 0.0;       // global norm; 0 disables
    bool augment = true;
    double augment_rotation_deg = 5.0;
    double augment_scale_jitter = 0.05;
    double augment_noise_sigma = 0.01;
    double bn_momentum = 0.1;

    bool operator==(const TrainSettings&) const = default;
};

struct SynthSettings {
    double pitch_fov_deg = 40.0;
    double horiz_fov_deg = 65.0;
    double max_range = 200.0;
    double range_noise = 0.02;
    int pitch_samples = 160;
    int horiz_samples = 420;
    double sensor_height = 3.5;
    double ground_roughness = 0.05;
    double bed_height = 0.3;
    double rail_height = 0.17;
    double rail_width = 0.07;
    double gauge = 1.435;
    double corridor = 1.550;
    double clutter_density = 1.0;

    bool operator==(const SynthSettings&) const = default;
};

// Everything a run needs. Defaults reproduce the reference parameter set:
// inspection region [6.5,70,-30,30,-5.5,7], grid [0.3 deg, 0.5 deg, 0.5 m],
// receptive field 0.5, MLP [13,64,64,16], K 4, lr 0.001, 60 epochs. Angles
// are stored in degrees, exactly as they appear in the config file.
struct PipelineConfig {
    InspectionRegion region;

    PartitionMode partition_mode = PartitionMode::pyramid;
    double alpha_min_deg = -20.0, alpha_max_deg = 20.0;
    double beta_min_deg = -32.5, beta_max_deg = 32.5;
    double r_min = 0.0, r_max = 80.0;
    double d_alpha_deg = 0.3, d_beta_deg = 0.5, d_r = 0.5;
    std::array<double, 3> cube_cell = {0.5, 0.5, 0.5};
    bool normalized_corner_distance = true;

    int k = 4;
    double sigma = 0.5;
    std::vector<int32_t> mlp_widths = {13, 64, 64, 16};
    std::vector<int32_t> network_channels = {16, 32, 64, 128, 256};

    TrainSettings train;
    SynthSettings synth;
    AblationVariant ablation = AblationVariant::full;
    bool deterministic = false;
    int threads = 0;  // 0 = auto

    // Radian-valued partition config; cube mode bins over `region`.
    PartitionConfig partition() const;
    // The effective mode after applying the ablation toggle.
    PartitionConfig effective_partition() const;

    bool operator==(const PipelineConfig&) const;
};

PipelineConfig default_config();

// Flat `section.key = value` text form; '#' starts a comment. Unknown keys
// are usage errors. parse(serialize(c)) == c.
std::string serialize_config(const PipelineConfig& config);
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config_file(const std::string& path);
void save_config_file(const PipelineConfig& config, const std::string& path);

// Apply one `key=value` assignment (CLI --set, C API setter).
void config_set(PipelineConfig& config, const std::string& key, const std::string& value);
std::string config_get(const PipelineConfig& config, const std::string& key);

// Canonical architecture description feeding the checkpoint hash.
std::string architecture_string(const PipelineConfig& config);

}  // namespace railseg
