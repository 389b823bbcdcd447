#pragma once

#include <map>
#include <string>
#include <vector>

#include "railseg/config.hpp"
#include "railseg/eval.hpp"
#include "railseg/network.hpp"
#include "railseg/partition.hpp"
#include "railseg/pfe.hpp"
#include "railseg/synth.hpp"

namespace railseg {

inline constexpr const char* kVersion = "0.1.0";

struct StageTimes {
    double preprocess_ms = 0.0;
    double partition_ms = 0.0;
    double encode_ms = 0.0;
    double network_ms = 0.0;
    double total() const { return preprocess_ms + partition_ms + encode_ms + network_ms; }
};

// Geometry stages of one frame: crop, polar view, voxel map, representatives.
struct ProcessedFrame {
    Frame cropped;
    std::vector<PolarPoint> polar;
    std::vector<double> polar_range;  // per cropped point, for the encoder
    PointVoxelMap map;
    std::vector<Point> reps;          // encoder query points
    std::vector<int32_t> rep_voxel;   // rep -> voxel slot (= tensor row)
    size_t original_count = 0;
};

struct EncodeCache {
    PfeCache pfe;
    std::vector<int32_t> pool_argmax;  // no_downsample: winning rep per voxel/channel
    bool pooled = false;
    size_t n_voxels = 0;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double voxel_accuracy = 0.0;
    size_t frames = 0;
    size_t skipped = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int final_epoch = 0;
};

// Full model: feature encoder plus the sparse network, with save/load and the
// per-frame stages.
class Pipeline {
public:
    explicit Pipeline(const PipelineConfig& config);

    const PipelineConfig& config() const { return config_; }
    uint32_t architecture_hash() const { return arch_hash_; }

    ProcessedFrame prepare(const Frame& raw, bool with_labels, StageTimes* times = nullptr) const;
    SparseTensor encode(const ProcessedFrame& pf, bool training, EncodeCache* cache,
                        StageTimes* times = nullptr);
    // Routes per-voxel input gradients back through pooling into the encoder.
    void encode_backward(const std::vector<double>& grad_input, const EncodeCache& cache);

    // Per-point predicted labels (0/1) for the whole original frame.
    std::vector<uint8_t> infer_frame(const Frame& raw, StageTimes* times = nullptr);

    TrainResult train(const std::vector<Frame>& dataset, const std::string& log_csv,
                      int start_epoch = 0);

    void save(const std::string& path);
    void load(const std::string& path);  // restores params; verifies the hash
    int checkpoint_epoch() const { return checkpoint_epoch_; }

    std::vector<Parameter*> parameters();
    Network& network() { return net_; }
    PfeParams& pfe() { return pfe_; }

private:
    // Forward + backward for one frame; returns the loss or NaN if the frame
    // produced nothing trainable. Gradients accumulate in the parameters.
    double train_step(const Frame& raw, double* accuracy_accum, size_t* acc_count);

    PipelineConfig config_;
    PfeParams pfe_;
    Network net_;
    uint32_t arch_hash_ = 0;
    int threads_ = 1;
    int checkpoint_epoch_ = 0;
};

// Learning-rate schedule: lr0 / factor^(epoch / step_epochs).
double scheduled_lr(const TrainSettings& t, int epoch);

// ---------------------------------------------------------------------------
// Subcommand entry points (the C API wraps these 1:1).
// ---------------------------------------------------------------------------

void cmd_synth(const PipelineConfig& config, const std::string& out_dir, int n_frames,
               const std::string& mix, uint64_t seed);
void cmd_train(const PipelineConfig& config, const std::string& dataset_dir,
               const std::string& checkpoint_out, const std::string& log_csv,
               const std::string& resume_checkpoint);
void cmd_infer(const PipelineConfig& config, const std::string& checkpoint,
               const std::string& input_path, const std::string& out_dir);
MetricsReport cmd_eval(const PipelineConfig& config, const std::string& pred_dir,
                       const std::string& gt_dir, const std::string& out_csv);
double cmd_bench(const PipelineConfig& config, const std::string& checkpoint,
                 const std::string& dataset_dir, const std::string& out_csv, bool with_stages);
void cmd_ablate(const PipelineConfig& config, const std::string& train_dir,
                const std::string& eval_dir, const std::string& out_csv);

// Run manifests: `cmd.*` keys describing the invocation followed by the full
// config snapshot; every subcommand drops one next to its outputs.
void write_run_manifest(const std::string& path, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& args,
                        const PipelineConfig& config);
std::map<std::string, std::string> read_run_manifest(const std::string& path,
                                                     PipelineConfig* config_out);

}  // namespace railseg
