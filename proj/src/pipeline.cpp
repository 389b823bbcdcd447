#include "railseg/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "railseg/checkpoint.hpp"
#include "railseg/geometry.hpp"
#include "railseg/io.hpp"
#include "railseg/parallel.hpp"

namespace fs = std::filesystem;

namespace railseg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

double scheduled_lr(const TrainSettings& t, int epoch) {
    const int drops = t.lr_decay_epochs > 0 ? epoch / t.lr_decay_epochs : 0;
    return t.lr / std::pow(t.lr_decay_factor, double(drops));
}

Pipeline::Pipeline(const PipelineConfig& config) : config_(config) {
    if (config_.mlp_widths.empty() || config_.mlp_widths.back() != config_.network_channels.front())
        fail_usage("pipeline: encoder output width must match the network input width");

    Rng rng(seed_stream(config_.train.seed, 0x9fe));
    std::vector<int32_t> widths = config_.mlp_widths;
    if (config_.ablation == AblationVariant::mlp_only) {
        widths[0] = 4;  // [x, y, z, intensity], no neighborhood
    } else if (widths[0] != kEncodingDim) {
        fail_usage("pipeline: encoder input width must be 13");
    }
    pfe_.build(widths, rng, "pfe");

    NetworkConfig nc;
    nc.encoder_channels = config_.network_channels;
    nc.classes = 2;
    nc.init_seed = seed_stream(config_.train.seed, 0x4e7);
    net_ = Network(nc);

    arch_hash_ = fnv1a32(architecture_string(config_));
    threads_ = resolve_threads(config_.deterministic ? 1 : config_.threads);
}

ProcessedFrame Pipeline::prepare(const Frame& raw, bool with_labels, StageTimes* times) const {
    ProcessedFrame pf;
    pf.original_count = raw.size();

    auto t0 = Clock::now();
    pf.cropped = crop_frame(raw, config_.region);
    pf.polar.reserve(pf.cropped.size());
    pf.polar_range.reserve(pf.cropped.size());
    for (const Point& p : pf.cropped.points) {
        pf.polar.push_back(to_polar(p));
        pf.polar_range.push_back(pf.polar.back().r);
    }
    if (times) times->preprocess_ms = ms_since(t0);

    t0 = Clock::now();
    const PartitionConfig part = config_.effective_partition();
    pf.map = group_points(pf.cropped, pf.polar, part);
    downsample(pf.map, pf.cropped, pf.polar, part);
    if (with_labels) label_voxels(pf.map, pf.cropped);

    if (config_.ablation == AblationVariant::no_downsample) {
        // every in-partition point becomes an encoder query
        pf.reps.reserve(pf.cropped.size());
        pf.rep_voxel.reserve(pf.cropped.size());
        for (size_t i = 0; i < pf.cropped.size(); ++i) {
            const int32_t slot = pf.map.point_to_voxel[i];
            if (slot < 0) continue;
            pf.reps.push_back(pf.cropped.points[i]);
            pf.rep_voxel.push_back(slot);
        }
    } else {
        pf.reps.reserve(pf.map.voxels.size());
        pf.rep_voxel.reserve(pf.map.voxels.size());
        for (size_t v = 0; v < pf.map.voxels.size(); ++v) {
            pf.reps.push_back(pf.cropped.points[size_t(pf.map.voxels[v].representative)]);
            pf.rep_voxel.push_back(int32_t(v));
        }
    }
    if (times) times->partition_ms = ms_since(t0);
    return pf;
}

SparseTensor Pipeline::encode(const ProcessedFrame& pf, bool training, EncodeCache* cache,
                              StageTimes* times) {
    auto t0 = Clock::now();
    const int out_w = pfe_.output_dim();
    std::vector<double> rep_features;

    if (config_.ablation == AblationVariant::mlp_only) {
        point_mlp_forward(pf.reps, pfe_, rep_features, cache ? &cache->pfe : nullptr, threads_);
    } else {
        PfeConfig pc;
        pc.k = config_.k;
        pc.sigma = config_.sigma;
        pc.density_enabled = config_.ablation != AblationVariant::no_density;
        if (pf.cropped.empty()) {
            rep_features.clear();
        } else {
            KnnIndex index(pf.cropped.points);
            pfe_forward(pf.reps, pf.cropped.points, pf.polar_range, index, pfe_, pc,
                        rep_features, cache ? &cache->pfe : nullptr, threads_);
        }
    }

    SparseTensor input;
    input.dims = {pf.map.grid.dim_pitch, pf.map.grid.dim_horiz, pf.map.grid.dim_range};
    input.channels = out_w;
    input.sites.reserve(pf.map.voxels.size());
    for (const VoxelRecord& v : pf.map.voxels)
        input.sites.push_back({v.index.l, v.index.w, v.index.h});

    const size_t n_voxels = pf.map.voxels.size();
    if (config_.ablation == AblationVariant::no_downsample) {
        // channelwise max over the voxel's member queries
        input.features.assign(n_voxels * size_t(out_w), 0.0);
        std::vector<int32_t> argmax(n_voxels * size_t(out_w), -1);
        for (size_t r = 0; r < pf.reps.size(); ++r) {
            const size_t v = size_t(pf.rep_voxel[r]);
            const double* src = rep_features.data() + r * size_t(out_w);
            double* dst = input.features.data() + v * size_t(out_w);
            int32_t* am = argmax.data() + v * size_t(out_w);
            for (int c = 0; c < out_w; ++c) {
                if (am[c] < 0 || src[c] > dst[c]) {
                    dst[c] = src[c];
                    am[c] = int32_t(r);
                }
            }
        }
        if (cache) {
            cache->pool_argmax = std::move(argmax);
            cache->pooled = true;
            cache->n_voxels = n_voxels;
        }
    } else {
        input.features = std::move(rep_features);
        if (cache) {
            cache->pooled = false;
            cache->n_voxels = n_voxels;
        }
    }
    input.finalize();  // voxels are already in packed order; builds the lookup
    if (times) times->encode_ms = ms_since(t0);
    return input;
}

void Pipeline::encode_backward(const std::vector<double>& grad_input, const EncodeCache& cache) {
    const int out_w = pfe_.output_dim();
    const std::vector<double>* upstream = &grad_input;
    std::vector<double> routed;
    if (cache.pooled) {
        routed.assign(size_t(cache.pfe.n_reps) * size_t(out_w), 0.0);
        for (size_t v = 0; v < cache.n_voxels; ++v)
            for (int c = 0; c < out_w; ++c) {
                const int32_t r = cache.pool_argmax[v * size_t(out_w) + size_t(c)];
                if (r >= 0)
                    routed[size_t(r) * size_t(out_w) + size_t(c)] +=
                        grad_input[v * size_t(out_w) + size_t(c)];
            }
        upstream = &routed;
    }
    pfe_backward(*upstream, cache.pfe, pfe_, threads_);
}

std::vector<uint8_t> Pipeline::infer_frame(const Frame& raw, StageTimes* times) {
    ProcessedFrame pf = prepare(raw, false, times);
    if (pf.map.voxels.empty()) return std::vector<uint8_t>(raw.size(), 0);
    SparseTensor input = encode(pf, false, nullptr, times);

    auto t0 = Clock::now();
    SparseTensor logits = net_.forward(input, false, threads_);
    std::vector<uint8_t> voxel_pred(logits.site_count());
    for (size_t r = 0; r < logits.site_count(); ++r) {
        const double* l = logits.feature(r);
        voxel_pred[r] = l[1] > l[0] ? 1 : 0;
    }
    if (times) times->network_ms = ms_since(t0);
    return voxels_to_points(voxel_pred, pf.map, pf.cropped, raw.size());
}

std::vector<Parameter*> Pipeline::parameters() {
    std::vector<Parameter*> out = pfe_.parameters();
    for (Parameter* p : net_.parameters()) out.push_back(p);
    return out;
}

namespace {

AugmentParams draw_augment(const TrainSettings& t, uint64_t epoch, uint64_t index) {
    AugmentParams a;
    if (!t.augment) return a;
    Rng rng(seed_stream(t.seed, epoch, 0xa06 + index));
    const double rot = deg_to_rad(t.augment_rotation_deg);
    a.z_rotation = rng.uniform(-rot, rot);
    for (int i = 0; i < 3; ++i)
        a.scale[i] = rng.uniform(1.0 - t.augment_scale_jitter, 1.0 + t.augment_scale_jitter);
    a.noise_sigma = t.augment_noise_sigma;
    a.rng_seed = seed_stream(t.seed, epoch, 0xb15 + index);
    return a;
}

double global_grad_norm(const std::vector<Parameter*>& params) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (double g : p->grad.data) sq += g * g;
    return std::sqrt(sq);
}

}  // namespace

double Pipeline::train_step(const Frame& raw, double* accuracy_accum, size_t* acc_count) {
    ProcessedFrame pf = prepare(raw, true);
    if (pf.map.voxels.empty()) return std::nan("");

    EncodeCache cache;
    SparseTensor input = encode(pf, true, &cache);
    SparseTensor logits = net_.forward(input, true, threads_);

    std::vector<uint8_t> labels(pf.map.voxels.size());
    for (size_t v = 0; v < pf.map.voxels.size(); ++v)
        labels[v] = uint8_t(pf.map.voxels[v].label);

    bool any_labeled = false;
    for (uint8_t l : labels)
        if (l <= 1) {
            any_labeled = true;
            break;
        }
    if (!any_labeled) return std::nan("");

    double weights[2] = {1.0, config_.train.unweighted ? 1.0 : config_.train.class_weight_rail};
    std::vector<double> grad;
    const double loss = cross_entropy(logits, labels, weights, grad);

    if (accuracy_accum) {
        size_t correct = 0, counted = 0;
        for (size_t r = 0; r < logits.site_count(); ++r) {
            if (labels[r] > 1) continue;
            const double* l = logits.feature(r);
            const uint8_t pred = l[1] > l[0] ? 1 : 0;
            correct += pred == labels[r];
            ++counted;
        }
        *accuracy_accum += counted ? double(correct) / double(counted) : 0.0;
        if (acc_count) *acc_count += 1;
    }

    std::vector<double> grad_input = net_.backward(grad, threads_);
    net_.commit_running_stats(config_.train.bn_momentum);
    encode_backward(grad_input, cache);
    return loss;
}

TrainResult Pipeline::train(const std::vector<Frame>& dataset, const std::string& log_csv,
                            int start_epoch) {
    if (dataset.empty()) fail_usage("train: dataset is empty");
    const TrainSettings& t = config_.train;

    std::map<std::string, Tensor> velocity;
    std::vector<Parameter*> params = parameters();
    for (Parameter* p : params) velocity.emplace(p->name, Tensor(p->value.shape));

    std::ofstream log;
    if (!log_csv.empty()) {
        log.open(log_csv);
        if (!log) fail_data("train: cannot open log: " + log_csv);
        log << "epoch,lr,mean_loss,voxel_accuracy,frames,skipped\n";
    }

    TrainResult result;
    result.final_epoch = start_epoch;
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), size_t(0));

    const int batch = std::max(1, t.batch);
    for (int epoch = start_epoch; epoch < t.epochs; ++epoch) {
        const double lr = scheduled_lr(t, epoch);
        Rng shuffle_rng(seed_stream(t.seed, uint64_t(epoch), 0x5f7));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(shuffle_rng.below(i))]);

        double loss_sum = 0.0;
        double acc_sum = 0.0;
        size_t acc_n = 0;
        size_t used = 0, skipped = 0;
        int in_batch = 0;

        auto apply_update = [&](int batch_frames) {
            if (batch_frames == 0) return;
            if (t.grad_clip > 0.0) {
                const double norm = global_grad_norm(params);
                if (norm > t.grad_clip) {
                    const double scale = t.grad_clip / norm;
                    for (Parameter* p : params)
                        for (double& g : p->grad.data) g *= scale;
                }
            }
            const double inv = 1.0 / double(batch_frames);
            for (Parameter* p : params) {
                Tensor& v = velocity.at(p->name);
                for (size_t i = 0; i < p->value.data.size(); ++i) {
                    const double g = p->grad.data[i] * inv;
                    v.data[i] = t.momentum * v.data[i] + g;
                    p->value.data[i] -= lr * v.data[i];
                }
                p->zero_grad();
            }
        };

        for (size_t pos = 0; pos < order.size(); ++pos) {
            Frame frame = dataset[order[pos]];
            if (t.augment) frame = augment(frame, draw_augment(t, uint64_t(epoch), order[pos]));
            const double loss = train_step(frame, &acc_sum, &acc_n);
            if (std::isnan(loss)) {
                ++skipped;
                continue;
            }
            if (!std::isfinite(loss))
                fail_numeric("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", frame " + std::to_string(dataset[order[pos]].frame_id));
            loss_sum += loss;
            ++used;
            ++in_batch;
            if (in_batch == batch) {
                apply_update(in_batch);
                in_batch = 0;
            }
        }
        apply_update(in_batch);
        if (used == 0) fail_data("train: no trainable frames in epoch " + std::to_string(epoch));

        EpochLog row;
        row.epoch = epoch;
        row.lr = lr;
        row.mean_loss = used ? loss_sum / double(used) : std::nan("");
        row.voxel_accuracy = acc_n ? acc_sum / double(acc_n) : 0.0;
        row.frames = used;
        row.skipped = skipped;
        result.log.push_back(row);
        result.final_epoch = epoch + 1;
        if (!std::isfinite(row.mean_loss) && used > 0)
            fail_numeric("train: non-finite epoch loss at epoch " + std::to_string(epoch));
        if (log) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d,%.8g,%.8g,%.6f,%zu,%zu\n", row.epoch, row.lr,
                          row.mean_loss, row.voxel_accuracy, row.frames, row.skipped);
            log << buf;
        }
    }
    checkpoint_epoch_ = result.final_epoch;
    return result;
}

void Pipeline::save(const std::string& path) {
    std::vector<std::pair<std::string, Tensor>> extra;
    for (BatchNorm* bn : net_.norms()) {
        const std::string base = bn->parameters()[0]->name;  // ".../gamma"
        const std::string prefix = base.substr(0, base.size() - 6);
        extra.push_back({prefix + "/running_mean", bn->running_mean()});
        extra.push_back({prefix + "/running_var", bn->running_var()});
    }
    Tensor epoch_tensor({1});
    epoch_tensor.data[0] = double(checkpoint_epoch_);
    extra.push_back({"train/epoch", epoch_tensor});

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (Parameter* p : parameters()) tensors.push_back({p->name, &p->value});
    for (const auto& [name, tensor] : extra) tensors.push_back({name, &tensor});
    write_checkpoint(path, arch_hash_, tensors);
}

void Pipeline::load(const std::string& path) {
    std::map<std::string, Tensor> stored;
    const uint32_t hash = read_checkpoint(path, stored);
    if (hash != arch_hash_)
        fail_data("checkpoint: architecture hash mismatch (file " + std::to_string(hash) +
                  ", config " + std::to_string(arch_hash_) + ")");

    auto take = [&](const std::string& name, Tensor& dst) {
        auto it = stored.find(name);
        if (it == stored.end()) fail_data("checkpoint: missing tensor " + name);
        if (it->second.shape != dst.shape) fail_data("checkpoint: shape mismatch for " + name);
        dst.data = it->second.data;
    };
    for (Parameter* p : parameters()) take(p->name, p->value);
    for (BatchNorm* bn : net_.norms()) {
        const std::string base = bn->parameters()[0]->name;
        const std::string prefix = base.substr(0, base.size() - 6);
        take(prefix + "/running_mean", bn->running_mean());
        take(prefix + "/running_var", bn->running_var());
    }
    auto it = stored.find("train/epoch");
    checkpoint_epoch_ = it == stored.end() ? 0 : int(it->second.data.at(0));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace {

std::string frame_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.rpcf", index);
    return buf;
}

std::vector<Frame> load_dataset(const std::string& dir) {
    const std::vector<std::string> files = list_files(dir, ".rpcf");
    if (files.empty()) fail_data("no .rpcf frames in " + dir);
    std::vector<Frame> frames(files.size());
    IngestReport total;
    for (size_t i = 0; i < files.size(); ++i) {
        IngestReport report;
        frames[i] = load_frame(files[i], &report);
        total.dropped_nonfinite += report.dropped_nonfinite;
        total.clamped_intensity += report.clamped_intensity;
    }
    if (total.dropped_nonfinite || total.clamped_intensity)
        std::printf("ingest: dropped %zu non-finite points, clamped %zu intensities\n",
                    total.dropped_nonfinite, total.clamped_intensity);
    return frames;
}

}  // namespace

void write_run_manifest(const std::string& path, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& args,
                        const PipelineConfig& config) {
    std::ofstream out(path);
    if (!out) fail_data("manifest: cannot open for writing: " + path);
    out << "cmd.name = " << command << "\n";
    out << "cmd.version = " << kVersion << "\n";
    for (const auto& [k, v] : args) out << "cmd." << k << " = " << v << "\n";
    out << "\n" << serialize_config(config);
    if (!out) fail_data("manifest: write failed: " + path);
}

std::map<std::string, std::string> read_run_manifest(const std::string& path,
                                                     PipelineConfig* config_out) {
    std::ifstream in(path);
    if (!in) fail_data("manifest: cannot open: " + path);
    std::map<std::string, std::string> args;
    std::string config_text;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("cmd.", 0) == 0) {
            const size_t eq = line.find('=');
            if (eq == std::string::npos) fail_data("manifest: malformed cmd line");
            std::string key = line.substr(4, eq - 4);
            std::string value = line.substr(eq + 1);
            auto trim = [](std::string& s) {
                while (!s.empty() && std::isspace((unsigned char)s.front())) s.erase(s.begin());
                while (!s.empty() && std::isspace((unsigned char)s.back())) s.pop_back();
            };
            trim(key);
            trim(value);
            args[key] = value;
        } else {
            config_text += line + "\n";
        }
    }
    if (config_out) *config_out = parse_config(config_text);
    return args;
}

void cmd_synth(const PipelineConfig& config, const std::string& out_dir, int n_frames,
               const std::string& mix_text, uint64_t seed) {
    if (n_frames < 1) fail_usage("synth: --frames must be >= 1");
    const TopologyMix mix = parse_mix(mix_text);
    fs::create_directories(out_dir);

    const std::vector<DatasetFrameInfo> plan = plan_dataset(n_frames, mix, seed);
    std::vector<ManifestRow> rows(plan.size());
    const int threads = resolve_threads(config.deterministic ? 1 : config.threads);

    parallel_chunks(int64_t(plan.size()), threads, [&](int64_t begin, int64_t end, int) {
        for (int64_t i = begin; i < end; ++i) {
            SynthSettings lidar = config.synth;
            // mild per-frame density variation
            Rng vary(seed_stream(seed, uint64_t(i), 0xd3));
            lidar.horiz_samples = int(lidar.horiz_samples * vary.uniform(0.85, 1.15));
            Frame frame = generate_scene(plan[size_t(i)].scene, lidar);
            frame.frame_id = i;
            write_rpcf(out_dir + "/" + frame_filename(int(i)), frame);

            ManifestRow row;
            row.frame_id = i;
            row.topology = topology_name(plan[size_t(i)].topology);
            row.points = frame.size();
            for (const Point& p : frame.points) row.rail_points += p.label == Label::rail;
            rows[size_t(i)] = row;
        }
    });

    write_manifest(out_dir + "/manifest.csv", rows);
    write_run_manifest(out_dir + "/run_manifest.cfg", "synth",
                       {{"frames", std::to_string(n_frames)},
                        {"mix", mix_text},
                        {"seed", std::to_string(seed)},
                        {"output", out_dir}},
                       config);
}

void cmd_train(const PipelineConfig& config, const std::string& dataset_dir,
               const std::string& checkpoint_out, const std::string& log_csv,
               const std::string& resume_checkpoint) {
    std::vector<Frame> dataset = load_dataset(dataset_dir);
    Pipeline pipeline(config);
    int start_epoch = 0;
    if (!resume_checkpoint.empty()) {
        pipeline.load(resume_checkpoint);
        start_epoch = pipeline.checkpoint_epoch();
    }
    const TrainResult result = pipeline.train(dataset, log_csv, start_epoch);
    pipeline.save(checkpoint_out);

    std::vector<std::pair<std::string, std::string>> args = {
        {"dataset", dataset_dir},
        {"checkpoint", checkpoint_out},
        {"epochs_run", std::to_string(result.final_epoch - start_epoch)},
        {"start_epoch", std::to_string(start_epoch)},
    };
    if (!log_csv.empty()) args.push_back({"log", log_csv});
    if (!resume_checkpoint.empty()) args.push_back({"resume", resume_checkpoint});
    if (!result.log.empty()) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.8g", result.log.back().mean_loss);
        args.push_back({"final_loss", buf});
    }
    write_run_manifest(checkpoint_out + ".manifest", "train", args, config);
}

void cmd_infer(const PipelineConfig& config, const std::string& checkpoint,
               const std::string& input_path, const std::string& out_dir) {
    Pipeline pipeline(config);
    pipeline.load(checkpoint);
    fs::create_directories(out_dir);

    std::vector<std::string> inputs;
    if (fs::is_directory(input_path)) {
        inputs = list_files(input_path, ".rpcf");
        const std::vector<std::string> plys = list_files(input_path, ".ply");
        inputs.insert(inputs.end(), plys.begin(), plys.end());
        if (inputs.empty()) fail_data("infer: no frames in " + input_path);
    } else {
        if (!fs::exists(input_path)) fail_data("infer: no such input: " + input_path);
        inputs.push_back(input_path);
    }

    for (const std::string& path : inputs) {
        Frame frame = load_frame(path);
        const std::vector<uint8_t> pred = pipeline.infer_frame(frame);
        Frame out = frame;
        for (size_t i = 0; i < out.size(); ++i)
            out.points[i].label = pred[i] == 1 ? Label::rail : Label::background;
        const std::string stem = fs::path(path).stem().string();
        write_ply(out_dir + "/" + stem + ".ply", out);
    }
    write_run_manifest(out_dir + "/run_manifest.cfg", "infer",
                       {{"checkpoint", checkpoint},
                        {"input", input_path},
                        {"output", out_dir},
                        {"frames", std::to_string(inputs.size())}},
                       config);
}

MetricsReport cmd_eval(const PipelineConfig& config, const std::string& pred_dir,
                       const std::string& gt_dir, const std::string& out_csv) {
    std::vector<std::string> pred_files = list_files(pred_dir, ".ply");
    std::vector<std::string> gt_files = list_files(gt_dir, ".rpcf");
    {
        const std::vector<std::string> gt_ply = list_files(gt_dir, ".ply");
        gt_files.insert(gt_files.end(), gt_ply.begin(), gt_ply.end());
    }
    if (pred_files.empty()) fail_data("eval: no predicted frames in " + pred_dir);

    std::map<int64_t, std::string> gt_by_id;
    for (const std::string& f : gt_files) gt_by_id[frame_id_from_path(f)] = f;

    // topology groups from the ground-truth manifest when present
    std::map<int64_t, std::string> group_of;
    const std::string manifest_path = gt_dir + "/manifest.csv";
    if (fs::exists(manifest_path))
        for (const ManifestRow& row : read_manifest(manifest_path))
            group_of[row.frame_id] = row.topology;

    std::string missing;
    MetricsReport report;
    for (const std::string& pf : pred_files) {
        const int64_t id = frame_id_from_path(pf);
        auto it = gt_by_id.find(id);
        if (it == gt_by_id.end()) {
            missing += (missing.empty() ? "" : ", ") + std::to_string(id);
            continue;
        }
        const Frame pred = load_frame(pf);
        const Frame gt = load_frame(it->second);
        if (pred.size() != gt.size())
            fail_data("eval: point count mismatch for frame " + std::to_string(id));
        FrameMetrics fm;
        fm.frame_id = id;
        auto g = group_of.find(id);
        if (g != group_of.end()) fm.group = g->second;
        fm.counts = compute_confusion(labels_of(pred), labels_of(gt));
        fm.metrics = metrics_from_counts(fm.counts);
        report.frames.push_back(std::move(fm));
    }
    if (!missing.empty()) fail_data("eval: prediction frames without ground truth: " + missing);
    report.finish();

    std::printf("%s", format_metrics_table(report).c_str());
    if (!out_csv.empty()) {
        write_metrics_csv(out_csv, report);
        const std::string manifest = out_csv + ".manifest";
        write_run_manifest(manifest, "eval",
                           {{"pred", pred_dir}, {"gt", gt_dir}, {"csv", out_csv}}, config);
    }
    return report;
}

double cmd_bench(const PipelineConfig& config, const std::string& checkpoint,
                 const std::string& dataset_dir, const std::string& out_csv, bool with_stages) {
    Pipeline pipeline(config);
    pipeline.load(checkpoint);
    const std::vector<std::string> files = list_files(dataset_dir, ".rpcf");
    if (files.empty()) fail_data("bench: no frames in " + dataset_dir);

    std::ofstream csv;
    if (!out_csv.empty()) {
        csv.open(out_csv);
        if (!csv) fail_data("bench: cannot open: " + out_csv);
        csv << "frame_id,points,total_ms";
        if (with_stages) csv << ",preprocess_ms,partition_ms,encode_ms,network_ms";
        csv << "\n";
    }

    constexpr int kRuns = 3;
    std::vector<double> points, totals;
    for (const std::string& path : files) {
        const Frame frame = load_frame(path);
        pipeline.infer_frame(frame);  // warm-up, excluded
        std::vector<StageTimes> runs(kRuns);
        for (int r = 0; r < kRuns; ++r) pipeline.infer_frame(frame, &runs[size_t(r)]);
        std::sort(runs.begin(), runs.end(),
                  [](const StageTimes& a, const StageTimes& b) { return a.total() < b.total(); });
        const StageTimes& med = runs[kRuns / 2];
        points.push_back(double(frame.size()));
        totals.push_back(med.total());
        if (csv) {
            csv << frame.frame_id << "," << frame.size() << "," << med.total();
            if (with_stages)
                csv << "," << med.preprocess_ms << "," << med.partition_ms << ","
                    << med.encode_ms << "," << med.network_ms;
            csv << "\n";
        }
    }

    double rho = 0.0;
    if (points.size() >= 3) {
        rho = spearman(points, totals);
        std::printf("bench: %zu frames, spearman(points, total_ms) = %.4f\n", points.size(), rho);
        if (rho <= 0.0)
            fail_numeric("bench: expected positive correlation between points and time");
    } else {
        std::printf("bench: %zu frames (too few for a correlation summary)\n", points.size());
    }
    if (!out_csv.empty())
        write_run_manifest(out_csv + ".manifest", "bench",
                           {{"checkpoint", checkpoint},
                            {"dataset", dataset_dir},
                            {"csv", out_csv},
                            {"stages", with_stages ? "true" : "false"}},
                           config);
    return rho;
}

void cmd_ablate(const PipelineConfig& config, const std::string& train_dir,
                const std::string& eval_dir, const std::string& out_csv) {
    const std::vector<Frame> train_set = load_dataset(train_dir);
    const std::vector<Frame> eval_set = load_dataset(eval_dir);

    std::ofstream csv(out_csv);
    if (!csv) fail_data("ablate: cannot open: " + out_csv);
    csv << "variant,iou,precision,recall,median_frame_ms\n";

    const AblationVariant variants[] = {AblationVariant::full, AblationVariant::cube_partition,
                                        AblationVariant::no_downsample, AblationVariant::mlp_only,
                                        AblationVariant::no_density};
    for (AblationVariant v : variants) {
        PipelineConfig variant_config = config;
        variant_config.ablation = v;
        Pipeline pipeline(variant_config);
        pipeline.train(train_set, "");

        ConfusionCounts pooled;
        std::vector<double> frame_ms;
        for (const Frame& frame : eval_set) {
            StageTimes times;
            const std::vector<uint8_t> pred = pipeline.infer_frame(frame, &times);
            pooled += compute_confusion(pred, labels_of(frame));
            frame_ms.push_back(times.total());
        }
        std::sort(frame_ms.begin(), frame_ms.end());
        const double median_ms = frame_ms.empty() ? 0.0 : frame_ms[frame_ms.size() / 2];
        const Metrics m = metrics_from_counts(pooled);
        auto cell = [](const std::optional<double>& x) {
            if (!x) return std::string("undefined");
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", *x);
            return std::string(buf);
        };
        csv << ablation_name(v) << "," << cell(m.iou) << "," << cell(m.precision) << ","
            << cell(m.recall) << "," << median_ms << "\n";
        std::printf("ablate: %-15s iou=%s time=%.1fms\n", ablation_name(v), cell(m.iou).c_str(),
                    median_ms);
    }
    write_run_manifest(out_csv + ".manifest", "ablate",
                       {{"train", train_dir}, {"eval", eval_dir}, {"csv", out_csv}}, config);
}

}  // namespace railseg
