// railseg command-line front end. All functionality lives behind the C API in
// railseg.h; this file only parses arguments and maps statuses to exit codes.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "railseg.h"

namespace {

struct ConfigDeleter {
    void operator()(railseg_config* c) const { railseg_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<railseg_config, ConfigDeleter>;

int finish(railseg_status status) {
    if (status != RAILSEG_OK) std::fprintf(stderr, "railseg: %s\n", railseg_last_error());
    return int(status);
}

// Build the config handle from --config and --set options.
ConfigPtr make_config(const std::string& config_path,
                      const std::vector<std::string>& overrides, int& error) {
    ConfigPtr config(config_path.empty() ? railseg_config_create()
                                         : railseg_config_load(config_path.c_str()));
    if (!config) {
        std::fprintf(stderr, "railseg: %s\n", railseg_last_error());
        error = int(RAILSEG_ERR_DATA);
        return nullptr;
    }
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "railseg: --set expects key=value, got '%s'\n", kv.c_str());
            error = int(RAILSEG_ERR_USAGE);
            return nullptr;
        }
        const railseg_status st = railseg_config_set(
            config.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (st != RAILSEG_OK) {
            std::fprintf(stderr, "railseg: %s\n", railseg_last_error());
            error = int(st);
            return nullptr;
        }
    }
    error = 0;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rail point-cloud segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "pipeline config file");
    app.add_option("--set", overrides, "override a config entry (section.key=value)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    int synth_frames = 0;
    std::string synth_mix = "straight=0.4,curve=0.3,crossed=0.15,multi=0.15";
    unsigned long long synth_seed = 1;
    std::string synth_out;
    synth->add_option("--frames", synth_frames, "number of frames")->required();
    synth->add_option("--mix", synth_mix, "topology mix, e.g. straight=0.5,curve=0.5");
    synth->add_option("--seed", synth_seed, "dataset seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train on a dataset of .rpcf frames");
    std::string train_dataset, train_out, train_log, train_resume, train_ablation;
    train->add_option("--dataset", train_dataset, "dataset directory")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--log", train_log, "per-epoch CSV log path");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--ablation", train_ablation,
                      "variant: full|cube_partition|no_downsample|mlp_only|no_density");

    // infer
    auto* infer = app.add_subcommand("infer", "predict labels for frames");
    std::string infer_ckpt, infer_input, infer_out, infer_ablation;
    infer->add_option("--checkpoint", infer_ckpt, "trained checkpoint")->required();
    infer->add_option("--input", infer_input, "frame file or directory")->required();
    infer->add_option("--out", infer_out, "output directory for predicted PLY")->required();
    infer->add_option("--ablation", infer_ablation, "variant the checkpoint was trained with");

    // eval
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    std::string eval_pred, eval_gt, eval_csv;
    eval->add_option("--pred", eval_pred, "directory of predicted PLY frames")->required();
    eval->add_option("--gt", eval_gt, "directory of ground-truth frames")->required();
    eval->add_option("--csv", eval_csv, "metrics CSV output path");

    // bench
    auto* bench = app.add_subcommand("bench", "per-frame latency benchmark");
    std::string bench_ckpt, bench_dataset, bench_csv;
    bool bench_stages = false;
    bench->add_option("--checkpoint", bench_ckpt, "trained checkpoint")->required();
    bench->add_option("--dataset", bench_dataset, "dataset directory")->required();
    bench->add_option("--csv", bench_csv, "timing CSV output path");
    bench->add_flag("--stages", bench_stages, "add per-stage columns");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and compare every ablation variant");
    std::string ablate_train, ablate_eval, ablate_csv;
    ablate->add_option("--train", ablate_train, "training dataset directory")->required();
    ablate->add_option("--eval", ablate_eval, "evaluation dataset directory")->required();
    ablate->add_option("--csv", ablate_csv, "comparison CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : int(RAILSEG_ERR_USAGE);
    }

    int error = 0;
    ConfigPtr config = make_config(config_path, overrides, error);
    if (!config) return error;

    if (synth->parsed())
        return finish(railseg_synth(config.get(), synth_out.c_str(), synth_frames,
                                    synth_mix.c_str(), synth_seed));
    if (train->parsed()) {
        if (!train_ablation.empty() &&
            railseg_config_set(config.get(), "ablation.variant", train_ablation.c_str()) !=
                RAILSEG_OK)
            return finish(RAILSEG_ERR_USAGE);
        return finish(railseg_train(config.get(), train_dataset.c_str(), train_out.c_str(),
                                    train_log.empty() ? nullptr : train_log.c_str(),
                                    train_resume.empty() ? nullptr : train_resume.c_str()));
    }
    if (infer->parsed()) {
        if (!infer_ablation.empty() &&
            railseg_config_set(config.get(), "ablation.variant", infer_ablation.c_str()) !=
                RAILSEG_OK)
            return finish(RAILSEG_ERR_USAGE);
        return finish(railseg_infer(config.get(), infer_ckpt.c_str(), infer_input.c_str(),
                                    infer_out.c_str()));
    }
    if (eval->parsed())
        return finish(railseg_eval(config.get(), eval_pred.c_str(), eval_gt.c_str(),
                                   eval_csv.empty() ? nullptr : eval_csv.c_str()));
    if (bench->parsed())
        return finish(railseg_bench(config.get(), bench_ckpt.c_str(), bench_dataset.c_str(),
                                    bench_csv.empty() ? nullptr : bench_csv.c_str(),
                                    bench_stages ? 1 : 0));
    if (ablate->parsed())
        return finish(railseg_ablate(config.get(), ablate_train.c_str(), ablate_eval.c_str(),
                                     ablate_csv.c_str()));
    return int(RAILSEG_ERR_USAGE);
}
