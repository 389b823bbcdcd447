#include "railseg.h"

#include <cstring>
#include <functional>
#include <string>

#include "railseg/common.hpp"
#include "railseg/config.hpp"
#include "railseg/pipeline.hpp"

using namespace railseg;

struct railseg_config {
    PipelineConfig config;
};

namespace {

thread_local std::string g_last_error;

railseg_status run_guarded(const char* what, const std::function<void()>& fn) {
    try {
        fn();
        g_last_error.clear();
        return RAILSEG_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return railseg_status(int(e.code()));
    } catch (const std::exception& e) {
        g_last_error = std::string(what) + ": " + e.what();
        return RAILSEG_ERR_DATA;
    }
}

const PipelineConfig& cfg(const railseg_config* c) { return c->config; }

}  // namespace

extern "C" {

const char* railseg_version(void) { return kVersion; }

const char* railseg_last_error(void) { return g_last_error.c_str(); }

railseg_config* railseg_config_create(void) {
    return new railseg_config{default_config()};
}

railseg_config* railseg_config_load(const char* path) {
    if (!path) {
        g_last_error = "config_load: path is null";
        return nullptr;
    }
    try {
        auto* handle = new railseg_config{load_config_file(path)};
        g_last_error.clear();
        return handle;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return nullptr;
    }
}

void railseg_config_destroy(railseg_config* config) { delete config; }

railseg_status railseg_config_set(railseg_config* config, const char* key, const char* value) {
    if (!config || !key || !value) {
        g_last_error = "config_set: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("config_set", [&] { config_set(config->config, key, value); });
}

railseg_status railseg_config_get(const railseg_config* config, const char* key, char* buffer,
                                  size_t buffer_size) {
    if (!config || !key || !buffer || buffer_size == 0) {
        g_last_error = "config_get: null argument";
        return RAILSEG_ERR_USAGE;
    }
    std::string value;
    const railseg_status st =
        run_guarded("config_get", [&] { value = config_get(config->config, key); });
    if (st != RAILSEG_OK) return st;
    if (value.size() + 1 > buffer_size) {
        g_last_error = "config_get: buffer too small";
        return RAILSEG_ERR_USAGE;
    }
    std::memcpy(buffer, value.c_str(), value.size() + 1);
    return RAILSEG_OK;
}

railseg_status railseg_config_save(const railseg_config* config, const char* path) {
    if (!config || !path) {
        g_last_error = "config_save: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("config_save", [&] { save_config_file(config->config, path); });
}

railseg_status railseg_synth(const railseg_config* config, const char* out_dir, int n_frames,
                             const char* mix, unsigned long long seed) {
    if (!config || !out_dir || !mix) {
        g_last_error = "synth: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("synth",
                       [&] { cmd_synth(cfg(config), out_dir, n_frames, mix, uint64_t(seed)); });
}

railseg_status railseg_train(const railseg_config* config, const char* dataset_dir,
                             const char* checkpoint_out, const char* log_csv,
                             const char* resume_checkpoint) {
    if (!config || !dataset_dir || !checkpoint_out) {
        g_last_error = "train: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("train", [&] {
        cmd_train(cfg(config), dataset_dir, checkpoint_out, log_csv ? log_csv : "",
                  resume_checkpoint ? resume_checkpoint : "");
    });
}

railseg_status railseg_infer(const railseg_config* config, const char* checkpoint,
                             const char* input_path, const char* out_dir) {
    if (!config || !checkpoint || !input_path || !out_dir) {
        g_last_error = "infer: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("infer",
                       [&] { cmd_infer(cfg(config), checkpoint, input_path, out_dir); });
}

railseg_status railseg_eval(const railseg_config* config, const char* pred_dir,
                            const char* gt_dir, const char* out_csv) {
    if (!config || !pred_dir || !gt_dir) {
        g_last_error = "eval: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("eval",
                       [&] { cmd_eval(cfg(config), pred_dir, gt_dir, out_csv ? out_csv : ""); });
}

railseg_status railseg_bench(const railseg_config* config, const char* checkpoint,
                             const char* dataset_dir, const char* out_csv, int with_stages) {
    if (!config || !checkpoint || !dataset_dir) {
        g_last_error = "bench: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("bench", [&] {
        cmd_bench(cfg(config), checkpoint, dataset_dir, out_csv ? out_csv : "",
                  with_stages != 0);
    });
}

railseg_status railseg_ablate(const railseg_config* config, const char* train_dir,
                              const char* eval_dir, const char* out_csv) {
    if (!config || !train_dir || !eval_dir || !out_csv) {
        g_last_error = "ablate: null argument";
        return RAILSEG_ERR_USAGE;
    }
    return run_guarded("ablate",
                       [&] { cmd_ablate(cfg(config), train_dir, eval_dir, out_csv); });
}

}  // extern "C"
