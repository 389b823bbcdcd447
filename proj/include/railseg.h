/* railseg — rail point-cloud segmentation pipeline, C interface.
 *
 * All functions return railseg_status; RAILSEG_OK is 0 and the nonzero codes
 * double as process exit codes. railseg_last_error() describes the most
 * recent failure on the calling thread.
 */
#ifndef RAILSEG_H
#define RAILSEG_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum railseg_status {
    RAILSEG_OK = 0,
    RAILSEG_ERR_USAGE = 1,   /* bad arguments or configuration */
    RAILSEG_ERR_DATA = 2,    /* unreadable, corrupt or mismatched data */
    RAILSEG_ERR_NUMERIC = 3  /* numeric failure (NaN loss, failed contract) */
} railseg_status;

/* Opaque pipeline configuration handle. */
typedef struct railseg_config railseg_config;

const char* railseg_version(void);
const char* railseg_last_error(void);

/* Configuration: create with built-in defaults, load from a config file, or
 * adjust single `section.key` entries. The caller owns the handle. */
railseg_config* railseg_config_create(void);
railseg_config* railseg_config_load(const char* path);
void railseg_config_destroy(railseg_config* config);
railseg_status railseg_config_set(railseg_config* config, const char* key, const char* value);
railseg_status railseg_config_get(const railseg_config* config, const char* key, char* buffer,
                                  size_t buffer_size);
railseg_status railseg_config_save(const railseg_config* config, const char* path);

/* Generate a labeled synthetic dataset (RPCF frames + manifest.csv).
 * `mix` is a weighted topology list, e.g. "straight=0.4,curve=0.4,crossed=0.2". */
railseg_status railseg_synth(const railseg_config* config, const char* out_dir, int n_frames,
                             const char* mix, unsigned long long seed);

/* Train on every .rpcf frame in dataset_dir; writes the checkpoint and an
 * optional per-epoch CSV log. resume_checkpoint may be NULL. */
railseg_status railseg_train(const railseg_config* config, const char* dataset_dir,
                             const char* checkpoint_out, const char* log_csv,
                             const char* resume_checkpoint);

/* Run inference over a frame file or a directory of frames; writes one
 * predicted-label PLY per input frame. */
railseg_status railseg_infer(const railseg_config* config, const char* checkpoint,
                             const char* input_path, const char* out_dir);

/* Point-level IoU / precision / recall of predicted frames against ground
 * truth, matched by frame id. Prints the table; out_csv may be NULL. */
railseg_status railseg_eval(const railseg_config* config, const char* pred_dir,
                            const char* gt_dir, const char* out_csv);

/* Per-frame latency benchmark; writes (points, ms) rows and asserts a
 * positive rank correlation. */
railseg_status railseg_bench(const railseg_config* config, const char* checkpoint,
                             const char* dataset_dir, const char* out_csv, int with_stages);

/* Train and evaluate every ablation variant; writes the comparison CSV. */
railseg_status railseg_ablate(const railseg_config* config, const char* train_dir,
                              const char* eval_dir, const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* RAILSEG_H */
