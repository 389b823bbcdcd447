#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "railseg/partition.hpp"
#include "railseg/types.hpp"

namespace railseg {

struct ConfusionCounts {
    uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

// Zero denominators are reported as absent, never as 0 or 1.
struct Metrics {
    std::optional<double> iou;
    std::optional<double> precision;
    std::optional<double> recall;
};

Metrics metrics_from_counts(const ConfusionCounts& c);

struct FrameMetrics {
    int64_t frame_id = 0;
    std::string group;  // topology or sequence tag when known
    ConfusionCounts counts;
    Metrics metrics;
};

struct MetricsReport {
    std::vector<FrameMetrics> frames;
    ConfusionCounts pooled;
    Metrics pooled_metrics;
    Metrics mean_of_frames;  // mean over frames where the metric is defined

    void finish();  // fills pooled/mean rows from `frames`
};

// Per-point comparison; ground-truth unlabeled points are excluded.
ConfusionCounts compute_confusion(const std::vector<uint8_t>& predicted,
                                  const std::vector<uint8_t>& ground_truth);

// Projects per-voxel class predictions onto the original cloud: every member
// point inherits its voxel's class, points outside the crop or partition are
// background.
std::vector<uint8_t> voxels_to_points(const std::vector<uint8_t>& voxel_pred,
                                      const PointVoxelMap& map, const Frame& cropped,
                                      size_t original_point_count);

std::vector<uint8_t> labels_of(const Frame& frame);

// Human-readable per-frame table with a mean row, and the CSV twin.
std::string format_metrics_table(const MetricsReport& report);
void write_metrics_csv(const std::string& path, const MetricsReport& report);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace railseg
