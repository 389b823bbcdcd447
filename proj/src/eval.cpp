#include "railseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "railseg/common.hpp"

namespace railseg {

Metrics metrics_from_counts(const ConfusionCounts& c) {
    Metrics m;
    if (c.tp + c.fp + c.fn > 0) m.iou = double(c.tp) / double(c.tp + c.fp + c.fn);
    if (c.tp + c.fp > 0) m.precision = double(c.tp) / double(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = double(c.tp) / double(c.tp + c.fn);
    return m;
}

ConfusionCounts compute_confusion(const std::vector<uint8_t>& predicted,
                                  const std::vector<uint8_t>& ground_truth) {
    if (predicted.size() != ground_truth.size())
        fail_data("compute_confusion: prediction and ground-truth lengths differ");
    ConfusionCounts c;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const uint8_t gt = ground_truth[i];
        if (gt > 1) continue;  // unlabeled ground truth is excluded
        const bool pred_rail = predicted[i] == 1;
        const bool gt_rail = gt == 1;
        if (pred_rail && gt_rail) ++c.tp;
        else if (pred_rail && !gt_rail) ++c.fp;
        else if (!pred_rail && gt_rail) ++c.fn;
        else ++c.tn;
    }
    return c;
}

std::vector<uint8_t> voxels_to_points(const std::vector<uint8_t>& voxel_pred,
                                      const PointVoxelMap& map, const Frame& cropped,
                                      size_t original_point_count) {
    if (voxel_pred.size() != map.voxels.size())
        fail_data("voxels_to_points: prediction count does not cover the occupied voxels");
    if (map.point_to_voxel.size() != cropped.size())
        fail_data("voxels_to_points: map does not match the cropped frame");
    std::vector<uint8_t> out(original_point_count, 0);  // uncovered points -> background
    for (size_t i = 0; i < cropped.size(); ++i) {
        const int32_t slot = map.point_to_voxel[i];
        if (slot < 0) continue;
        const int32_t orig = cropped.original_index_of(i);
        if (orig < 0 || size_t(orig) >= original_point_count)
            fail_data("voxels_to_points: original index out of range");
        out[size_t(orig)] = voxel_pred[size_t(slot)];
    }
    return out;
}

std::vector<uint8_t> labels_of(const Frame& frame) {
    std::vector<uint8_t> out(frame.size());
    for (size_t i = 0; i < frame.size(); ++i) out[i] = uint8_t(frame.points[i].label);
    return out;
}

void MetricsReport::finish() {
    pooled = {};
    for (const FrameMetrics& f : frames) pooled += f.counts;
    pooled_metrics = metrics_from_counts(pooled);

    auto mean_of = [&](auto pick) -> std::optional<double> {
        double sum = 0.0;
        size_t n = 0;
        for (const FrameMetrics& f : frames) {
            const std::optional<double> v = pick(f.metrics);
            if (v) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / double(n);
    };
    mean_of_frames.iou = mean_of([](const Metrics& m) { return m.iou; });
    mean_of_frames.precision = mean_of([](const Metrics& m) { return m.precision; });
    mean_of_frames.recall = mean_of([](const Metrics& m) { return m.recall; });
}

namespace {

std::string pct(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return buf;
}

}  // namespace

std::string format_metrics_table(const MetricsReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %10s %13s %10s\n", "sequence", "IoU(%)",
                  "Precision(%)", "Recall(%)");
    out += line;
    for (const FrameMetrics& f : report.frames) {
        std::string name = f.group.empty() ? "frame_" + std::to_string(f.frame_id)
                                           : f.group + "_" + std::to_string(f.frame_id);
        std::snprintf(line, sizeof(line), "%-16s %10s %13s %10s\n", name.c_str(),
                      pct(f.metrics.iou).c_str(), pct(f.metrics.precision).c_str(),
                      pct(f.metrics.recall).c_str());
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-16s %10s %13s %10s\n", "mean",
                  pct(report.mean_of_frames.iou).c_str(),
                  pct(report.mean_of_frames.precision).c_str(),
                  pct(report.mean_of_frames.recall).c_str());
    out += line;
    std::snprintf(line, sizeof(line), "%-16s %10s %13s %10s\n", "pooled",
                  pct(report.pooled_metrics.iou).c_str(),
                  pct(report.pooled_metrics.precision).c_str(),
                  pct(report.pooled_metrics.recall).c_str());
    out += line;
    return out;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) fail_data("metrics: cannot open for writing: " + path);
    out << "frame,group,tp,fp,fn,tn,iou,precision,recall\n";
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("undefined");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", *v);
        return std::string(buf);
    };
    for (const FrameMetrics& f : report.frames)
        out << f.frame_id << "," << f.group << "," << f.counts.tp << "," << f.counts.fp << ","
            << f.counts.fn << "," << f.counts.tn << "," << cell(f.metrics.iou) << ","
            << cell(f.metrics.precision) << "," << cell(f.metrics.recall) << "\n";
    out << "mean,,,,,," << cell(report.mean_of_frames.iou) << ","
        << cell(report.mean_of_frames.precision) << "," << cell(report.mean_of_frames.recall)
        << "\n";
    out << "pooled,," << report.pooled.tp << "," << report.pooled.fp << "," << report.pooled.fn
        << "," << report.pooled.tn << "," << cell(report.pooled_metrics.iou) << ","
        << cell(report.pooled_metrics.precision) << "," << cell(report.pooled_metrics.recall)
        << "\n";
    if (!out) fail_data("metrics: write failed: " + path);
}

namespace {

std::vector<double> ranks_with_ties(const std::vector<double>& xs) {
    const size_t n = xs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = 0.5 * (double(i) + double(j)) + 1.0;
        for (size_t q = i; q <= j; ++q) rank[order[q]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        fail_usage("spearman: need two same-length series");
    const std::vector<double> rx = ranks_with_ties(xs);
    const std::vector<double> ry = ranks_with_ties(ys);
    const double n = double(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double a = rx[i] - mx;
        const double b = ry[i] - my;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx <= 0.0 || syy <= 0.0) fail_numeric("spearman: degenerate rank variance");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace railseg
