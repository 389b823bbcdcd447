#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "railseg/knn.hpp"
#include "railseg/tensor.hpp"
#include "railseg/types.hpp"

namespace railseg {

// Per-neighbor encoding width: [rho | center xyz | neighbor xyz | rel xyz |
// |rel| | neighbor intensity | neighbor polar range].
constexpr int kEncodingDim = 13;

// Gaussian density feature: exp(-d^2 / 2 sigma^2) / (sqrt(2 pi) sigma).
double gaussian_density(double distance, double sigma);

// Fills the 13-slot layout; the rho slot (index 0) is written by the caller.
void encode_relative(const Point& center, const Point& neighbor, double neighbor_range,
                     double out[kEncodingDim]);

// Shared MLP applied to each neighbor encoding, then channelwise max over the
// K neighbors. Hidden layers ReLU, output linear.
struct PfeParams {
    std::vector<int32_t> widths;  // e.g. {13, 64, 64, 16}
    std::vector<Parameter> weights;  // [out x in] per layer
    std::vector<Parameter> biases;   // [out] per layer

    void build(const std::vector<int32_t>& layer_widths, Rng& rng, const std::string& prefix);
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    std::vector<Parameter*> parameters();
};

struct PfeConfig {
    int k = 4;
    double sigma = 0.5;
    bool density_enabled = true;  // ablation: zero the rho channel
};

// Cached activations of one forward pass, consumed by pfe_backward.
struct PfeCache {
    int n_rows = 0;       // representatives x K
    int n_reps = 0;
    int k = 0;
    std::vector<double> encodings;                // [rows x 13]
    std::vector<std::vector<double>> hidden;      // post-ReLU per layer, [rows x width]
    std::vector<double> out_rows;                 // final layer, pre-pool
    std::vector<int32_t> argmax;                  // [reps x out_dim] winning row
};

// Encondings for one representative against its K neighbors.
void build_encodings(const Point& center, const std::vector<Neighbor>& neighbors,
                     const std::vector<Point>& support, const std::vector<double>& support_range,
                     const PfeConfig& config, double* rows);

// Forward over all representatives. `features` ends up [reps x output_dim].
void pfe_forward(const std::vector<Point>& reps, const std::vector<Point>& support,
                 const std::vector<double>& support_range, const KnnIndex& index,
                 const PfeParams& params, const PfeConfig& config,
                 std::vector<double>& features, PfeCache* cache, int threads = 1);

// Exact gradients wrt MLP parameters; max-pool routes each channel's gradient
// to its argmax row (ties already resolved to the lowest row in forward).
void pfe_backward(const std::vector<double>& upstream, const PfeCache& cache, PfeParams& params,
                  int threads = 1);

// Ablation path: per-representative MLP on [x, y, z, intensity], no neighbors.
void point_mlp_forward(const std::vector<Point>& reps, const PfeParams& params,
                       std::vector<double>& features, PfeCache* cache, int threads = 1);
void point_mlp_backward(const std::vector<double>& upstream, const PfeCache& cache,
                        PfeParams& params);

// Debug dump: per query, the K encoding rows and the pooled feature.
void write_encoding_dump(const std::string& path, const PfeCache& cache,
                         const std::vector<double>& pooled, int output_dim);

}  // namespace railseg
