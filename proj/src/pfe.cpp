#include "railseg/pfe.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "railseg/parallel.hpp"

namespace railseg {

namespace {
constexpr double kSqrt2Pi = 2.5066282746310005024;
}

double gaussian_density(double distance, double sigma) {
    if (!(sigma > 0.0)) fail_usage("gaussian_density: sigma must be positive");
    if (distance < 0.0) fail_usage("gaussian_density: distance must be nonnegative");
    return std::exp(-(distance * distance) / (2.0 * sigma * sigma)) / (kSqrt2Pi * sigma);
}

void encode_relative(const Point& center, const Point& neighbor, double neighbor_range,
                     double out[kEncodingDim]) {
    const double rx = neighbor.x - center.x;
    const double ry = neighbor.y - center.y;
    const double rz = neighbor.z - center.z;
    out[1] = center.x;
    out[2] = center.y;
    out[3] = center.z;
    out[4] = neighbor.x;
    out[5] = neighbor.y;
    out[6] = neighbor.z;
    out[7] = rx;
    out[8] = ry;
    out[9] = rz;
    out[10] = std::sqrt(rx * rx + ry * ry + rz * rz);
    out[11] = neighbor.intensity;
    out[12] = neighbor_range;
}

void PfeParams::build(const std::vector<int32_t>& layer_widths, Rng& rng,
                      const std::string& prefix) {
    if (layer_widths.size() < 2) fail_usage("PfeParams: need at least input and output widths");
    widths = layer_widths;
    weights.clear();
    biases.clear();
    for (size_t j = 0; j + 1 < widths.size(); ++j) {
        const int32_t in = widths[j];
        const int32_t out = widths[j + 1];
        weights.emplace_back(prefix + "/w" + std::to_string(j), std::vector<int32_t>{out, in});
        biases.emplace_back(prefix + "/b" + std::to_string(j), std::vector<int32_t>{out});
        init_uniform_fan_in(weights.back(), in, rng);
        if (j == 0) {
            // the encoding mixes meter-scale coordinates with unit-scale
            // intensity and density; dividing the first-layer columns by the
            // typical channel magnitude is input standardization folded into
            // the init and keeps SGD conditioning sane
            static constexpr double kChannelScale[kEncodingDim] = {
                0.8,                 // density
                40.0, 15.0, 4.0,     // center x, y, z
                40.0, 15.0, 4.0,     // neighbor x, y, z
                0.5, 0.5, 0.5,       // relative offset
                0.5,                 // offset norm
                0.5,                 // intensity
                40.0,                // polar range
            };
            if (in == kEncodingDim) {
                for (int32_t o = 0; o < out; ++o)
                    for (int32_t i = 0; i < in; ++i)
                        weights.back().value.data[size_t(o) * in + size_t(i)] /=
                            kChannelScale[i];
            } else if (in == 4) {  // point-MLP ablation: x, y, z, intensity
                static constexpr double kPointScale[4] = {40.0, 15.0, 4.0, 0.5};
                for (int32_t o = 0; o < out; ++o)
                    for (int32_t i = 0; i < in; ++i)
                        weights.back().value.data[size_t(o) * in + size_t(i)] /= kPointScale[i];
            }
        }
    }
}

std::vector<Parameter*> PfeParams::parameters() {
    std::vector<Parameter*> out;
    for (auto& w : weights) out.push_back(&w);
    for (auto& b : biases) out.push_back(&b);
    return out;
}

void build_encodings(const Point& center, const std::vector<Neighbor>& neighbors,
                     const std::vector<Point>& support, const std::vector<double>& support_range,
                     const PfeConfig& config, double* rows) {
    for (size_t k = 0; k < neighbors.size(); ++k) {
        double* row = rows + k * kEncodingDim;
        const Neighbor& nb = neighbors[k];
        encode_relative(center, support[nb.index], support_range[nb.index], row);
        row[0] = config.density_enabled ? gaussian_density(nb.dist, config.sigma) : 0.0;
    }
}

namespace {

// Shared-MLP forward over `n_rows` rows of width widths[0]. Stores post-ReLU
// hidden activations and the linear output rows in the cache.
void mlp_rows_forward(const PfeParams& params, PfeCache& cache, int threads) {
    const int n_layers = int(params.weights.size());
    const int64_t n_rows = cache.n_rows;
    cache.hidden.assign(size_t(n_layers > 1 ? n_layers - 1 : 0), {});
    for (int j = 0; j + 1 < n_layers; ++j)
        cache.hidden[size_t(j)].assign(size_t(n_rows) * size_t(params.widths[j + 1]), 0.0);
    cache.out_rows.assign(size_t(n_rows) * size_t(params.widths.back()), 0.0);

    parallel_chunks(n_rows, threads, [&](int64_t begin, int64_t end, int) {
        for (int64_t r = begin; r < end; ++r) {
            const double* in = cache.encodings.data() + r * params.widths[0];
            for (int j = 0; j < n_layers; ++j) {
                const int in_w = params.widths[j];
                const int out_w = params.widths[j + 1];
                const double* w = params.weights[size_t(j)].value.data.data();
                const double* b = params.biases[size_t(j)].value.data.data();
                double* out = j + 1 < n_layers
                                  ? cache.hidden[size_t(j)].data() + r * out_w
                                  : cache.out_rows.data() + r * out_w;
                for (int o = 0; o < out_w; ++o) {
                    const double* wrow = w + int64_t(o) * in_w;
                    double acc = b[o];
                    for (int i = 0; i < in_w; ++i) acc += wrow[i] * in[i];
                    out[o] = (j + 1 < n_layers && acc < 0.0) ? 0.0 : acc;
                }
                in = out;
            }
        }
    });
}

// Backward through the shared MLP given per-row output gradients. Parameter
// gradients accumulate per chunk and reduce in chunk order, which keeps the
// result identical for a fixed thread count.
void mlp_rows_backward(const std::vector<double>& grad_out_rows, const PfeCache& cache,
                       PfeParams& params, int threads) {
    const int n_layers = int(params.weights.size());
    const int64_t n_rows = cache.n_rows;
    const int in_dim = params.widths[0];

    int64_t param_count = 0;
    for (int j = 0; j < n_layers; ++j)
        param_count += params.weights[size_t(j)].value.size() + params.biases[size_t(j)].value.size();

    const int used_threads = (threads <= 1 || n_rows < 2 * threads) ? 1 : threads;
    const size_t n_partials = size_t(used_threads);
    std::vector<std::vector<double>> partials(n_partials);

    parallel_chunks(n_rows, used_threads, [&](int64_t begin, int64_t end, int chunk) {
        std::vector<double>& acc = partials[size_t(chunk)];
        acc.assign(size_t(param_count), 0.0);
        std::vector<double> dcur, dprev;
        for (int64_t r = begin; r < end; ++r) {
            dcur.assign(grad_out_rows.begin() + r * params.widths.back(),
                        grad_out_rows.begin() + (r + 1) * params.widths.back());
            for (int j = n_layers - 1; j >= 0; --j) {
                const int in_w = params.widths[j];
                const int out_w = params.widths[j + 1];
                const double* in_act =
                    j == 0 ? cache.encodings.data() + r * in_dim
                           : cache.hidden[size_t(j - 1)].data() + r * in_w;
                // offset of this layer's slice inside the flat accumulator
                int64_t off = 0;
                for (int q = 0; q < j; ++q)
                    off += params.weights[size_t(q)].value.size() +
                           params.biases[size_t(q)].value.size();
                double* dw = acc.data() + off;
                double* db = dw + int64_t(out_w) * in_w;
                const double* w = params.weights[size_t(j)].value.data.data();
                if (j > 0) dprev.assign(size_t(in_w), 0.0);
                for (int o = 0; o < out_w; ++o) {
                    const double g = dcur[size_t(o)];
                    if (g == 0.0) continue;
                    const double* wrow = w + int64_t(o) * in_w;
                    double* dwrow = dw + int64_t(o) * in_w;
                    for (int i = 0; i < in_w; ++i) {
                        dwrow[i] += g * in_act[i];
                        if (j > 0) dprev[size_t(i)] += g * wrow[i];
                    }
                    db[o] += g;
                }
                if (j > 0) {
                    // ReLU gate: activation stored post-ReLU, zero means closed
                    for (int i = 0; i < in_w; ++i)
                        if (in_act[i] <= 0.0) dprev[size_t(i)] = 0.0;
                    dcur.swap(dprev);
                }
            }
        }
    });

    int64_t off = 0;
    for (int j = 0; j < n_layers; ++j) {
        auto& wg = params.weights[size_t(j)].grad.data;
        auto& bg = params.biases[size_t(j)].grad.data;
        for (auto& acc : partials) {
            if (acc.empty()) continue;
            for (size_t i = 0; i < wg.size(); ++i) wg[i] += acc[size_t(off) + i];
            for (size_t i = 0; i < bg.size(); ++i) bg[i] += acc[size_t(off) + wg.size() + i];
        }
        off += int64_t(wg.size() + bg.size());
    }
}

void maxpool_rows(const PfeParams& params, PfeCache& cache, std::vector<double>& features) {
    const int out_w = params.output_dim();
    const int k = cache.k;
    features.assign(size_t(cache.n_reps) * size_t(out_w), 0.0);
    cache.argmax.assign(size_t(cache.n_reps) * size_t(out_w), 0);
    for (int n = 0; n < cache.n_reps; ++n) {
        for (int c = 0; c < out_w; ++c) {
            int32_t best_row = int32_t(n) * k;
            double best = cache.out_rows[size_t(best_row) * out_w + c];
            for (int j = 1; j < k; ++j) {
                const int32_t row = int32_t(n) * k + j;
                const double v = cache.out_rows[size_t(row) * out_w + c];
                if (v > best) {  // strict: ties keep the lowest neighbor row
                    best = v;
                    best_row = row;
                }
            }
            features[size_t(n) * out_w + c] = best;
            cache.argmax[size_t(n) * out_w + c] = best_row;
        }
    }
}

}  // namespace

void pfe_forward(const std::vector<Point>& reps, const std::vector<Point>& support,
                 const std::vector<double>& support_range, const KnnIndex& index,
                 const PfeParams& params, const PfeConfig& config,
                 std::vector<double>& features, PfeCache* cache, int threads) {
    if (params.input_dim() != kEncodingDim)
        fail_usage("pfe_forward: MLP input width must match the encoding width");
    if (config.k < 1) fail_usage("pfe_forward: K must be >= 1");

    PfeCache local;
    PfeCache& c = cache ? *cache : local;
    c.n_reps = int(reps.size());
    c.k = config.k;
    c.n_rows = int(reps.size()) * config.k;
    c.encodings.assign(size_t(c.n_rows) * kEncodingDim, 0.0);

    parallel_chunks(int64_t(reps.size()), threads, [&](int64_t begin, int64_t end, int) {
        std::vector<Neighbor> scratch;
        for (int64_t n = begin; n < end; ++n) {
            index.query(reps[size_t(n)], config.k, scratch);
            build_encodings(reps[size_t(n)], scratch, support, support_range, config,
                            c.encodings.data() + n * config.k * kEncodingDim);
        }
    });

    mlp_rows_forward(params, c, threads);
    maxpool_rows(params, c, features);
}

void pfe_backward(const std::vector<double>& upstream, const PfeCache& cache, PfeParams& params,
                  int threads) {
    if (cache.n_rows == 0 || cache.argmax.empty())
        fail_usage("pfe_backward: no cached forward pass");
    const int out_w = params.output_dim();
    std::vector<double> grad_rows(size_t(cache.n_rows) * size_t(out_w), 0.0);
    for (int n = 0; n < cache.n_reps; ++n)
        for (int c = 0; c < out_w; ++c) {
            const int32_t row = cache.argmax[size_t(n) * out_w + c];
            grad_rows[size_t(row) * out_w + c] += upstream[size_t(n) * out_w + c];
        }
    mlp_rows_backward(grad_rows, cache, params, threads);
}

void point_mlp_forward(const std::vector<Point>& reps, const PfeParams& params,
                       std::vector<double>& features, PfeCache* cache, int threads) {
    if (params.input_dim() != 4)
        fail_usage("point_mlp_forward: expects a 4-wide input layer");
    PfeCache local;
    PfeCache& c = cache ? *cache : local;
    c.n_reps = int(reps.size());
    c.k = 1;
    c.n_rows = int(reps.size());
    c.encodings.assign(size_t(c.n_rows) * 4, 0.0);
    for (size_t n = 0; n < reps.size(); ++n) {
        double* row = c.encodings.data() + n * 4;
        row[0] = reps[n].x;
        row[1] = reps[n].y;
        row[2] = reps[n].z;
        row[3] = reps[n].intensity;
    }
    mlp_rows_forward(params, c, threads);
    maxpool_rows(params, c, features);
}

void point_mlp_backward(const std::vector<double>& upstream, const PfeCache& cache,
                        PfeParams& params) {
    pfe_backward(upstream, cache, params);
}

void write_encoding_dump(const std::string& path, const PfeCache& cache,
                         const std::vector<double>& pooled, int output_dim) {
    std::ofstream out(path);
    if (!out) fail_data("encoding dump: cannot open for writing: " + path);
    const int width = cache.n_rows > 0 ? int(cache.encodings.size() / size_t(cache.n_rows)) : 0;
    out << "voxel,row,values...\n";
    char buf[32];
    for (int n = 0; n < cache.n_reps; ++n) {
        for (int k = 0; k < cache.k; ++k) {
            out << n << ",enc" << k;
            const double* row = cache.encodings.data() + size_t(n * cache.k + k) * size_t(width);
            for (int c = 0; c < width; ++c) {
                std::snprintf(buf, sizeof(buf), ",%.9g", row[c]);
                out << buf;
            }
            out << "\n";
        }
        out << n << ",pooled";
        for (int c = 0; c < output_dim; ++c) {
            std::snprintf(buf, sizeof(buf), ",%.9g", pooled[size_t(n) * size_t(output_dim) + c]);
            out << buf;
        }
        out << "\n";
    }
    if (!out) fail_data("encoding dump: write failed: " + path);
}

}  // namespace railseg
