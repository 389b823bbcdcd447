#pragma once

#include <memory>
#include <string>
#include <vector>

#include "railseg/sparse_conv.hpp"
#include "railseg/sparse_tensor.hpp"
#include "railseg/tensor.hpp"

namespace railseg {

// Per-channel normalization over the active sites, with running statistics
// for inference. Training-mode forward never touches the running stats; the
// train loop commits them explicitly after the step.
class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(const std::string& name, int32_t channels);

    SparseTensor forward(const SparseTensor& x, bool training);
    std::vector<double> backward(const std::vector<double>& grad_out);
    void commit_running_stats(double momentum = 0.1);

    std::vector<Parameter*> parameters() { return {&gamma_, &beta_}; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }

    static constexpr double kEps = 1e-5;

private:
    int32_t channels_ = 0;
    Parameter gamma_, beta_;
    Tensor running_mean_, running_var_;

    // cache
    std::vector<double> xhat_;
    std::vector<double> batch_mean_, batch_var_;
    size_t n_sites_ = 0;
    bool cached_train_ = false;
};

// MobileNet-style inverted residual at fixed resolution: 1x1x1 expand (2x),
// 3x3x3 submanifold, 1x1x1 project, residual add. Channel count is preserved
// so the add is always valid.
class InvertedResidual {
public:
    InvertedResidual() = default;
    InvertedResidual(const std::string& name, int32_t channels, Rng& rng);

    SparseTensor forward(const SparseTensor& x, bool training, int threads);
    std::vector<double> backward(const std::vector<double>& grad_out, int threads);
    void collect(std::vector<Parameter*>& out);
    void collect_norms(std::vector<BatchNorm*>& out);

private:
    SparseConv expand_, conv_, project_;
    BatchNorm bn1_, bn2_, bn3_;
    std::vector<double> relu1_mask_, relu2_mask_;  // post-ReLU activations
};

// Residual body followed by a stride-2 conv that halves each axis and doubles
// the channels.
class DownBlock {
public:
    DownBlock() = default;
    DownBlock(const std::string& name, int32_t channels, Rng& rng);

    // Returns the downsampled tensor; `skip` receives the pre-stride features.
    SparseTensor forward(const SparseTensor& x, SparseTensor& skip, bool training, int threads);
    std::vector<double> backward(const std::vector<double>& grad_out,
                                 const std::vector<double>& grad_skip, int threads);
    void collect(std::vector<Parameter*>& out);
    void collect_norms(std::vector<BatchNorm*>& out);

private:
    InvertedResidual body_;
    SparseConv down_;
    BatchNorm bn_down_;
    std::vector<double> relu_mask_;
};

// Transpose-strided upsampling onto the skip's site set, concat with the
// skip, 1x1x1 fusion, then a residual body.
class UpBlock {
public:
    UpBlock() = default;
    UpBlock(const std::string& name, int32_t in_channels, int32_t out_channels, Rng& rng);

    SparseTensor forward(const SparseTensor& x, const SparseTensor& skip, bool training,
                         int threads);
    // Fills grad wrt x and wrt skip.
    void backward(const std::vector<double>& grad_out, std::vector<double>& grad_x,
                  std::vector<double>& grad_skip, int threads);
    void collect(std::vector<Parameter*>& out);
    void collect_norms(std::vector<BatchNorm*>& out);

private:
    SparseConv up_;
    BatchNorm bn_up_;
    SparseConv fuse_;
    BatchNorm bn_fuse_;
    InvertedResidual body_;
    std::vector<double> relu_up_mask_, relu_fuse_mask_;
    size_t skip_channels_ = 0;
    size_t up_channels_ = 0;
};

// Prediction head: three rank-1 submanifold convolutions (3x1x1, 1x3x1,
// 1x1x3) summed into per-voxel class logits.
class Rank1Head {
public:
    Rank1Head() = default;
    Rank1Head(const std::string& name, int32_t in_channels, int32_t classes, Rng& rng);

    SparseTensor forward(const SparseTensor& x, int threads);
    std::vector<double> backward(const std::vector<double>& grad_out, int threads);
    void collect(std::vector<Parameter*>& out);

private:
    SparseConv conv_pitch_, conv_horiz_, conv_range_;
};

struct NetworkConfig {
    std::vector<int32_t> encoder_channels = {16, 32, 64, 128, 256};
    int32_t classes = 2;
    uint64_t init_seed = 1;
};

// Encoder-decoder over sparse voxel features: four down blocks, four up
// blocks with skips, rank-1 head.
class Network {
public:
    Network() = default;
    explicit Network(const NetworkConfig& config);

    SparseTensor forward(const SparseTensor& input, bool training, int threads);
    // Upstream gradient on the logits; returns gradient wrt the input features.
    std::vector<double> backward(const std::vector<double>& grad_logits, int threads);

    void commit_running_stats(double momentum = 0.1);
    std::vector<Parameter*> parameters();
    std::vector<BatchNorm*> norms();
    const NetworkConfig& config() const { return config_; }

private:
    NetworkConfig config_;
    std::vector<DownBlock> down_;
    std::vector<UpBlock> up_;
    Rank1Head head_;
    std::vector<SparseTensor> skips_;
    SparseTensor input_copy_;
};

// Weighted cross-entropy over voxel logits. Rows with label `unlabeled` are
// excluded. Returns the mean loss; writes softmax-minus-onehot gradients
// normalized by the total weight.
double cross_entropy(const SparseTensor& logits, const std::vector<uint8_t>& labels,
                     const double class_weights[2], std::vector<double>& grad,
                     size_t* counted = nullptr);

}  // namespace railseg
