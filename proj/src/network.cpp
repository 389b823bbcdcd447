#include "railseg/network.hpp"

#include <algorithm>
#include <cmath>

namespace railseg {

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(const std::string& name, int32_t channels) : channels_(channels) {
    gamma_ = Parameter(name + "/gamma", {channels});
    beta_ = Parameter(name + "/beta", {channels});
    std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), 1.0);
    running_mean_ = Tensor({channels});
    running_var_ = Tensor({channels});
    std::fill(running_var_.data.begin(), running_var_.data.end(), 1.0);
}

SparseTensor BatchNorm::forward(const SparseTensor& x, bool training) {
    if (x.channels != channels_) fail_usage("BatchNorm: channel mismatch");
    const size_t n = x.site_count();
    SparseTensor out = x;

    const double* mean;
    const double* var;
    if (training) {
        if (n == 0) fail_usage("BatchNorm: empty tensor in training mode");
        batch_mean_.assign(size_t(channels_), 0.0);
        batch_var_.assign(size_t(channels_), 0.0);
        for (size_t r = 0; r < n; ++r) {
            const double* f = x.feature(r);
            for (int32_t c = 0; c < channels_; ++c) batch_mean_[size_t(c)] += f[c];
        }
        for (int32_t c = 0; c < channels_; ++c) batch_mean_[size_t(c)] /= double(n);
        for (size_t r = 0; r < n; ++r) {
            const double* f = x.feature(r);
            for (int32_t c = 0; c < channels_; ++c) {
                const double d = f[c] - batch_mean_[size_t(c)];
                batch_var_[size_t(c)] += d * d;
            }
        }
        for (int32_t c = 0; c < channels_; ++c) batch_var_[size_t(c)] /= double(n);
        mean = batch_mean_.data();
        var = batch_var_.data();
        xhat_.resize(n * size_t(channels_));
        n_sites_ = n;
        cached_train_ = true;
    } else {
        mean = running_mean_.data.data();
        var = running_var_.data.data();
        cached_train_ = false;
    }

    const double* g = gamma_.value.data.data();
    const double* b = beta_.value.data.data();
    for (size_t r = 0; r < n; ++r) {
        double* f = out.feature(r);
        for (int32_t c = 0; c < channels_; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + kEps);
            const double xh = (f[c] - mean[c]) * inv;
            if (training) xhat_[r * size_t(channels_) + size_t(c)] = xh;
            f[c] = g[c] * xh + b[c];
        }
    }
    return out;
}

std::vector<double> BatchNorm::backward(const std::vector<double>& grad_out) {
    if (!cached_train_) fail_usage("BatchNorm: backward without a training forward");
    const size_t n = n_sites_;
    const double inv_n = 1.0 / double(n);

    std::vector<double> sum_g(size_t(channels_), 0.0);
    std::vector<double> sum_gx(size_t(channels_), 0.0);
    for (size_t r = 0; r < n; ++r)
        for (int32_t c = 0; c < channels_; ++c) {
            const double gv = grad_out[r * size_t(channels_) + size_t(c)];
            sum_g[size_t(c)] += gv;
            sum_gx[size_t(c)] += gv * xhat_[r * size_t(channels_) + size_t(c)];
        }

    double* dg = gamma_.grad.data.data();
    double* db = beta_.grad.data.data();
    for (int32_t c = 0; c < channels_; ++c) {
        dg[c] += sum_gx[size_t(c)];
        db[c] += sum_g[size_t(c)];
    }

    const double* g = gamma_.value.data.data();
    std::vector<double> grad_in(n * size_t(channels_));
    for (size_t r = 0; r < n; ++r)
        for (int32_t c = 0; c < channels_; ++c) {
            const double inv = 1.0 / std::sqrt(batch_var_[size_t(c)] + kEps);
            const double gv = grad_out[r * size_t(channels_) + size_t(c)];
            const double xh = xhat_[r * size_t(channels_) + size_t(c)];
            grad_in[r * size_t(channels_) + size_t(c)] =
                g[c] * inv * (gv - inv_n * sum_g[size_t(c)] - xh * inv_n * sum_gx[size_t(c)]);
        }
    return grad_in;
}

void BatchNorm::commit_running_stats(double momentum) {
    if (!cached_train_) return;
    for (int32_t c = 0; c < channels_; ++c) {
        running_mean_.data[size_t(c)] =
            (1.0 - momentum) * running_mean_.data[size_t(c)] + momentum * batch_mean_[size_t(c)];
        running_var_.data[size_t(c)] =
            (1.0 - momentum) * running_var_.data[size_t(c)] + momentum * batch_var_[size_t(c)];
    }
}

namespace {

void relu_inplace(SparseTensor& t, std::vector<double>& mask_store) {
    mask_store.assign(t.features.begin(), t.features.end());
    for (double& v : t.features)
        if (v < 0.0) v = 0.0;
}

void gate_by_mask(std::vector<double>& grad, const std::vector<double>& mask) {
    for (size_t i = 0; i < grad.size(); ++i)
        if (mask[i] <= 0.0) grad[i] = 0.0;
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// InvertedResidual
// ---------------------------------------------------------------------------

InvertedResidual::InvertedResidual(const std::string& name, int32_t channels, Rng& rng) {
    const int32_t mid = 2 * channels;
    expand_ = SparseConv(name + "/expand",
                         {ConvKind::submanifold, {1, 1, 1}, channels, mid, false}, rng);
    conv_ = SparseConv(name + "/conv", {ConvKind::submanifold, {3, 3, 3}, mid, mid, false}, rng);
    project_ = SparseConv(name + "/project",
                          {ConvKind::submanifold, {1, 1, 1}, mid, channels, false}, rng);
    bn1_ = BatchNorm(name + "/bn1", mid);
    bn2_ = BatchNorm(name + "/bn2", mid);
    bn3_ = BatchNorm(name + "/bn3", channels);
}

SparseTensor InvertedResidual::forward(const SparseTensor& x, bool training, int threads) {
    SparseTensor t = expand_.forward(x, nullptr, threads);
    t = bn1_.forward(t, training);
    relu_inplace(t, relu1_mask_);
    t = conv_.forward(t, nullptr, threads);
    t = bn2_.forward(t, training);
    relu_inplace(t, relu2_mask_);
    t = project_.forward(t, nullptr, threads);
    t = bn3_.forward(t, training);
    add_into(t.features, x.features);  // residual: site sets are identical
    return t;
}

std::vector<double> InvertedResidual::backward(const std::vector<double>& grad_out, int threads) {
    std::vector<double> g = bn3_.backward(grad_out);
    g = project_.backward(g, threads);
    gate_by_mask(g, relu2_mask_);
    g = bn2_.backward(g);
    g = conv_.backward(g, threads);
    gate_by_mask(g, relu1_mask_);
    g = bn1_.backward(g);
    g = expand_.backward(g, threads);
    add_into(g, grad_out);  // residual path
    return g;
}

void InvertedResidual::collect(std::vector<Parameter*>& out) {
    for (auto* p : expand_.parameters()) out.push_back(p);
    for (auto* p : bn1_.parameters()) out.push_back(p);
    for (auto* p : conv_.parameters()) out.push_back(p);
    for (auto* p : bn2_.parameters()) out.push_back(p);
    for (auto* p : project_.parameters()) out.push_back(p);
    for (auto* p : bn3_.parameters()) out.push_back(p);
}

void InvertedResidual::collect_norms(std::vector<BatchNorm*>& out) {
    out.push_back(&bn1_);
    out.push_back(&bn2_);
    out.push_back(&bn3_);
}

// ---------------------------------------------------------------------------
// DownBlock
// ---------------------------------------------------------------------------

DownBlock::DownBlock(const std::string& name, int32_t channels, Rng& rng)
    : body_(name + "/body", channels, rng) {
    down_ = SparseConv(name + "/down",
                       {ConvKind::downsample2, {2, 2, 2}, channels, 2 * channels, false}, rng);
    bn_down_ = BatchNorm(name + "/bn_down", 2 * channels);
}

SparseTensor DownBlock::forward(const SparseTensor& x, SparseTensor& skip, bool training,
                                int threads) {
    skip = body_.forward(x, training, threads);
    SparseTensor t = down_.forward(skip, nullptr, threads);
    t = bn_down_.forward(t, training);
    relu_inplace(t, relu_mask_);
    return t;
}

std::vector<double> DownBlock::backward(const std::vector<double>& grad_out,
                                        const std::vector<double>& grad_skip, int threads) {
    std::vector<double> g = grad_out;
    gate_by_mask(g, relu_mask_);
    g = bn_down_.backward(g);
    g = down_.backward(g, threads);
    add_into(g, grad_skip);
    return body_.backward(g, threads);
}

void DownBlock::collect(std::vector<Parameter*>& out) {
    body_.collect(out);
    for (auto* p : down_.parameters()) out.push_back(p);
    for (auto* p : bn_down_.parameters()) out.push_back(p);
}

void DownBlock::collect_norms(std::vector<BatchNorm*>& out) {
    body_.collect_norms(out);
    out.push_back(&bn_down_);
}

// ---------------------------------------------------------------------------
// UpBlock
// ---------------------------------------------------------------------------

UpBlock::UpBlock(const std::string& name, int32_t in_channels, int32_t out_channels, Rng& rng)
    : body_(name + "/body", out_channels, rng) {
    up_ = SparseConv(name + "/up",
                     {ConvKind::upsample2, {2, 2, 2}, in_channels, out_channels, false}, rng);
    bn_up_ = BatchNorm(name + "/bn_up", out_channels);
    fuse_ = SparseConv(name + "/fuse",
                       {ConvKind::submanifold, {1, 1, 1}, 2 * out_channels, out_channels, false},
                       rng);
    bn_fuse_ = BatchNorm(name + "/bn_fuse", out_channels);
}

SparseTensor UpBlock::forward(const SparseTensor& x, const SparseTensor& skip, bool training,
                              int threads) {
    SparseTensor u = up_.forward(x, &skip, threads);
    u = bn_up_.forward(u, training);
    relu_inplace(u, relu_up_mask_);
    up_channels_ = size_t(u.channels);
    skip_channels_ = size_t(skip.channels);

    // concat [upsampled | skip] per row; site sets are identical by
    // construction of the upsample
    SparseTensor cat;
    cat.dims = skip.dims;
    cat.channels = u.channels + skip.channels;
    cat.sites = skip.sites;
    cat.features.resize(skip.site_count() * size_t(cat.channels));
    for (size_t r = 0; r < skip.site_count(); ++r) {
        double* dst = cat.features.data() + r * size_t(cat.channels);
        std::copy_n(u.feature(r), u.channels, dst);
        std::copy_n(skip.feature(r), skip.channels, dst + u.channels);
    }
    cat.finalize();

    SparseTensor f = fuse_.forward(cat, nullptr, threads);
    f = bn_fuse_.forward(f, training);
    relu_inplace(f, relu_fuse_mask_);
    return body_.forward(f, training, threads);
}

void UpBlock::backward(const std::vector<double>& grad_out, std::vector<double>& grad_x,
                       std::vector<double>& grad_skip, int threads) {
    std::vector<double> g = body_.backward(grad_out, threads);
    gate_by_mask(g, relu_fuse_mask_);
    g = bn_fuse_.backward(g);
    std::vector<double> gcat = fuse_.backward(g, threads);

    const size_t rows = gcat.size() / (up_channels_ + skip_channels_);
    std::vector<double> gu(rows * up_channels_);
    grad_skip.assign(rows * skip_channels_, 0.0);
    for (size_t r = 0; r < rows; ++r) {
        const double* src = gcat.data() + r * (up_channels_ + skip_channels_);
        std::copy_n(src, up_channels_, gu.data() + r * up_channels_);
        std::copy_n(src + up_channels_, skip_channels_, grad_skip.data() + r * skip_channels_);
    }
    gate_by_mask(gu, relu_up_mask_);
    gu = bn_up_.backward(gu);
    grad_x = up_.backward(gu, threads);
}

void UpBlock::collect(std::vector<Parameter*>& out) {
    for (auto* p : up_.parameters()) out.push_back(p);
    for (auto* p : bn_up_.parameters()) out.push_back(p);
    for (auto* p : fuse_.parameters()) out.push_back(p);
    for (auto* p : bn_fuse_.parameters()) out.push_back(p);
    body_.collect(out);
}

void UpBlock::collect_norms(std::vector<BatchNorm*>& out) {
    out.push_back(&bn_up_);
    out.push_back(&bn_fuse_);
    body_.collect_norms(out);
}

// ---------------------------------------------------------------------------
// Rank1Head
// ---------------------------------------------------------------------------

Rank1Head::Rank1Head(const std::string& name, int32_t in_channels, int32_t classes, Rng& rng) {
    conv_pitch_ = SparseConv(name + "/pitch",
                             {ConvKind::submanifold, {3, 1, 1}, in_channels, classes, true}, rng);
    conv_horiz_ = SparseConv(name + "/horiz",
                             {ConvKind::submanifold, {1, 3, 1}, in_channels, classes, true}, rng);
    conv_range_ = SparseConv(name + "/range",
                             {ConvKind::submanifold, {1, 1, 3}, in_channels, classes, true}, rng);
}

SparseTensor Rank1Head::forward(const SparseTensor& x, int threads) {
    SparseTensor a = conv_pitch_.forward(x, nullptr, threads);
    SparseTensor b = conv_horiz_.forward(x, nullptr, threads);
    SparseTensor c = conv_range_.forward(x, nullptr, threads);
    add_into(a.features, b.features);
    add_into(a.features, c.features);
    return a;
}

std::vector<double> Rank1Head::backward(const std::vector<double>& grad_out, int threads) {
    std::vector<double> g = conv_pitch_.backward(grad_out, threads);
    add_into(g, conv_horiz_.backward(grad_out, threads));
    add_into(g, conv_range_.backward(grad_out, threads));
    return g;
}

void Rank1Head::collect(std::vector<Parameter*>& out) {
    for (auto* p : conv_pitch_.parameters()) out.push_back(p);
    for (auto* p : conv_horiz_.parameters()) out.push_back(p);
    for (auto* p : conv_range_.parameters()) out.push_back(p);
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Network::Network(const NetworkConfig& config) : config_(config) {
    if (config_.encoder_channels.size() < 2)
        fail_usage("Network: need at least two encoder widths");
    Rng rng(config_.init_seed);
    const auto& ch = config_.encoder_channels;
    const size_t depth = ch.size() - 1;
    down_.reserve(depth);
    up_.reserve(depth);
    for (size_t i = 0; i < depth; ++i) {
        if (ch[i + 1] != 2 * ch[i])
            fail_usage("Network: encoder widths must double at each scale");
        down_.emplace_back("net/d" + std::to_string(i + 1), ch[i], rng);
    }
    for (size_t i = 0; i < depth; ++i)
        up_.emplace_back("net/u" + std::to_string(i + 1), ch[i + 1], ch[i], rng);
    head_ = Rank1Head("net/head", ch[0], config_.classes, rng);
}

SparseTensor Network::forward(const SparseTensor& input, bool training, int threads) {
    if (input.channels != config_.encoder_channels.front())
        fail_usage("Network: input feature width mismatch");
    skips_.assign(down_.size(), {});
    SparseTensor x = input;
    for (size_t i = 0; i < down_.size(); ++i)
        x = down_[i].forward(x, skips_[i], training, threads);
    for (size_t i = up_.size(); i-- > 0;) x = up_[i].forward(x, skips_[i], training, threads);
    return head_.forward(x, threads);
}

std::vector<double> Network::backward(const std::vector<double>& grad_logits, int threads) {
    std::vector<double> g = head_.backward(grad_logits, threads);
    std::vector<std::vector<double>> skip_grads(up_.size());
    for (size_t i = 0; i < up_.size(); ++i) {
        std::vector<double> gx;
        up_[i].backward(g, gx, skip_grads[i], threads);
        g = std::move(gx);
    }
    for (size_t i = down_.size(); i-- > 0;)
        g = down_[i].backward(g, skip_grads[i], threads);
    return g;
}

void Network::commit_running_stats(double momentum) {
    for (BatchNorm* bn : norms()) bn->commit_running_stats(momentum);
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    for (auto& d : down_) d.collect(out);
    for (auto& u : up_) u.collect(out);
    head_.collect(out);
    return out;
}

std::vector<BatchNorm*> Network::norms() {
    std::vector<BatchNorm*> out;
    for (auto& d : down_) d.collect_norms(out);
    for (auto& u : up_) u.collect_norms(out);
    return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

double cross_entropy(const SparseTensor& logits, const std::vector<uint8_t>& labels,
                     const double class_weights[2], std::vector<double>& grad, size_t* counted) {
    if (logits.channels != 2) fail_usage("cross_entropy: expects two-class logits");
    if (labels.size() != logits.site_count())
        fail_usage("cross_entropy: label count does not match voxel count");

    grad.assign(logits.features.size(), 0.0);
    double total_weight = 0.0;
    double loss = 0.0;
    size_t used = 0;
    for (size_t r = 0; r < logits.site_count(); ++r) {
        const uint8_t y = labels[r];
        if (y > 1) continue;  // unlabeled voxels do not contribute
        const double* l = logits.feature(r);
        const double m = l[0] > l[1] ? l[0] : l[1];
        const double e0 = std::exp(l[0] - m);
        const double e1 = std::exp(l[1] - m);
        const double z = e0 + e1;
        const double w = class_weights[y];
        loss += -w * (l[y] - m - std::log(z));
        grad[r * 2 + 0] = w * (e0 / z - (y == 0 ? 1.0 : 0.0));
        grad[r * 2 + 1] = w * (e1 / z - (y == 1 ? 1.0 : 0.0));
        total_weight += w;
        ++used;
    }
    if (used == 0) fail_usage("cross_entropy: no labeled voxels");
    for (double& g : grad) g /= total_weight;
    if (counted) *counted = used;
    return loss / total_weight;
}

}  // namespace railseg
