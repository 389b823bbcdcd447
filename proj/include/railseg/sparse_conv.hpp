#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "railseg/sparse_tensor.hpp"
#include "railseg/tensor.hpp"

namespace railseg {

enum class ConvKind {
    submanifold,    // output sites = input sites, odd extents
    downsample2,    // extent 2, stride 2; output sites = distinct coord/2
    upsample2,      // transpose of downsample2 onto a prescribed site set
};

struct ConvSpec {
    ConvKind kind = ConvKind::submanifold;
    std::array<int32_t, 3> extent = {3, 3, 3};
    int32_t in_channels = 0;
    int32_t out_channels = 0;
    bool bias = false;

    int32_t offset_count() const { return extent[0] * extent[1] * extent[2]; }
    void validate() const;
};

// Gather rules grouped per kernel offset: group d covers rule indices
// [group_begin[d], group_begin[d+1]), each rule pairing an input row with an
// output row. Within a group both row sequences are strictly increasing.
struct Rulebook {
    std::vector<int32_t> group_begin;
    std::vector<int32_t> in_row;
    std::vector<int32_t> out_row;
};

// One sparse convolution layer. forward() caches the rulebook and input
// needed by backward().
class SparseConv {
public:
    SparseConv() = default;
    SparseConv(const std::string& name, const ConvSpec& spec, Rng& rng);

    // `skip_sites` is required for upsample2: the output site set.
    SparseTensor forward(const SparseTensor& x, const SparseTensor* skip_sites = nullptr,
                         int threads = 1);

    // Gradient of the cached forward. Returns the input gradient rows
    // ([input sites x in_channels]); parameter gradients accumulate.
    std::vector<double> backward(const std::vector<double>& grad_out, int threads = 1);

    const ConvSpec& spec() const { return spec_; }
    Parameter& weight() { return weight_; }
    Parameter* bias_param() { return spec_.bias ? &bias_ : nullptr; }
    std::vector<Parameter*> parameters();

private:
    ConvSpec spec_;
    Parameter weight_;  // [offsets x in_channels x out_channels]
    Parameter bias_;    // [out_channels]

    // forward cache
    Rulebook rules_;
    std::vector<double> cached_input_;
    size_t in_sites_ = 0;
    size_t out_sites_ = 0;
    bool have_cache_ = false;
};

// Offset index <-> (dp, dh, dr) helpers; offsets enumerate the kernel volume
// in row-major order with the submanifold range centered on zero.
std::array<int32_t, 3> offset_delta(const ConvSpec& spec, int32_t offset_index);
int32_t mirror_offset(const ConvSpec& spec, int32_t offset_index);

}  // namespace railseg
