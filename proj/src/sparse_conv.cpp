#include "railseg/sparse_conv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "railseg/parallel.hpp"

namespace railseg {

void SparseTensor::finalize() {
    if (sites.size() * size_t(channels) != features.size())
        fail_usage("SparseTensor: feature storage does not match site count");
    std::vector<int32_t> order(sites.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return pack(sites[size_t(a)], dims) < pack(sites[size_t(b)], dims);
    });
    std::vector<Coord> sorted_sites(sites.size());
    std::vector<double> sorted_features(features.size());
    for (size_t r = 0; r < order.size(); ++r) {
        sorted_sites[r] = sites[size_t(order[r])];
        std::copy_n(features.begin() + int64_t(order[r]) * channels, channels,
                    sorted_features.begin() + int64_t(r) * channels);
    }
    sites = std::move(sorted_sites);
    features = std::move(sorted_features);
    lookup_.clear();
    lookup_.reserve(sites.size() * 2);
    for (size_t r = 0; r < sites.size(); ++r) {
        const uint64_t key = pack(sites[r], dims);
        if (!lookup_.emplace(key, int32_t(r)).second)
            fail_usage("SparseTensor: duplicate active coordinate");
    }
}

void ConvSpec::validate() const {
    if (in_channels <= 0 || out_channels <= 0) fail_usage("ConvSpec: channels must be positive");
    switch (kind) {
        case ConvKind::submanifold:
            for (int a = 0; a < 3; ++a)
                if (extent[a] < 1 || extent[a] % 2 == 0)
                    fail_usage("ConvSpec: submanifold extents must be odd");
            break;
        case ConvKind::downsample2:
        case ConvKind::upsample2:
            if (extent != std::array<int32_t, 3>{2, 2, 2})
                fail_usage("ConvSpec: strided kernels use extent 2");
            break;
    }
}

std::array<int32_t, 3> offset_delta(const ConvSpec& spec, int32_t offset_index) {
    const int32_t ep = spec.extent[0], eh = spec.extent[1], er = spec.extent[2];
    std::array<int32_t, 3> d;
    d[2] = offset_index % er;
    d[1] = (offset_index / er) % eh;
    d[0] = offset_index / (er * eh);
    if (spec.kind == ConvKind::submanifold) {
        d[0] -= (ep - 1) / 2;
        d[1] -= (eh - 1) / 2;
        d[2] -= (er - 1) / 2;
    }
    return d;
}

int32_t mirror_offset(const ConvSpec& spec, int32_t offset_index) {
    return spec.offset_count() - 1 - offset_index;
}

SparseConv::SparseConv(const std::string& name, const ConvSpec& spec, Rng& rng) : spec_(spec) {
    spec_.validate();
    weight_ = Parameter(name + "/w",
                        {spec_.offset_count(), spec_.in_channels, spec_.out_channels});
    const int fan_in = spec_.kind == ConvKind::upsample2
                           ? spec_.in_channels
                           : spec_.offset_count() * spec_.in_channels;
    init_uniform_fan_in(weight_, fan_in, rng);
    if (spec_.bias) bias_ = Parameter(name + "/b", {spec_.out_channels});
}

std::vector<Parameter*> SparseConv::parameters() {
    std::vector<Parameter*> out{&weight_};
    if (spec_.bias) out.push_back(&bias_);
    return out;
}

namespace {

bool in_bounds(const Coord& c, const Coord& dims) {
    return c[0] >= 0 && c[0] < dims[0] && c[1] >= 0 && c[1] < dims[1] && c[2] >= 0 &&
           c[2] < dims[2];
}

}  // namespace

SparseTensor SparseConv::forward(const SparseTensor& x, const SparseTensor* skip_sites,
                                 int threads) {
    if (x.channels != spec_.in_channels) fail_usage("SparseConv: input channel mismatch");

    SparseTensor out;
    out.channels = spec_.out_channels;

    switch (spec_.kind) {
        case ConvKind::submanifold:
            out.dims = x.dims;
            out.sites = x.sites;
            break;
        case ConvKind::downsample2: {
            out.dims = {(x.dims[0] + 1) / 2, (x.dims[1] + 1) / 2, (x.dims[2] + 1) / 2};
            out.sites.reserve(x.sites.size());
            for (const Coord& c : x.sites)
                out.sites.push_back({c[0] >> 1, c[1] >> 1, c[2] >> 1});
            std::sort(out.sites.begin(), out.sites.end(), [&](const Coord& a, const Coord& b) {
                return SparseTensor::pack(a, out.dims) < SparseTensor::pack(b, out.dims);
            });
            out.sites.erase(std::unique(out.sites.begin(), out.sites.end()), out.sites.end());
            break;
        }
        case ConvKind::upsample2: {
            if (!skip_sites) fail_usage("SparseConv: upsample needs the target site set");
            const Coord expect = {(skip_sites->dims[0] + 1) / 2, (skip_sites->dims[1] + 1) / 2,
                                  (skip_sites->dims[2] + 1) / 2};
            if (expect != x.dims) fail_usage("SparseConv: upsample scale mismatch with target");
            out.dims = skip_sites->dims;
            out.sites = skip_sites->sites;
            break;
        }
    }
    out.features.assign(out.sites.size() * size_t(spec_.out_channels), 0.0);
    out.finalize();

    // rulebook grouped by kernel offset; within a group rules are ordered by
    // output row, and both in and out rows are strictly increasing, so the
    // groups are race-free under row-range chunking
    const int32_t n_offsets = spec_.offset_count();
    const int32_t n_out = int32_t(out.sites.size());
    {
        const size_t n_groups = size_t(n_offsets);
        std::vector<std::vector<std::pair<int32_t, int32_t>>> groups(n_groups);
        for (int32_t r = 0; r < n_out; ++r) {
            const Coord& o = out.sites[size_t(r)];
            if (spec_.kind == ConvKind::upsample2) {
                const Coord parent = {o[0] >> 1, o[1] >> 1, o[2] >> 1};
                const int32_t j = x.row_of(parent);
                if (j >= 0) {
                    const int32_t d = ((o[0] & 1) * 2 + (o[1] & 1)) * 2 + (o[2] & 1);
                    groups[size_t(d)].push_back({j, r});
                }
            } else {
                for (int32_t d = 0; d < n_offsets; ++d) {
                    const auto delta = offset_delta(spec_, d);
                    Coord n;
                    if (spec_.kind == ConvKind::submanifold)
                        n = {o[0] + delta[0], o[1] + delta[1], o[2] + delta[2]};
                    else  // downsample2: gather from 2*o + delta
                        n = {2 * o[0] + delta[0], 2 * o[1] + delta[1], 2 * o[2] + delta[2]};
                    if (!in_bounds(n, x.dims)) continue;
                    const int32_t j = x.row_of(n);
                    if (j < 0) continue;
                    groups[size_t(d)].push_back({j, r});
                }
            }
        }
        rules_.group_begin.assign(size_t(n_offsets) + 1, 0);
        size_t total = 0;
        for (int32_t d = 0; d < n_offsets; ++d) total += groups[size_t(d)].size();
        rules_.in_row.resize(total);
        rules_.out_row.resize(total);
        size_t at = 0;
        for (int32_t d = 0; d < n_offsets; ++d) {
            for (const auto& [j, r] : groups[size_t(d)]) {
                rules_.in_row[at] = j;
                rules_.out_row[at] = r;
                ++at;
            }
            rules_.group_begin[size_t(d) + 1] = int32_t(at);
        }
    }

    const int32_t cin = spec_.in_channels;
    const int32_t cout = spec_.out_channels;
    const double* w = weight_.value.data.data();
    const double* bias = spec_.bias ? bias_.value.data.data() : nullptr;

    parallel_chunks(n_out, threads, [&](int64_t begin, int64_t end, int) {
        if (bias) {
            for (int64_t r = begin; r < end; ++r)
                std::copy_n(bias, cout, out.feature(size_t(r)));
        }
        // each offset group streams one weight slab over this chunk's rows
        for (int32_t d = 0; d < n_offsets; ++d) {
            const int32_t g0 = rules_.group_begin[size_t(d)];
            const int32_t g1 = rules_.group_begin[size_t(d) + 1];
            // rules with out_row in [begin, end)
            const int32_t* lo = std::lower_bound(rules_.out_row.data() + g0,
                                                 rules_.out_row.data() + g1, int32_t(begin));
            const int32_t* hi = std::lower_bound(rules_.out_row.data() + g0,
                                                 rules_.out_row.data() + g1, int32_t(end));
            const double* wslab = w + int64_t(d) * cin * cout;
            for (const int32_t* q = lo; q != hi; ++q) {
                const size_t rule = size_t(q - rules_.out_row.data());
                const double* src = x.feature(size_t(rules_.in_row[rule]));
                double* dst = out.feature(size_t(*q));
                for (int32_t ci = 0; ci < cin; ++ci) {
                    const double a = src[ci];
                    if (a == 0.0) continue;
                    const double* wrow = wslab + int64_t(ci) * cout;
                    for (int32_t co = 0; co < cout; ++co) dst[co] += a * wrow[co];
                }
            }
        }
    });

    cached_input_ = x.features;
    in_sites_ = x.sites.size();
    out_sites_ = out.sites.size();
    have_cache_ = true;
    return out;
}

std::vector<double> SparseConv::backward(const std::vector<double>& grad_out, int threads) {
    if (!have_cache_) fail_usage("SparseConv: backward without forward");
    const int32_t cin = spec_.in_channels;
    const int32_t cout = spec_.out_channels;
    if (grad_out.size() != out_sites_ * size_t(cout))
        fail_usage("SparseConv: upstream gradient size mismatch");

    if (spec_.bias) {
        double* db = bias_.grad.data.data();
        for (size_t r = 0; r < out_sites_; ++r) {
            const double* g = grad_out.data() + r * size_t(cout);
            for (int32_t co = 0; co < cout; ++co) db[co] += g[co];
        }
    }

    const int32_t n_offsets = spec_.offset_count();
    const double* w = weight_.value.data.data();
    double* dw = weight_.grad.data.data();

    // weight gradient: offset groups own disjoint slabs
    parallel_chunks(n_offsets, threads, [&](int64_t d0, int64_t d1, int) {
        for (int64_t d = d0; d < d1; ++d) {
            double* slab = dw + d * int64_t(cin) * cout;
            const int32_t g0 = rules_.group_begin[size_t(d)];
            const int32_t g1 = rules_.group_begin[size_t(d) + 1];
            for (int32_t q = g0; q < g1; ++q) {
                const double* in = cached_input_.data() +
                                   size_t(rules_.in_row[size_t(q)]) * size_t(cin);
                const double* g = grad_out.data() + size_t(rules_.out_row[size_t(q)]) * cout;
                for (int32_t ci = 0; ci < cin; ++ci) {
                    const double a = in[ci];
                    if (a == 0.0) continue;
                    double* wrow = slab + int64_t(ci) * cout;
                    for (int32_t co = 0; co < cout; ++co) wrow[co] += a * g[co];
                }
            }
        }
    });

    // transposed weight slabs turn the input-gradient reduction into the same
    // streaming update kernel the forward pass uses
    std::vector<double> wt(weight_.value.data.size());
    {
        constexpr int32_t kBlock = 32;
        for (int32_t d = 0; d < n_offsets; ++d) {
            const double* slab = w + int64_t(d) * cin * cout;
            double* t = wt.data() + int64_t(d) * cin * cout;
            for (int32_t i0 = 0; i0 < cin; i0 += kBlock)
                for (int32_t j0 = 0; j0 < cout; j0 += kBlock)
                    for (int32_t i = i0; i < std::min(i0 + kBlock, cin); ++i)
                        for (int32_t j = j0; j < std::min(j0 + kBlock, cout); ++j)
                            t[int64_t(j) * cin + i] = slab[int64_t(i) * cout + j];
        }
    }

    // input gradient: within an offset group the input rows are unique and
    // increasing, so chunking by input row is race-free
    std::vector<double> grad_in(in_sites_ * size_t(cin), 0.0);
    parallel_chunks(int64_t(in_sites_), threads, [&](int64_t begin, int64_t end, int) {
        for (int32_t d = 0; d < n_offsets; ++d) {
            const int32_t g0 = rules_.group_begin[size_t(d)];
            const int32_t g1 = rules_.group_begin[size_t(d) + 1];
            const int32_t* lo = std::lower_bound(rules_.in_row.data() + g0,
                                                 rules_.in_row.data() + g1, int32_t(begin));
            const int32_t* hi = std::lower_bound(rules_.in_row.data() + g0,
                                                 rules_.in_row.data() + g1, int32_t(end));
            const double* wtslab = wt.data() + int64_t(d) * cin * cout;
            for (const int32_t* q = lo; q != hi; ++q) {
                const size_t rule = size_t(q - rules_.in_row.data());
                const double* g = grad_out.data() +
                                  size_t(rules_.out_row[rule]) * size_t(cout);
                double* dst = grad_in.data() + size_t(*q) * size_t(cin);
                for (int32_t co = 0; co < cout; ++co) {
                    const double a = g[co];
                    if (a == 0.0) continue;
                    const double* wrow = wtslab + int64_t(co) * cin;
                    for (int32_t ci = 0; ci < cin; ++ci) dst[ci] += a * wrow[ci];
                }
            }
        }
    });
    return grad_in;
}

}  // namespace railseg
