#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "railseg/common.hpp"
#include "railseg/knn.hpp"
#include "railseg/pfe.hpp"

using namespace railseg;

namespace {

Point pt(double x, double y, double z, double intensity = 0.0) {
    return Point{x, y, z, intensity, Label::background};
}

// O(N) scan with the documented (distance, index) tie-break.
std::vector<Neighbor> brute_force_knn(const std::vector<Point>& support, const Point& q, int k) {
    std::vector<Neighbor> all(support.size());
    for (size_t i = 0; i < support.size(); ++i) {
        const double dx = support[i].x - q.x;
        const double dy = support[i].y - q.y;
        const double dz = support[i].z - q.z;
        all[i] = {int32_t(i), std::sqrt(dx * dx + dy * dy + dz * dz)};
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    });
    if (int(all.size()) > k) all.resize(size_t(k));
    while (!all.empty() && int(all.size()) < k) all.push_back(all.back());
    return all;
}

std::vector<Point> random_cloud(Rng& rng, int n, double extent = 10.0) {
    std::vector<Point> pts(static_cast<size_t>(n));
    for (auto& p : pts)
        p = pt(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
               rng.uniform(-extent, extent), rng.uniform(0.0, 1.0));
    return pts;
}

}  // namespace

TEST_CASE("single-point support returns that point") {
    KnnIndex index({pt(1, 2, 3)});
    auto r = index.query(pt(9, 9, 9), 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].index == 0);
}

TEST_CASE("query of a support point returns itself at distance zero") {
    Rng rng(1);
    const std::vector<Point> support = random_cloud(rng, 50);
    KnnIndex index(support);
    auto r = index.query(support[17], 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].index == 17);
    CHECK(r[0].dist == 0.0);
}

TEST_CASE("collinear support example") {
    std::vector<Point> support;
    for (int i = 0; i <= 4; ++i) support.push_back(pt(double(i), 0, 0));
    KnnIndex index(support);
    auto r = index.query(pt(1.4, 0, 0), 2);
    REQUIRE(r.size() == 2);
    CHECK(r[0].index == 1);
    CHECK(r[1].index == 2);
}

TEST_CASE("k equal to support size returns the whole support sorted") {
    Rng rng(2);
    const std::vector<Point> support = random_cloud(rng, 20);
    KnnIndex index(support);
    auto r = index.query(pt(0, 0, 0), 20);
    REQUIRE(r.size() == 20);
    for (size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].dist <= r[i].dist);
    std::vector<bool> seen(20, false);
    for (const Neighbor& nb : r) seen[size_t(nb.index)] = true;
    CHECK(std::count(seen.begin(), seen.end(), true) == 20);
}

TEST_CASE("duplicates come back before any farther point, ordered by index") {
    std::vector<Point> support = {pt(5, 5, 5), pt(1, 1, 1), pt(1, 1, 1), pt(1.5, 1, 1)};
    KnnIndex index(support);
    auto r = index.query(pt(1, 1, 1), 3);
    REQUIRE(r.size() == 3);
    CHECK(r[0].index == 1);
    CHECK(r[1].index == 2);
    CHECK(r[2].index == 3);
}

TEST_CASE("padding repeats the farthest neighbor when support is short") {
    std::vector<Point> support = {pt(0, 0, 0), pt(1, 0, 0)};
    KnnIndex index(support);
    auto r = index.query(pt(0, 0, 0), 4);
    REQUIRE(r.size() == 4);
    CHECK(r[0].index == 0);
    CHECK(r[1].index == 1);
    CHECK(r[2].index == 1);
    CHECK(r[3].index == 1);
}

TEST_CASE("invalid k and empty support are errors") {
    CHECK_THROWS_AS(KnnIndex({}), Error);
    KnnIndex index({pt(0, 0, 0)});
    CHECK_THROWS_AS(index.query(pt(0, 0, 0), 0), Error);
}

TEST_CASE("indexed queries equal the brute-force scan") {
    Rng rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 10 + int(rng.below(2000));
        std::vector<Point> support = random_cloud(rng, n, 20.0);
        // lattice snapping creates exact ties on some trials
        if (trial % 3 == 0)
            for (auto& p : support) {
                p.x = std::round(p.x);
                p.y = std::round(p.y);
                p.z = std::round(p.z);
            }
        KnnIndex index(support);
        for (int q = 0; q < 10; ++q) {
            const Point query = trial % 2 ? support[size_t(rng.below(uint64_t(n)))]
                                          : pt(rng.uniform(-22, 22), rng.uniform(-22, 22),
                                               rng.uniform(-22, 22));
            for (const int k : {1, 4, 16}) {
                const auto got = index.query(query, k);
                const auto want = brute_force_knn(support, query, k);
                REQUIRE(got.size() == want.size());
                for (size_t i = 0; i < got.size(); ++i) {
                    CHECK(got[i].index == want[i].index);
                    CHECK(got[i].dist == doctest::Approx(want[i].dist).epsilon(1e-12));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// density and encoding
// ---------------------------------------------------------------------------

TEST_CASE("gaussian density closed-form values") {
    CHECK(gaussian_density(0.0, 0.5) == doctest::Approx(0.7978845608).epsilon(1e-9));
    CHECK(gaussian_density(0.5, 0.5) == doctest::Approx(0.4839414490).epsilon(1e-9));
    CHECK_THROWS_AS(gaussian_density(0.0, 0.0), Error);
    CHECK_THROWS_AS(gaussian_density(-1.0, 0.5), Error);
}

TEST_CASE("gaussian density decreases strictly with distance") {
    double prev = gaussian_density(0.0, 0.5);
    for (int i = 1; i <= 100; ++i) {
        const double d = 0.08 * i;
        const double rho = gaussian_density(d, 0.5);
        CHECK(rho < prev);
        prev = rho;
    }
}

TEST_CASE("neighbor encoding layout") {
    double row[kEncodingDim];
    row[0] = -1.0;  // rho slot untouched by encode_relative
    encode_relative(pt(0, 0, 0), pt(1, 0, 0, 0.2), 1.0, row);
    CHECK(row[0] == -1.0);
    CHECK(row[1] == 0.0);
    CHECK(row[2] == 0.0);
    CHECK(row[3] == 0.0);
    CHECK(row[4] == 1.0);
    CHECK(row[5] == 0.0);
    CHECK(row[6] == 0.0);
    CHECK(row[7] == 1.0);
    CHECK(row[8] == 0.0);
    CHECK(row[9] == 0.0);
    CHECK(row[10] == 1.0);
    CHECK(row[11] == 0.2);
    CHECK(row[12] == 1.0);
}

TEST_CASE("self neighbor has an all-zero relative part") {
    double row[kEncodingDim];
    encode_relative(pt(2, 3, 4), pt(2, 3, 4, 0.5), 5.385, row);
    CHECK(row[7] == 0.0);
    CHECK(row[8] == 0.0);
    CHECK(row[9] == 0.0);
    CHECK(row[10] == 0.0);
}

TEST_CASE("encoding slots match independent recomputation") {
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        const Point c = pt(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
        const Point n = pt(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5),
                           rng.uniform(0, 1));
        const double range = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
        double row[kEncodingDim];
        encode_relative(c, n, range, row);
        CHECK(row[1] == c.x);
        CHECK(row[4] == n.x);
        CHECK(row[7] == n.x - c.x);
        CHECK(row[10] == doctest::Approx(std::sqrt((n.x - c.x) * (n.x - c.x) +
                                                   (n.y - c.y) * (n.y - c.y) +
                                                   (n.z - c.z) * (n.z - c.z))));
        CHECK(row[11] == n.intensity);
        CHECK(row[12] == range);
    }
}

// ---------------------------------------------------------------------------
// PFE forward/backward
// ---------------------------------------------------------------------------

namespace {

struct PfeFixture {
    std::vector<Point> support;
    std::vector<double> support_range;
    std::vector<Point> reps;
    PfeParams params;
    PfeConfig config;

    explicit PfeFixture(uint64_t seed, std::vector<int32_t> widths = {13, 16, 16, 8},
                        int n_support = 40, int n_reps = 6) {
        Rng rng(seed);
        support = random_cloud(rng, n_support, 3.0);
        for (const Point& p : support)
            support_range.push_back(std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z));
        for (int i = 0; i < n_reps; ++i) reps.push_back(support[size_t(i * 3)]);
        params.build(widths, rng, "pfe");
        config.k = 4;
        config.sigma = 0.5;
    }

    std::vector<double> forward(PfeCache* cache = nullptr) {
        KnnIndex index(support);
        std::vector<double> features;
        pfe_forward(reps, support, support_range, index, params, config, features, cache);
        return features;
    }
};

}  // namespace

TEST_CASE("k=1 pooling is the identity over a single encoding") {
    PfeFixture fx(3);
    fx.config.k = 1;
    PfeCache cache;
    const std::vector<double> pooled = fx.forward(&cache);
    REQUIRE(cache.n_rows == int(fx.reps.size()));
    const int out_w = fx.params.output_dim();
    for (size_t i = 0; i < pooled.size(); ++i)
        CHECK(pooled[i] == doctest::Approx(cache.out_rows[i]).epsilon(1e-12));
    (void)out_w;
}

TEST_CASE("identity-like weights pass raw encodings through the max-pool") {
    // two hidden units per channel reconstruct x as relu(x) - relu(-x)
    PfeFixture fx(4, {13, 32, 32, 16});
    auto& w1 = fx.params.weights[0].value;
    auto& w2 = fx.params.weights[1].value;
    auto& w3 = fx.params.weights[2].value;
    w1.zero();
    w2.zero();
    w3.zero();
    for (auto& b : fx.params.biases) b.value.zero();
    for (int i = 0; i < 13; ++i) {
        w1.data[size_t((2 * i) * 13 + i)] = 1.0;
        w1.data[size_t((2 * i + 1) * 13 + i)] = -1.0;
    }
    for (int j = 0; j < 32; ++j) w2.data[size_t(j * 32 + j)] = 1.0;
    for (int c = 0; c < 13; ++c) {
        w3.data[size_t(c * 32 + 2 * c)] = 1.0;
        w3.data[size_t(c * 32 + 2 * c + 1)] = -1.0;
    }

    PfeCache cache;
    const std::vector<double> pooled = fx.forward(&cache);
    const int out_w = 16;
    for (int n = 0; n < cache.n_reps; ++n) {
        for (int c = 0; c < 13; ++c) {
            double direct = -1e300;
            for (int k = 0; k < cache.k; ++k)
                direct = std::max(direct,
                                  cache.encodings[size_t((n * cache.k + k) * 13 + c)]);
            CHECK(pooled[size_t(n * out_w + c)] == doctest::Approx(direct).epsilon(1e-10));
        }
        for (int c = 13; c < out_w; ++c)
            CHECK(pooled[size_t(n * out_w + c)] == doctest::Approx(0.0));
    }
}

TEST_CASE("pooled features are invariant to support permutation") {
    PfeFixture fx(5);
    const std::vector<double> base = fx.forward();

    // reverse the support order; queries stay the same points
    std::vector<Point> reversed(fx.support.rbegin(), fx.support.rend());
    std::vector<double> reversed_range(fx.support_range.rbegin(), fx.support_range.rend());
    KnnIndex index(reversed);
    std::vector<double> permuted;
    pfe_forward(fx.reps, reversed, reversed_range, index, fx.params, fx.config, permuted,
                nullptr);
    REQUIRE(permuted.size() == base.size());
    for (size_t i = 0; i < base.size(); ++i)
        CHECK(permuted[i] == doctest::Approx(base[i]).epsilon(1e-10));
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    PfeFixture fx(6);
    PfeCache cache;
    fx.forward(&cache);
    std::vector<double> upstream(fx.reps.size() * size_t(fx.params.output_dim()), 0.0);
    pfe_backward(upstream, cache, fx.params);
    for (Parameter* p : fx.params.parameters())
        for (double g : p->grad.data) CHECK(g == 0.0);
}

TEST_CASE("pfe gradients match central finite differences") {
    PfeFixture fx(7, {13, 10, 6});
    PfeCache cache;

    // scalar loss: fixed random projection of the pooled features
    Rng rng(99);
    std::vector<double> coefs(fx.reps.size() * size_t(fx.params.output_dim()));
    for (double& c : coefs) c = rng.uniform(-1, 1);
    auto loss_of = [&](std::vector<double> features) {
        double loss = 0.0;
        for (size_t i = 0; i < features.size(); ++i) loss += coefs[i] * features[i];
        return loss;
    };

    fx.forward(&cache);
    for (Parameter* p : fx.params.parameters()) p->zero_grad();
    pfe_backward(coefs, cache, fx.params);

    const double eps = 1e-6;
    for (Parameter* p : fx.params.parameters()) {
        Rng pick(fx.params.output_dim() + p->value.size());
        for (int probe = 0; probe < 6; ++probe) {
            const size_t i = size_t(pick.below(uint64_t(p->value.data.size())));
            const double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            const double up = loss_of(fx.forward());
            p->value.data[i] = saved - eps;
            const double down = loss_of(fx.forward());
            p->value.data[i] = saved;
            const double fd = (up - down) / (2 * eps);
            const double an = p->grad.data[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            CHECK(std::abs(fd - an) / denom < 1e-4);
        }
    }
}

TEST_CASE("encoding dump lists K rows and the pooled feature per query") {
    PfeFixture fx(21);
    PfeCache cache;
    const std::vector<double> pooled = fx.forward(&cache);
    const std::string path =
        (std::filesystem::temp_directory_path() / "railseg_encodings.csv").string();
    write_encoding_dump(path, cache, pooled, fx.params.output_dim());
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    size_t enc_rows = 0, pooled_rows = 0;
    while (std::getline(in, line)) {
        if (line.find(",enc") != std::string::npos) ++enc_rows;
        if (line.find(",pooled") != std::string::npos) ++pooled_rows;
    }
    CHECK(enc_rows == fx.reps.size() * size_t(fx.config.k));
    CHECK(pooled_rows == fx.reps.size());
}

TEST_CASE("duplicated neighbor rows route gradient to one copy per channel") {
    // support of two identical points: all K=2 neighbors identical
    std::vector<Point> support = {pt(1, 1, 1, 0.5), pt(1, 1, 1, 0.5)};
    std::vector<double> range = {std::sqrt(3.0), std::sqrt(3.0)};
    std::vector<Point> reps = {support[0]};
    Rng rng(12);
    PfeParams params;
    params.build({13, 8, 4}, rng, "pfe");
    PfeConfig config;
    config.k = 2;

    KnnIndex index(support);
    std::vector<double> features;
    PfeCache cache;
    pfe_forward(reps, support, range, index, params, config, features, &cache);
    // ties resolve to the first (lowest) row
    for (int c = 0; c < 4; ++c) CHECK(cache.argmax[size_t(c)] == 0);
}

TEST_CASE("encoding and MLP width contracts are enforced") {
    Rng rng(31);
    PfeParams wrong;
    wrong.build({12, 8, 4}, rng, "pfe");  // wrong input width
    std::vector<Point> support = {pt(0, 0, 0), pt(1, 0, 0)};
    std::vector<double> range = {0.0, 1.0};
    KnnIndex index(support);
    std::vector<double> features;
    PfeConfig config;
    CHECK_THROWS_AS(
        pfe_forward(support, support, range, index, wrong, config, features, nullptr),
        Error);
    CHECK_THROWS_AS(point_mlp_forward(support, wrong, features, nullptr), Error);
}

TEST_CASE("point-mlp path consumes [x,y,z,intensity] only") {
    Rng rng(13);
    PfeParams params;
    params.build({4, 8, 6}, rng, "pfe_mlp");
    std::vector<Point> reps = {pt(1, 2, 3, 0.25), pt(-1, 0, 2, 0.5)};
    std::vector<double> features;
    PfeCache cache;
    point_mlp_forward(reps, params, features, &cache);
    REQUIRE(features.size() == 12);
    CHECK(cache.encodings[0] == 1.0);
    CHECK(cache.encodings[3] == 0.25);

    // finite differences through the point MLP
    Rng crng(77);
    std::vector<double> coefs(features.size());
    for (double& c : coefs) c = crng.uniform(-1, 1);
    for (Parameter* p : params.parameters()) p->zero_grad();
    point_mlp_backward(coefs, cache, params);
    auto loss_of = [&]() {
        std::vector<double> f;
        point_mlp_forward(reps, params, f, nullptr);
        double loss = 0;
        for (size_t i = 0; i < f.size(); ++i) loss += coefs[i] * f[i];
        return loss;
    };
    const double eps = 1e-6;
    Parameter* w0 = params.parameters()[0];
    for (int probe = 0; probe < 5; ++probe) {
        const size_t i = size_t(crng.below(uint64_t(w0->value.data.size())));
        const double saved = w0->value.data[i];
        w0->value.data[i] = saved + eps;
        const double up = loss_of();
        w0->value.data[i] = saved - eps;
        const double down = loss_of();
        w0->value.data[i] = saved;
        const double fd = (up - down) / (2 * eps);
        const double an = w0->grad.data[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        CHECK(std::abs(fd - an) / denom < 1e-4);
    }
}
