#include <doctest.h>

#include <cmath>

#include "railseg/common.hpp"
#include "railseg/geometry.hpp"

using namespace railseg;

namespace {

Frame make_frame(std::initializer_list<Point> pts) {
    Frame f;
    f.points = pts;
    return f;
}

Point pt(double x, double y, double z) { return Point{x, y, z, 0.0, Label::background}; }

}  // namespace

TEST_CASE("crop keeps points strictly above the lower bound and up to the upper") {
    InspectionRegion region;  // defaults: [6.5,70,-30,30,-5.5,7]
    Frame f = make_frame({pt(10, 0, 0), pt(6.5, 0, 0), pt(70, 0, 0), pt(70.0001, 0, 0),
                          pt(20, -30, 0), pt(20, 30, 0), pt(20, 0, -5.5), pt(20, 0, 7)});
    Frame c = crop_frame(f, region);
    REQUIRE(c.size() == 4);
    CHECK(c.points[0].x == 10.0);
    CHECK(c.points[1].x == 70.0);   // inclusive upper bound
    CHECK(c.points[2].y == 30.0);
    CHECK(c.points[3].z == 7.0);
    // original indices preserved for back-mapping
    CHECK(c.orig_index == std::vector<int32_t>{0, 2, 5, 7});
}

TEST_CASE("crop of an empty frame is empty") {
    Frame empty;
    CHECK(crop_frame(empty, InspectionRegion{}).empty());
}

TEST_CASE("crop is idempotent") {
    Rng rng(7);
    Frame f;
    for (int i = 0; i < 2000; ++i)
        f.points.push_back(pt(rng.uniform(0, 80), rng.uniform(-40, 40), rng.uniform(-8, 9)));
    InspectionRegion region;
    Frame once = crop_frame(f, region);
    Frame twice = crop_frame(once, region);
    REQUIRE(once.size() == twice.size());
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(once.points[i].x == twice.points[i].x);
        CHECK(once.orig_index[i] == twice.orig_index[i]);
    }
}

TEST_CASE("polar conversion of axis-aligned points") {
    PolarPoint a = to_polar(pt(1, 0, 0));
    CHECK(a.alpha == doctest::Approx(0.0));
    CHECK(a.beta == doctest::Approx(0.0));
    CHECK(a.r == doctest::Approx(1.0));

    PolarPoint b = to_polar(pt(3, 4, 0));
    CHECK(b.alpha == doctest::Approx(0.0));
    CHECK(b.beta == doctest::Approx(std::atan2(4.0, 3.0)));
    CHECK(b.r == doctest::Approx(5.0));

    PolarPoint c = to_polar(pt(1, 0, 1));
    CHECK(c.alpha == doctest::Approx(M_PI / 4));
    CHECK(c.beta == doctest::Approx(0.0));
    CHECK(c.r == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("polar conversion rejects the origin") {
    CHECK_THROWS_AS(to_polar(pt(0, 0, 0)), Error);
}

TEST_CASE("polar round-trip reproduces cartesian coordinates") {
    Rng rng(11);
    InspectionRegion region;
    double worst = 0.0;
    for (int i = 0; i < 20000; ++i) {
        Point p = pt(rng.uniform(region.x_min, region.x_max),
                     rng.uniform(region.y_min, region.y_max),
                     rng.uniform(region.z_min, region.z_max));
        Point q = polar_to_cartesian(to_polar(p));
        const double norm = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
        const double err = std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) +
                                     (p.z - q.z) * (p.z - q.z)) /
                           norm;
        worst = std::max(worst, err);
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("augment identity leaves the frame unchanged") {
    Frame f = make_frame({pt(1, 2, 3), pt(-4, 5, -6)});
    f.points[0].intensity = 0.7;
    AugmentParams a;  // rotation 0, unit scale, no noise
    Frame g = augment(f, a);
    for (size_t i = 0; i < f.size(); ++i) {
        CHECK(g.points[i].x == f.points[i].x);
        CHECK(g.points[i].y == f.points[i].y);
        CHECK(g.points[i].z == f.points[i].z);
        CHECK(g.points[i].intensity == f.points[i].intensity);
        CHECK(g.points[i].label == f.points[i].label);
    }
}

TEST_CASE("augment quarter turn about z") {
    AugmentParams a;
    a.z_rotation = M_PI / 2;
    Frame g = augment(make_frame({pt(1, 0, 0)}), a);
    CHECK(g.points[0].x == doctest::Approx(0.0));
    CHECK(g.points[0].y == doctest::Approx(1.0));
    CHECK(g.points[0].z == doctest::Approx(0.0));
}

TEST_CASE("augment axis scaling") {
    AugmentParams a;
    a.scale[0] = 2.0;
    Frame g = augment(make_frame({pt(1, 1, 1)}), a);
    CHECK(g.points[0].x == doctest::Approx(2.0));
    CHECK(g.points[0].y == doctest::Approx(1.0));
    CHECK(g.points[0].z == doctest::Approx(1.0));
}

TEST_CASE("noise-free augmentation is invertible") {
    Rng rng(3);
    Frame f;
    for (int i = 0; i < 500; ++i)
        f.points.push_back(pt(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 5)));
    AugmentParams fwd;
    fwd.z_rotation = deg_to_rad(4.0);
    fwd.scale[0] = 1.03;
    fwd.scale[1] = 0.97;
    fwd.scale[2] = 1.01;
    Frame g = augment(f, fwd);

    AugmentParams inv_scale;
    for (int i = 0; i < 3; ++i) inv_scale.scale[i] = 1.0 / fwd.scale[i];
    Frame h = augment(g, inv_scale);
    AugmentParams inv_rot;
    inv_rot.z_rotation = -fwd.z_rotation;
    h = augment(h, inv_rot);

    for (size_t i = 0; i < f.size(); ++i) {
        const Point& p = f.points[i];
        const Point& q = h.points[i];
        const double norm = std::max(1.0, std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z));
        CHECK(std::abs(p.x - q.x) / norm < 1e-9);
        CHECK(std::abs(p.y - q.y) / norm < 1e-9);
        CHECK(std::abs(p.z - q.z) / norm < 1e-9);
    }
}

TEST_CASE("z-rotation preserves z and pairwise distances") {
    Rng rng(5);
    Frame f;
    for (int i = 0; i < 100; ++i)
        f.points.push_back(pt(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-3, 3)));
    AugmentParams a;
    a.z_rotation = deg_to_rad(3.3);
    Frame g = augment(f, a);
    for (size_t i = 0; i < f.size(); ++i) CHECK(g.points[i].z == f.points[i].z);
    for (size_t i = 0; i < f.size(); i += 7)
        for (size_t j = i + 1; j < f.size(); j += 13) {
            auto d = [](const Point& a2, const Point& b2) {
                return std::sqrt((a2.x - b2.x) * (a2.x - b2.x) + (a2.y - b2.y) * (a2.y - b2.y) +
                                 (a2.z - b2.z) * (a2.z - b2.z));
            };
            CHECK(d(f.points[i], f.points[j]) ==
                  doctest::Approx(d(g.points[i], g.points[j])).epsilon(1e-12));
        }
}

TEST_CASE("augmentation with noise is deterministic per seed") {
    Frame f = make_frame({pt(1, 2, 3), pt(4, 5, 6)});
    AugmentParams a;
    a.noise_sigma = 0.05;
    a.rng_seed = 42;
    Frame g1 = augment(f, a);
    Frame g2 = augment(f, a);
    for (size_t i = 0; i < f.size(); ++i) {
        CHECK(g1.points[i].x == g2.points[i].x);
        CHECK(g1.points[i].y == g2.points[i].y);
        CHECK(g1.points[i].z == g2.points[i].z);
    }
    a.rng_seed = 43;
    Frame g3 = augment(f, a);
    CHECK(g3.points[0].x != g1.points[0].x);
}

TEST_CASE("sanitize drops non-finite points and clamps intensity") {
    Frame f = make_frame({pt(1, 2, 3), pt(4, 5, 6), pt(7, 8, 9)});
    f.points[1].x = std::nan("");
    f.points[0].intensity = 1.7;
    f.points[2].intensity = -0.2;
    IngestReport report;
    Frame g = sanitize_frame(f, &report);
    REQUIRE(g.size() == 2);
    CHECK(report.dropped_nonfinite == 1);
    CHECK(report.clamped_intensity == 2);
    CHECK(g.points[0].intensity == 1.0);
    CHECK(g.points[1].intensity == 0.0);
    CHECK(g.orig_index == std::vector<int32_t>{0, 2});
}
