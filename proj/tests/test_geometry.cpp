#include <doctest.h>

#include <cmath>

#include "cotsnet/geometry.hpp"
#include "cotsnet/rng.hpp"
#include "oracles.hpp"

using namespace cots;
using namespace cots::geometry;

namespace {

Mask filled_rect(int h, int w, int r0, int c0, int r1, int c1) {
    Mask m(h, w);
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) m.at(r, c) = 1;
    return m;
}

Mask random_mask(Rng& rng, int h, int w, double fg_prob, bool ensure_nonempty = false) {
    Mask m(h, w);
    for (auto& v : m.grid) v = rng.bernoulli(fg_prob) ? 1 : 0;
    if (ensure_nonempty && m.foreground_count() == 0)
        m.at(rng.uniform_int(0, h - 1), rng.uniform_int(0, w - 1)) = 1;
    return m;
}

} // namespace

TEST_CASE("sobel: zero and constant masks give zero gradients") {
    for (int fill : {0, 1}) {
        Mask m(8, 8);
        if (fill) std::fill(m.grid.begin(), m.grid.end(), 1);
        const auto g = sobel_gradients(m);
        for (double v : g.gx.v) CHECK(v == 0.0);
        for (double v : g.gy.v) CHECK(v == 0.0);
        for (double v : g.magnitude.v) CHECK(v == 0.0);
    }
}

TEST_CASE("sobel: vertical step matches the hand-unrolled oracle") {
    // left two columns 0, right three columns 1
    Mask m = filled_rect(5, 5, 0, 2, 5, 5);
    const auto g = sobel_gradients(m);
    Field ox, oy;
    oracle::sobel(m, ox, oy);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            CHECK(g.gx.at(y, x) == doctest::Approx(ox.at(y, x)).epsilon(1e-12));
            CHECK(g.gy.at(y, x) == doctest::Approx(oy.at(y, x)).epsilon(1e-12));
            CHECK(g.gy.at(y, x) == 0.0);
            if (x != 1 && x != 2) CHECK(g.gx.at(y, x) == 0.0);
        }
    // the two columns adjacent to the step carry the full Sobel response
    for (int y = 0; y < 5; ++y) {
        CHECK(g.gx.at(y, 1) == 4.0);
        CHECK(g.gx.at(y, 2) == 4.0);
    }
}

TEST_CASE("sobel: magnitude invariant and shape checks") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Mask m = random_mask(rng, 3 + trial % 6, 3 + (trial * 5) % 7, 0.4);
        const auto g = sobel_gradients(m);
        for (size_t i = 0; i < g.magnitude.v.size(); ++i) {
            const double expect = std::sqrt(g.gx.v[i] * g.gx.v[i] + g.gy.v[i] * g.gy.v[i]);
            CHECK(g.magnitude.v[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    CHECK_THROWS(sobel_gradients(Mask(2, 5)));
    CHECK_THROWS(sobel_gradients(Mask(5, 2)));
}

TEST_CASE("sobel: disjoint supports superpose") {
    Mask a = filled_rect(16, 16, 2, 2, 4, 4);
    Mask b = filled_rect(16, 16, 10, 10, 13, 13);
    Mask both(16, 16);
    for (size_t i = 0; i < both.grid.size(); ++i)
        both.grid[i] = static_cast<uint8_t>(a.grid[i] | b.grid[i]);
    const auto ga = sobel_gradients(a);
    const auto gb = sobel_gradients(b);
    const auto gc = sobel_gradients(both);
    for (size_t i = 0; i < gc.gx.v.size(); ++i) {
        CHECK(gc.gx.v[i] == doctest::Approx(ga.gx.v[i] + gb.gx.v[i]).epsilon(1e-12));
        CHECK(gc.gy.v[i] == doctest::Approx(ga.gy.v[i] + gb.gy.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("gaussian kernel sums to one") {
    for (int k : {3, 5, 7, 9}) {
        for (double s : {0.5, 1.0, 2.5}) {
            const auto taps = gaussian_kernel_1d({k, s});
            double sum = 0.0;
            for (double v : taps) sum += v;
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    CHECK_THROWS(gaussian_kernel_1d({4, 1.0}));
    CHECK_THROWS(gaussian_kernel_1d({5, 0.0}));
}

TEST_CASE("boundary_map: constant masks give all zeros") {
    for (int fill : {0, 1}) {
        Mask m(8, 8);
        if (fill) std::fill(m.grid.begin(), m.grid.end(), 1);
        const auto bm = boundary_map(m, {5, 1.0});
        for (double v : bm.values.v) CHECK(v == 0.0);
    }
}

TEST_CASE("boundary_map: centered square matches brute-force oracle, peak on perimeter") {
    Mask m = filled_rect(16, 16, 5, 5, 11, 11);
    const auto bm = boundary_map(m, {5, 1.0});
    const auto ref = oracle::boundary_map(m, 5, 1.0);
    double peak = 0.0;
    int peak_r = -1, peak_c = -1;
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            CHECK(bm.values.at(r, c) == doctest::Approx(ref.at(r, c)).epsilon(1e-9));
            CHECK(bm.values.at(r, c) >= 0.0);
            CHECK(bm.values.at(r, c) <= 1.0);
            if (bm.values.at(r, c) > peak) {
                peak = bm.values.at(r, c);
                peak_r = r;
                peak_c = c;
            }
        }
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-12));
    // peak sits on the square's perimeter band (within one smoothing radius)
    const bool near_border = (std::abs(peak_r - 5) <= 2 || std::abs(peak_r - 10) <= 2) ||
                             (std::abs(peak_c - 5) <= 2 || std::abs(peak_c - 10) <= 2);
    CHECK(near_border);
}

TEST_CASE("boundary_map: equivariant under 180 degree rotation") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Mask m = random_mask(rng, 9, 12, 0.3);
        Mask rot(9, 12);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 12; ++c) rot.at(r, c) = m.at(8 - r, 11 - c);
        const auto bm = boundary_map(m, {5, 1.0});
        const auto br = boundary_map(rot, {5, 1.0});
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 12; ++c)
                CHECK(bm.values.at(r, c) ==
                      doctest::Approx(br.values.at(8 - r, 11 - c)).epsilon(1e-9));
    }
}

TEST_CASE("boundary_map: random masks match the oracle within 1e-6") {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const int h = 3 + static_cast<int>(rng.next_u64() % 14);
        const int w = 3 + static_cast<int>(rng.next_u64() % 14);
        Mask m = random_mask(rng, h, w, 0.35);
        const auto bm = boundary_map(m, {5, 1.0});
        const auto ref = oracle::boundary_map(m, 5, 1.0);
        double max_fg = 0.0;
        for (size_t i = 0; i < ref.v.size(); ++i) {
            CHECK(std::abs(bm.values.v[i] - ref.v[i]) < 1e-6);
            max_fg = std::max(max_fg, bm.values.v[i]);
        }
        // max is exactly 1 unless the mask is constant
        const int64_t fg = m.foreground_count();
        if (fg > 0 && fg < m.size()) CHECK(max_fg == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("surface_points: definitions") {
    CHECK(surface_points(Mask(6, 6)).empty());

    Mask single(8, 8);
    single.at(3, 3) = 1;
    const auto pts = surface_points(single);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0] == PixelCoord{3, 3});

    Mask sq = filled_rect(16, 16, 4, 4, 10, 10); // 6x6 square
    const auto sp = surface_points(sq);
    CHECK(sp.size() == 20);
    for (const auto& p : sp) {
        const bool on_perimeter = p.row == 4 || p.row == 9 || p.col == 4 || p.col == 9;
        CHECK(on_perimeter);
    }

    // full-image foreground: only image-border pixels are surface
    Mask full(5, 7);
    std::fill(full.grid.begin(), full.grid.end(), 1);
    CHECK(surface_points(full).size() == 2 * 5 + 2 * 7 - 4);
}

TEST_CASE("directed_surface_distances: fixtures") {
    Mask a(8, 8);
    a.at(0, 0) = 1;
    Mask b(8, 8);
    b.at(3, 4) = 1;
    const auto d = directed_surface_distances(a, b);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(5.0).epsilon(1e-12));

    Mask sq = filled_rect(16, 16, 2, 3, 8, 9);
    const auto self = directed_surface_distances(sq, sq);
    for (double v : self) CHECK(v == 0.0);

    CHECK_THROWS(directed_surface_distances(Mask(4, 4), b));
    CHECK_THROWS(directed_surface_distances(b, Mask(4, 4)));
}

TEST_CASE("directed_surface_distances: offset squares match the all-pairs oracle") {
    Mask a = filled_rect(16, 16, 6, 4, 10, 8);
    Mask b = filled_rect(16, 16, 6, 6, 10, 10);
    const auto d = directed_surface_distances(a, b);
    const auto ref = oracle::directed_distances(a, b);
    REQUIRE(d.size() == ref.size());
    for (size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - ref[i]) < 1e-12);
}

TEST_CASE("directed_surface_distances: random masks match oracle, translation invariant") {
    Rng rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        Mask a = random_mask(rng, 12, 12, 0.25, true);
        Mask b = random_mask(rng, 12, 12, 0.25, true);
        const auto d = directed_surface_distances(a, b);
        const auto ref = oracle::directed_distances(a, b);
        REQUIRE(d.size() == ref.size());
        for (size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - ref[i]) < 1e-9);
    }

    // translate both masks by (2,3) inside a larger canvas
    Mask a = filled_rect(16, 16, 2, 2, 6, 7);
    Mask b = filled_rect(16, 16, 5, 4, 9, 9);
    Mask at(20, 20), bt(20, 20);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            at.at(r + 2, c + 3) = a.at(r, c);
            bt.at(r + 2, c + 3) = b.at(r, c);
        }
    const auto d0 = directed_surface_distances(a, b);
    const auto d1 = directed_surface_distances(at, bt);
    REQUIRE(d0.size() == d1.size());
    for (size_t i = 0; i < d0.size(); ++i) CHECK(d0[i] == doctest::Approx(d1[i]).epsilon(1e-12));
}
