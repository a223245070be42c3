#include <doctest.h>

#include <cmath>

#include "cotsnet/metrics.hpp"
#include "cotsnet/rng.hpp"
#include "oracles.hpp"

using namespace cots;
using namespace cots::metrics;

namespace {

Mask rect(int h, int w, int r0, int c0, int r1, int c1) {
    Mask m(h, w);
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) m.at(r, c) = 1;
    return m;
}

Mask random_nonempty(Rng& rng, int h, int w, double p) {
    Mask m(h, w);
    for (auto& v : m.grid) v = rng.bernoulli(p) ? 1 : 0;
    if (m.foreground_count() == 0) m.at(h / 2, w / 2) = 1;
    return m;
}

} // namespace

TEST_CASE("dice/iou: fixtures and pixel-count arithmetic") {
    Mask a = rect(16, 16, 2, 2, 12, 12);
    CHECK(dice_score(a, a) == 100.0);
    CHECK(iou_score(a, a) == 100.0);

    Mask b = rect(16, 16, 0, 0, 2, 2);
    Mask c = rect(16, 16, 10, 10, 14, 14);
    CHECK(dice_score(b, c) == 0.0);
    CHECK(iou_score(b, c) == 0.0);

    // |P| = |G| = 100, overlap 50
    Mask p = rect(20, 20, 0, 0, 10, 10);
    Mask g = rect(20, 20, 5, 0, 15, 10);
    CHECK(dice_score(p, g) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(iou_score(p, g) == doctest::Approx(100.0 * 50.0 / 150.0).epsilon(1e-12));

    Mask empty(16, 16);
    CHECK(dice_score(empty, empty) == 100.0);
    CHECK(iou_score(empty, empty) == 100.0);
    CHECK(dice_score(empty, a) == 0.0);

    CHECK_THROWS_AS(dice_score(Mask(4, 4), Mask(5, 5)), std::invalid_argument);
}

TEST_CASE("dice >= iou for any mask pair") {
    Rng rng(71);
    for (int t = 0; t < 50; ++t) {
        Mask a = random_nonempty(rng, 12, 12, 0.35);
        Mask b = random_nonempty(rng, 12, 12, 0.35);
        CHECK(dice_score(a, b) >= iou_score(a, b) - 1e-12);
    }
}

TEST_CASE("asd/hd95: fixtures") {
    Mask a = rect(16, 16, 3, 3, 9, 9);
    CHECK(asd(a, a) == 0.0);
    CHECK(hd95(a, a) == 0.0);

    Mask p(12, 12), q(12, 12);
    p.at(2, 2) = 1;
    q.at(2, 7) = 1; // five pixels apart
    CHECK(asd(p, q) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(asd(p, q, 0.3) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(hd95(p, q) == doctest::Approx(5.0).epsilon(1e-12));

    Mask sq1 = rect(16, 16, 6, 4, 10, 8);
    Mask sq2 = rect(16, 16, 6, 6, 10, 10);
    CHECK(asd(sq1, sq2) == doctest::Approx(oracle::asd(sq1, sq2, 1.0)).epsilon(1e-12));
    CHECK(hd95(sq1, sq2) == doctest::Approx(oracle::hd95(sq1, sq2, 1.0)).epsilon(1e-12));
}

TEST_CASE("hd95: interpolated percentile fixture and upper bound") {
    // pooled distances 19 zeros and one 10: interpolated percentile from order stats
    std::vector<double> d(19, 0.0);
    d.push_back(10.0);
    const double pos = 0.95 * 19.0; // 18.05
    const double expected = 0.0 + (pos - 18.0) * 10.0;
    CHECK(percentile_linear(d, 0.95) == doctest::Approx(expected).epsilon(1e-12));

    Rng rng(72);
    for (int t = 0; t < 30; ++t) {
        Mask a = random_nonempty(rng, 14, 14, 0.3);
        Mask b = random_nonempty(rng, 14, 14, 0.3);
        const auto d1 = geometry::directed_surface_distances(a, b);
        const auto d2 = geometry::directed_surface_distances(b, a);
        const double max_d = std::max(d1.back(), d2.back());
        CHECK(hd95(a, b) <= max_d + 1e-12);
    }
}

TEST_CASE("asd/hd95: symmetric and equal to the all-pairs oracle on random pairs") {
    Rng rng(73);
    for (int t = 0; t < 60; ++t) {
        Mask a = random_nonempty(rng, 16, 16, 0.3);
        Mask b = random_nonempty(rng, 16, 16, 0.3);
        const double v = asd(a, b);
        CHECK(std::abs(v - asd(b, a)) < 1e-12);
        CHECK(std::abs(v - oracle::asd(a, b, 1.0)) < 1e-9);
        const double h = hd95(a, b);
        CHECK(std::abs(h - hd95(b, a)) < 1e-12);
        CHECK(std::abs(h - oracle::hd95(a, b, 1.0)) < 1e-9);
    }
}

TEST_CASE("binarize thresholds a probability map") {
    Tensor probs({1, 1, 2, 2});
    probs[0] = 0.2f;
    probs[1] = 0.5f;
    probs[2] = 0.7f;
    probs[3] = 0.49f;
    Mask m = binarize(probs, 0.5);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 1); // >= threshold
    CHECK(m.at(1, 0) == 1);
    CHECK(m.at(1, 1) == 0);
}

TEST_CASE("metric report: JSON round trip is lossless") {
    MetricReport r;
    r.spacing = 0.5;
    r.threshold = 0.4;
    r.per_image.push_back({"a", 91.25, 84.0, 1.5, 3.75});
    r.per_image.push_back({"b", 100.0, 100.0, std::nullopt, std::nullopt});
    r.finalize();
    CHECK(r.distance_excluded == 1);
    CHECK(r.aggregate.dice == doctest::Approx((91.25 + 100.0) / 2).epsilon(1e-12));
    CHECK(r.aggregate.asd == doctest::Approx(1.5).epsilon(1e-12));

    const std::string text = r.to_json();
    const MetricReport back = MetricReport::from_json(text);
    CHECK(back.spacing == r.spacing);
    CHECK(back.threshold == r.threshold);
    REQUIRE(back.per_image.size() == 2);
    CHECK(back.per_image[0].dice == r.per_image[0].dice);
    CHECK(back.per_image[0].asd.value() == r.per_image[0].asd.value());
    CHECK_FALSE(back.per_image[1].asd.has_value());
    CHECK(back.distance_excluded == 1);
    CHECK(back.to_json() == text);
}

TEST_CASE("evaluate: oracle-model fixture scores perfectly") {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 32;
    cfg.num_stages = 2;
    cfg.stage_channels = {8, 16};
    cfg.decoder_feature_channels = 8;
    auto samples = data::generate_synthetic(data::SynthStyle::ellipse_speckle, 3, 11, 32,
                                            Domain::target);

    // a model fixture cannot return the ground truth, so check the identity
    // at the metric layer instead: per-image metrics of gt vs gt
    MetricReport r;
    r.threshold = 0.5;
    for (const auto& s : samples) {
        PerImageMetrics m;
        m.id = s.id;
        m.dice = dice_score(s.mask, s.mask);
        m.iou = iou_score(s.mask, s.mask);
        m.asd = asd(s.mask, s.mask);
        m.hd95 = hd95(s.mask, s.mask);
        r.per_image.push_back(m);
    }
    r.finalize();
    CHECK(r.aggregate.dice == 100.0);
    CHECK(r.aggregate.iou == 100.0);
    CHECK(r.aggregate.asd == 0.0);
    CHECK(r.aggregate.hd95 == 0.0);

    // and run the real evaluate() end to end for shape/finite sanity
    auto net = build_universal(cfg, 0);
    const MetricReport live = evaluate(*net, samples, Domain::target, 0.5, 1.0);
    REQUIRE(live.per_image.size() == 3);
    for (const auto& m : live.per_image) {
        CHECK(std::isfinite(m.dice));
        CHECK(m.dice >= 0.0);
        CHECK(m.dice <= 100.0);
        CHECK(m.iou <= m.dice + 1e-9);
    }

    // spacing is a pure multiplier on the distance metrics
    const MetricReport s1 = evaluate(*net, samples, Domain::target, 0.4, 1.0);
    const MetricReport s2 = evaluate(*net, samples, Domain::target, 0.4, 0.5);
    REQUIRE(s1.per_image.size() == s2.per_image.size());
    for (size_t i = 0; i < s1.per_image.size(); ++i) {
        if (!s1.per_image[i].asd) continue;
        CHECK(*s2.per_image[i].asd == 0.5 * *s1.per_image[i].asd);
        CHECK(*s2.per_image[i].hd95 == 0.5 * *s1.per_image[i].hd95);
    }
}

TEST_CASE("evaluate: constant-0.5 model with threshold 0.4 marks everything foreground") {
    // hand-computed phantom: gt is a centered 6x6 square in 16x16, prediction all ones
    Mask gt = rect(16, 16, 5, 5, 11, 11);
    Mask all(16, 16);
    std::fill(all.grid.begin(), all.grid.end(), 1);

    const double inter = 36.0, p = 256.0, g = 36.0;
    CHECK(dice_score(all, gt) == doctest::Approx(100.0 * 2 * inter / (p + g)).epsilon(1e-12));
    CHECK(iou_score(all, gt) == doctest::Approx(100.0 * inter / 256.0).epsilon(1e-12));
    CHECK(asd(all, gt) == doctest::Approx(oracle::asd(all, gt, 1.0)).epsilon(1e-12));
}
