#ifndef COTSNET_TESTS_ORACLES_HPP
#define COTSNET_TESTS_ORACLES_HPP

// Brute-force reference implementations used only by tests. Everything here
// is written as plain nested loops from the definitions, independent of the
// library code paths it checks.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cotsnet/geometry.hpp"

namespace oracle {

inline double mask_at_clamped(const cots::Mask& m, int y, int x) {
    y = std::clamp(y, 0, m.height - 1);
    x = std::clamp(x, 0, m.width - 1);
    return static_cast<double>(m.at(y, x));
}

// direct 3x3 taps, replicate padding
inline void sobel(const cots::Mask& m, cots::Field& gx, cots::Field& gy) {
    gx = cots::Field(m.height, m.width);
    gy = cots::Field(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const double a = mask_at_clamped(m, y - 1, x - 1);
            const double b = mask_at_clamped(m, y - 1, x);
            const double c = mask_at_clamped(m, y - 1, x + 1);
            const double d = mask_at_clamped(m, y, x - 1);
            const double f = mask_at_clamped(m, y, x + 1);
            const double g = mask_at_clamped(m, y + 1, x - 1);
            const double h = mask_at_clamped(m, y + 1, x);
            const double i = mask_at_clamped(m, y + 1, x + 1);
            gx.at(y, x) = (c + 2.0 * f + i) - (a + 2.0 * d + g);
            gy.at(y, x) = (g + 2.0 * h + i) - (a + 2.0 * b + c);
        }
}

// full 2D Gaussian kernel, explicit double loop, replicate padding
inline cots::Field gaussian(const cots::Field& in, int ksize, double sigma) {
    const int r = ksize / 2;
    std::vector<double> k2(static_cast<size_t>(ksize) * ksize);
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            k2[static_cast<size_t>(dy + r) * ksize + (dx + r)] = v;
            sum += v;
        }
    for (double& v : k2) v /= sum;

    cots::Field out(in.height, in.width);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = std::clamp(y + dy, 0, in.height - 1);
                    const int xx = std::clamp(x + dx, 0, in.width - 1);
                    acc += k2[static_cast<size_t>(dy + r) * ksize + (dx + r)] * in.at(yy, xx);
                }
            out.at(y, x) = acc;
        }
    return out;
}

// explicit Sobel -> explicit Gaussian -> min-max normalization
inline cots::Field boundary_map(const cots::Mask& m, int ksize, double sigma) {
    cots::Field gx, gy;
    sobel(m, gx, gy);
    cots::Field mag(m.height, m.width);
    for (size_t i = 0; i < mag.v.size(); ++i)
        mag.v[i] = std::sqrt(gx.v[i] * gx.v[i] + gy.v[i] * gy.v[i]);
    cots::Field sm = gaussian(mag, ksize, sigma);
    double mn = sm.v[0], mx = sm.v[0];
    for (double v : sm.v) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    cots::Field out(m.height, m.width);
    if (mx > mn)
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = (sm.v[i] - mn) / (mx - mn);
    return out;
}

// surface points by definition scan
inline std::vector<cots::PixelCoord> surface(const cots::Mask& m) {
    std::vector<cots::PixelCoord> pts;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            bool boundary = false;
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int i = 0; i < 4; ++i) {
                if (ny[i] < 0 || ny[i] >= m.height || nx[i] < 0 || nx[i] >= m.width ||
                    m.at(ny[i], nx[i]) == 0) {
                    boundary = true;
                    break;
                }
            }
            if (boundary) pts.push_back({y, x});
        }
    return pts;
}

// all-pairs nearest distances, sorted
inline std::vector<double> directed_distances(const cots::Mask& a, const cots::Mask& b) {
    const auto pa = surface(a);
    const auto pb = surface(b);
    std::vector<double> out;
    for (const auto& p : pa) {
        double best = 1e300;
        for (const auto& q : pb) {
            const double dy = p.row - q.row, dx = p.col - q.col;
            best = std::min(best, dy * dy + dx * dx);
        }
        out.push_back(std::sqrt(best));
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline double asd(const cots::Mask& a, const cots::Mask& b, double spacing) {
    const auto d1 = directed_distances(a, b);
    const auto d2 = directed_distances(b, a);
    double sum = 0.0;
    for (double v : d1) sum += v;
    for (double v : d2) sum += v;
    return spacing * sum / static_cast<double>(d1.size() + d2.size());
}

// linear-interpolated percentile of the pooled symmetric distances
inline double hd95(const cots::Mask& a, const cots::Mask& b, double spacing) {
    auto d = directed_distances(a, b);
    const auto d2 = directed_distances(b, a);
    d.insert(d.end(), d2.begin(), d2.end());
    std::sort(d.begin(), d.end());
    const double pos = 0.95 * static_cast<double>(d.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, d.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return spacing * (d[lo] + frac * (d[hi] - d[lo]));
}

} // namespace oracle

#endif
