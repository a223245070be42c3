#include "cotsnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cots {

int64_t Mask::foreground_count() const {
    int64_t n = 0;
    for (uint8_t v : grid) n += (v != 0);
    return n;
}

bool Mask::valid() const {
    if (height < 1 || width < 1) return false;
    if (grid.size() != static_cast<size_t>(height) * width) return false;
    for (uint8_t v : grid)
        if (v > 1) return false;
    return true;
}

namespace geometry {

void validate_mask(const Mask& mask) {
    if (!mask.valid()) throw std::invalid_argument("mask is not a valid {0,1} grid");
}

void validate_spec(const GaussianSpec& spec) {
    if (spec.kernel_size < 3 || spec.kernel_size % 2 == 0)
        throw std::invalid_argument("gaussian kernel_size must be odd and >= 3");
    if (!(spec.sigma > 0.0))
        throw std::invalid_argument("gaussian sigma must be positive");
}

std::vector<double> gaussian_kernel_1d(const GaussianSpec& spec) {
    validate_spec(spec);
    const int r = spec.kernel_size / 2;
    std::vector<double> k(static_cast<size_t>(spec.kernel_size));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * spec.sigma * spec.sigma));
        k[static_cast<size_t>(i + r)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace {

inline int clamp_idx(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// separable Gaussian with replicate padding
Field gaussian_smooth(const Field& in, const GaussianSpec& spec) {
    const std::vector<double> k = gaussian_kernel_1d(spec);
    const int r = spec.kernel_size / 2;
    const int h = in.height, w = in.width;
    Field tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t)
                s += k[static_cast<size_t>(t + r)] * in.at(y, clamp_idx(x + t, w));
            tmp.at(y, x) = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t)
                s += k[static_cast<size_t>(t + r)] * tmp.at(clamp_idx(y + t, h), x);
            out.at(y, x) = s;
        }
    return out;
}

// Felzenszwalb-Huttenlocher 1D squared distance transform (lower envelope).
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(static_cast<size_t>(n));
    std::vector<double> z(static_cast<size_t>(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = ((f[static_cast<size_t>(q)] + static_cast<double>(q) * q) -
                    (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
                     static_cast<double>(v[static_cast<size_t>(k)]) * v[static_cast<size_t>(k)])) /
                   (2.0 * q - 2.0 * v[static_cast<size_t>(k)]);
        while (s <= z[static_cast<size_t>(k)]) {
            --k;
            s = ((f[static_cast<size_t>(q)] + static_cast<double>(q) * q) -
                 (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
                  static_cast<double>(v[static_cast<size_t>(k)]) * v[static_cast<size_t>(k)])) /
                (2.0 * q - 2.0 * v[static_cast<size_t>(k)]);
        }
        ++k;
        v[static_cast<size_t>(k)] = q;
        z[static_cast<size_t>(k)] = s;
        z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<size_t>(k) + 1] < q) ++k;
        const int vk = v[static_cast<size_t>(k)];
        d[static_cast<size_t>(q)] = (static_cast<double>(q) - vk) * (q - vk) + f[static_cast<size_t>(vk)];
    }
}

// Exact squared Euclidean distance to the nearest seed pixel.
Field edt_squared(int h, int w, const std::vector<PixelCoord>& seeds) {
    constexpr double kInf = 1e18;
    Field d(h, w);
    std::fill(d.v.begin(), d.v.end(), kInf);
    for (const auto& p : seeds) d.at(p.row, p.col) = 0.0;

    std::vector<double> f(static_cast<size_t>(std::max(h, w)));
    std::vector<double> out(static_cast<size_t>(std::max(h, w)));
    for (int x = 0; x < w; ++x) { // along columns
        for (int y = 0; y < h; ++y) f[static_cast<size_t>(y)] = d.at(y, x);
        f.resize(static_cast<size_t>(h));
        out.resize(static_cast<size_t>(h));
        edt_1d(f, out);
        for (int y = 0; y < h; ++y) d.at(y, x) = out[static_cast<size_t>(y)];
        f.resize(static_cast<size_t>(std::max(h, w)));
        out.resize(static_cast<size_t>(std::max(h, w)));
    }
    for (int y = 0; y < h; ++y) { // along rows
        for (int x = 0; x < w; ++x) f[static_cast<size_t>(x)] = d.at(y, x);
        f.resize(static_cast<size_t>(w));
        out.resize(static_cast<size_t>(w));
        edt_1d(f, out);
        for (int x = 0; x < w; ++x) d.at(y, x) = out[static_cast<size_t>(x)];
        f.resize(static_cast<size_t>(std::max(h, w)));
        out.resize(static_cast<size_t>(std::max(h, w)));
    }
    return d;
}

} // namespace

GradientField sobel_gradients(const Mask& mask) {
    validate_mask(mask);
    if (mask.height < 3 || mask.width < 3)
        throw std::invalid_argument("sobel_gradients requires a mask of at least 3x3");

    // row weights 1,2,1 with column difference for gx and the transpose for gy
    static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

    const int h = mask.height, w = mask.width;
    GradientField g{Field(h, w), Field(h, w), Field(h, w)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sx = 0.0, sy = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double m = mask.at(clamp_idx(y + dy, h), clamp_idx(x + dx, w));
                    sx += kx[dy + 1][dx + 1] * m;
                    sy += ky[dy + 1][dx + 1] * m;
                }
            g.gx.at(y, x) = sx;
            g.gy.at(y, x) = sy;
            g.magnitude.at(y, x) = std::sqrt(sx * sx + sy * sy);
        }
    return g;
}

BoundaryMap boundary_map(const Mask& mask, const GaussianSpec& spec) {
    validate_mask(mask);
    validate_spec(spec);
    const GradientField g = sobel_gradients(mask);
    const Field smoothed = gaussian_smooth(g.magnitude, spec);

    const auto [mn_it, mx_it] = std::minmax_element(smoothed.v.begin(), smoothed.v.end());
    const double mn = *mn_it, mx = *mx_it;

    BoundaryMap out;
    out.smoothing = spec;
    out.values = Field(mask.height, mask.width);
    if (mx > mn) {
        const double inv = 1.0 / (mx - mn);
        for (size_t i = 0; i < smoothed.v.size(); ++i)
            out.values.v[i] = (smoothed.v[i] - mn) * inv;
    }
    // constant smoothed field (e.g. constant mask): leave all zeros
    return out;
}

std::vector<PixelCoord> surface_points(const Mask& mask) {
    validate_mask(mask);
    std::vector<PixelCoord> pts;
    const int h = mask.height, w = mask.width;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            const bool edge =
                y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                !mask.at(y - 1, x) || !mask.at(y + 1, x) ||
                !mask.at(y, x - 1) || !mask.at(y, x + 1);
            if (edge) pts.push_back({y, x});
        }
    return pts;
}

std::vector<double> directed_surface_distances(const Mask& a, const Mask& b) {
    const auto pa = surface_points(a);
    const auto pb = surface_points(b);
    if (pa.empty() || pb.empty())
        throw std::runtime_error("directed_surface_distances: mask has empty foreground");

    const Field d2 = edt_squared(std::max(a.height, b.height), std::max(a.width, b.width), pb);
    std::vector<double> out;
    out.reserve(pa.size());
    for (const auto& p : pa) out.push_back(std::sqrt(d2.at(p.row, p.col)));
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace geometry
} // namespace cots
