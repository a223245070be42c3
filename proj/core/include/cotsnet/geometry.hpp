#ifndef COTSNET_GEOMETRY_HPP
#define COTSNET_GEOMETRY_HPP

#include <cstdint>
#include <utility>
#include <vector>

namespace cots {

// Binary mask, row-major, values are exactly 0 or 1.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> grid;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), grid(static_cast<size_t>(h) * w, 0) {}

    uint8_t& at(int r, int c) { return grid[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return grid[static_cast<size_t>(r) * width + c]; }
    int64_t size() const { return static_cast<int64_t>(height) * width; }
    int64_t foreground_count() const;
    bool valid() const;
};

// 2D double field sharing a mask's shape.
struct Field {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Field() = default;
    Field(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w, 0.0) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * width + c]; }
};

struct GradientField {
    Field gx;
    Field gy;
    Field magnitude;
};

struct GaussianSpec {
    int kernel_size = 5; // odd, >= 3
    double sigma = 1.0;  // > 0
};

struct BoundaryMap {
    Field values; // in [0,1]; all zero when the source mask is constant
    GaussianSpec smoothing;
};

struct PixelCoord {
    int row = 0;
    int col = 0;
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

namespace geometry {

// Normalized 1D Gaussian taps for the separable kernel; sums to 1.
std::vector<double> gaussian_kernel_1d(const GaussianSpec& spec);

// 3x3 Sobel response of a binary mask with replicate padding.
// Rejects masks smaller than 3x3.
GradientField sobel_gradients(const Mask& mask);

// Gaussian-smoothed gradient magnitude, min-max normalized to [0,1].
// A constant smoothed field maps to all zeros.
BoundaryMap boundary_map(const Mask& mask, const GaussianSpec& spec);

// Foreground pixels with a 4-connected background or out-of-image neighbor.
std::vector<PixelCoord> surface_points(const Mask& mask);

// For each surface point of `a`, Euclidean distance to the nearest surface
// point of `b`, sorted ascending. Throws if either mask has empty foreground.
std::vector<double> directed_surface_distances(const Mask& a, const Mask& b);

void validate_mask(const Mask& mask);
void validate_spec(const GaussianSpec& spec);

} // namespace geometry
} // namespace cots

#endif
