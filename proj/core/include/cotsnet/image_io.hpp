#ifndef COTSNET_IMAGE_IO_HPP
#define COTSNET_IMAGE_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace cots {

// Interleaved 8-bit image, row-major.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int h, int w, int c)
        : height(h), width(w), channels(c),
          pixels(static_cast<size_t>(h) * w * c, 0) {}

    uint8_t& at(int r, int c, int ch) {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    uint8_t at(int r, int c, int ch) const {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
};

namespace png {

// 8-bit non-interlaced PNG: gray, gray+alpha, RGB and RGBA inputs are
// accepted (alpha dropped by callers as needed). Throws std::runtime_error
// with the file path on malformed input.
ImageU8 read(const std::string& path);

// channels must be 1 (gray) or 3 (RGB)
void write(const std::string& path, const ImageU8& img);

} // namespace png
} // namespace cots

#endif
