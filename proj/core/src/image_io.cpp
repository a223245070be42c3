#include "cotsnet/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace cots::png {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw std::runtime_error("png: " + path + ": " + why);
}

uint32_t be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

struct File {
    std::FILE* f = nullptr;
    explicit File(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~File() {
        if (f) std::fclose(f);
    }
};

} // namespace

ImageU8 read(const std::string& path) {
    File file(path, "rb");
    if (!file.f) fail(path, "cannot open");
    std::fseek(file.f, 0, SEEK_END);
    const long fsize = std::ftell(file.f);
    std::fseek(file.f, 0, SEEK_SET);
    if (fsize < 8) fail(path, "truncated file");
    std::vector<uint8_t> raw(static_cast<size_t>(fsize));
    if (std::fread(raw.data(), 1, raw.size(), file.f) != raw.size()) fail(path, "read error");
    if (std::memcmp(raw.data(), kSignature, 8) != 0) fail(path, "not a PNG file");

    uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = -1, interlace = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool saw_iend = false;
    while (pos + 8 <= raw.size()) {
        const uint32_t len = be32(&raw[pos]);
        if (pos + 12 + len > raw.size()) fail(path, "truncated chunk");
        const char* type = reinterpret_cast<const char*>(&raw[pos + 4]);
        const uint8_t* data = &raw[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) fail(path, "bad IHDR");
            width = be32(data);
            height = be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        } else if (std::memcmp(type, "PLTE", 4) == 0) {
            fail(path, "palette images are not supported (expected 8-bit gray or RGB)");
        }
        pos += 12 + len;
    }
    if (!saw_iend || width == 0 || height == 0) fail(path, "missing image data");
    if (bit_depth != 8) fail(path, "only 8-bit images are supported");
    if (interlace != 0) fail(path, "interlaced images are not supported");

    int channels = 0;
    switch (color_type) {
        case 0: channels = 1; break; // gray
        case 2: channels = 3; break; // rgb
        case 4: channels = 2; break; // gray + alpha
        case 6: channels = 4; break; // rgba
        default: fail(path, "unsupported color type");
    }

    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> scan((stride + 1) * height);
    uLongf out_len = static_cast<uLongf>(scan.size());
    const int zrc = uncompress(scan.data(), &out_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || out_len != scan.size()) fail(path, "corrupt compressed stream");

    ImageU8 img(static_cast<int>(height), static_cast<int>(width), channels);
    const int bpp = channels;
    std::vector<uint8_t> prev(stride, 0);
    for (uint32_t y = 0; y < height; ++y) {
        const uint8_t filter = scan[y * (stride + 1)];
        const uint8_t* src = &scan[y * (stride + 1) + 1];
        uint8_t* dst = &img.pixels[static_cast<size_t>(y) * stride];
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            const int b = prev[x];
            const int c = x >= static_cast<size_t>(bpp) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: fail(path, "unknown scanline filter");
            }
            dst[x] = static_cast<uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

void write(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("png::write: channels must be 1 or 3");
    if (img.height < 1 || img.width < 1)
        throw std::invalid_argument("png::write: empty image");

    const size_t stride = static_cast<size_t>(img.width) * img.channels;
    std::vector<uint8_t> scan((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        scan[static_cast<size_t>(y) * (stride + 1)] = 0; // filter: none
        std::memcpy(&scan[static_cast<size_t>(y) * (stride + 1) + 1],
                    &img.pixels[static_cast<size_t>(y) * stride], stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(scan.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, scan.data(), static_cast<uLong>(scan.size()),
                  6) != Z_OK)
        throw std::runtime_error("png: " + path + ": compression failed");
    compressed.resize(bound);

    std::vector<uint8_t> out;
    out.insert(out.end(), kSignature, kSignature + 8);
    auto chunk = [&out](const char* type, const std::vector<uint8_t>& data) {
        put_be32(out, static_cast<uint32_t>(data.size()));
        const size_t start = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), data.begin(), data.end());
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
        put_be32(out, crc);
    };

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);                                      // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);              // gray / rgb
    ihdr.push_back(0);                                      // compression
    ihdr.push_back(0);                                      // filter
    ihdr.push_back(0);                                      // no interlace
    chunk("IHDR", ihdr);
    chunk("IDAT", compressed);
    chunk("IEND", {});

    File file(path, "wb");
    if (!file.f) throw std::runtime_error("png: " + path + ": cannot open for writing");
    if (std::fwrite(out.data(), 1, out.size(), file.f) != out.size())
        throw std::runtime_error("png: " + path + ": write error");
}

} // namespace cots::png
