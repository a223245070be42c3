#include <cmath>
#include <stdexcept>

#include "cotsnet/data.hpp"

namespace cots::data {

Tensor boundary_tensor(const Mask& mask, const GaussianSpec& spec);

SynthStyle synth_style_from_string(const std::string& s) {
    if (s == "ellipse_speckle") return SynthStyle::ellipse_speckle;
    if (s == "blob_texture") return SynthStyle::blob_texture;
    throw std::invalid_argument("unknown synthetic style: " + s);
}

const char* synth_style_name(SynthStyle s) {
    return s == SynthStyle::ellipse_speckle ? "ellipse_speckle" : "blob_texture";
}

namespace {

// low-contrast lesion on speckled background, ultrasound-like
ImageSample make_ellipse_speckle(Rng& rng, int size) {
    ImageSample s;
    s.mask = Mask(size, size);
    s.image = Tensor({3, size, size});

    const double cy = rng.uniform(0.35, 0.65) * size;
    const double cx = rng.uniform(0.35, 0.65) * size;
    const double a = rng.uniform(0.12, 0.22) * size;
    const double b = rng.uniform(0.12, 0.22) * size;
    const double ang = rng.uniform(0.0, M_PI);
    const double ca = std::cos(ang), sa = std::sin(ang);

    constexpr double lesion_mean = 0.35;
    constexpr double background_mean = 0.55;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double u = (ca * dx + sa * dy) / a;
            const double v = (-sa * dx + ca * dy) / b;
            const bool inside = u * u + v * v <= 1.0;
            s.mask.at(y, x) = inside ? 1 : 0;
            const double base = inside ? lesion_mean : background_mean;
            const double speckle = 1.0 + 0.30 * rng.normal(); // multiplicative
            const float px = static_cast<float>(std::clamp(base * speckle, 0.0, 1.0));
            for (int c = 0; c < 3; ++c)
                s.image.data()[(static_cast<int64_t>(c) * size + y) * size + x] = px;
        }
    return s;
}

// smooth star-convex blob with banded texture, the other organ's look
ImageSample make_blob_texture(Rng& rng, int size) {
    ImageSample s;
    s.mask = Mask(size, size);
    s.image = Tensor({3, size, size});

    const double cy = rng.uniform(0.38, 0.62) * size;
    const double cx = rng.uniform(0.38, 0.62) * size;
    const double r0 = rng.uniform(0.13, 0.21) * size;
    double amp[4], phase[4];
    for (int k = 0; k < 4; ++k) {
        amp[k] = rng.uniform(-0.15, 0.15) / (k + 1);
        phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    }
    const double band_freq = rng.uniform(0.15, 0.35);
    const double band_phase = rng.uniform(0.0, 2.0 * M_PI);

    constexpr double lesion_mean = 0.62;
    constexpr double background_mean = 0.40;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double theta = std::atan2(dy, dx);
            double r = r0;
            for (int k = 0; k < 4; ++k) r += r0 * amp[k] * std::cos((k + 1) * theta + phase[k]);
            const bool inside = dy * dy + dx * dx <= r * r;
            s.mask.at(y, x) = inside ? 1 : 0;
            const double base = inside ? lesion_mean : background_mean;
            const double bands = 0.06 * std::sin(band_freq * y + band_phase);
            const double grain = 0.05 * rng.normal(); // additive
            const float px = static_cast<float>(std::clamp(base + bands + grain, 0.0, 1.0));
            for (int c = 0; c < 3; ++c)
                s.image.data()[(static_cast<int64_t>(c) * size + y) * size + x] = px;
        }
    return s;
}

} // namespace

std::vector<ImageSample> generate_synthetic(SynthStyle style, int n, uint64_t seed, int size,
                                            Domain domain,
                                            const GaussianSpec& boundary_spec) {
    if (n < 1) throw std::invalid_argument("generate_synthetic: n must be >= 1");
    if (size < 16) throw std::invalid_argument("generate_synthetic: size must be >= 16");
    std::vector<ImageSample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::mix(Rng::mix(seed, static_cast<uint64_t>(style)), static_cast<uint64_t>(i)));
        ImageSample s = style == SynthStyle::ellipse_speckle ? make_ellipse_speckle(rng, size)
                                                             : make_blob_texture(rng, size);
        char id[32];
        std::snprintf(id, sizeof(id), "%s_%04d", synth_style_name(style), i);
        s.id = id;
        s.domain = domain;
        s.boundary = boundary_tensor(s.mask, boundary_spec);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace cots::data
