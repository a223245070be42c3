#include "cotsnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "cotsnet/image_io.hpp"

namespace fs = std::filesystem;

namespace cots::data {

namespace {

// bilinear sample of one channel with half-pixel centers, clamped
float sample_bilinear(const float* plane, int h, int w, float y, float x) {
    y = std::clamp(y, 0.0f, static_cast<float>(h - 1));
    x = std::clamp(x, 0.0f, static_cast<float>(w - 1));
    const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const float fy = y - static_cast<float>(y0), fx = x - static_cast<float>(x0);
    return (1 - fy) * ((1 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1]) +
           fy * ((1 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1]);
}

Tensor resize_image(const Tensor& img, int out_h, int out_w) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (h == out_h && w == out_w) return img;
    Tensor out({c, out_h, out_w});
    const float sy = static_cast<float>(h) / static_cast<float>(out_h);
    const float sx = static_cast<float>(w) / static_cast<float>(out_w);
    for (int ch = 0; ch < c; ++ch) {
        const float* plane = img.data() + static_cast<int64_t>(ch) * h * w;
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                out.data()[(static_cast<int64_t>(ch) * out_h + y) * out_w + x] =
                    sample_bilinear(plane, h, w, (y + 0.5f) * sy - 0.5f,
                                    (x + 0.5f) * sx - 0.5f);
    }
    return out;
}

Mask resize_mask_nearest(const Mask& m, int out_h, int out_w) {
    if (m.height == out_h && m.width == out_w) return m;
    Mask out(out_h, out_w);
    const double sy = static_cast<double>(m.height) / out_h;
    const double sx = static_cast<double>(m.width) / out_w;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const int iy = std::clamp(static_cast<int>((y + 0.5) * sy), 0, m.height - 1);
            const int ix = std::clamp(static_cast<int>((x + 0.5) * sx), 0, m.width - 1);
            out.at(y, x) = m.at(iy, ix) ? 1 : 0;
        }
    return out;
}

Tensor image_from_u8(const ImageU8& img) {
    Tensor out({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const int src_c = img.channels >= 3 ? c : 0; // replicate gray
                out.data()[(static_cast<int64_t>(c) * img.height + y) * img.width + x] =
                    static_cast<float>(img.at(y, x, src_c)) / 255.0f;
            }
    return out;
}

Mask mask_from_u8(const ImageU8& img, const std::string& path) {
    int64_t bad = 0;
    Mask m(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const uint8_t v = img.at(y, x, 0);
            if (v != 0 && v != 255) ++bad;
            m.at(y, x) = v > 127 ? 1 : 0;
        }
    const int64_t total = static_cast<int64_t>(img.height) * img.width;
    if (bad * 100 > total)
        throw std::runtime_error("non-binary mask (more than 1% of pixels outside {0,255}): " +
                                 path);
    return m;
}

} // namespace

Tensor boundary_tensor(const Mask& mask, const GaussianSpec& spec);

Tensor boundary_tensor(const Mask& mask, const GaussianSpec& spec) {
    const BoundaryMap bm = geometry::boundary_map(mask, spec);
    Tensor t({1, mask.height, mask.width});
    for (size_t i = 0; i < bm.values.v.size(); ++i)
        t[static_cast<int64_t>(i)] = static_cast<float>(bm.values.v[i]);
    return t;
}

std::vector<ImageSample> load_dataset(const DatasetSpec& spec, Domain domain) {
    const fs::path images_dir = fs::path(spec.root) / "images";
    const fs::path masks_dir = fs::path(spec.root) / "masks";
    if (!fs::is_directory(images_dir) || !fs::is_directory(masks_dir))
        throw std::runtime_error("dataset root must contain images/ and masks/: " + spec.root);

    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw std::runtime_error("no .png images under " + images_dir.string());

    std::vector<ImageSample> all;
    all.reserve(ids.size());
    for (const auto& id : ids) {
        const fs::path mask_path = masks_dir / (id + ".png");
        if (!fs::exists(mask_path))
            throw std::runtime_error("missing mask for image: " + mask_path.string());
        ImageSample s;
        s.id = id;
        s.domain = domain;
        s.image = resize_image(image_from_u8(png::read((images_dir / (id + ".png")).string())),
                               spec.resize_h, spec.resize_w);
        Mask m = mask_from_u8(png::read(mask_path.string()), mask_path.string());
        s.mask = resize_mask_nearest(m, spec.resize_h, spec.resize_w);
        s.boundary = boundary_tensor(s.mask, spec.boundary_spec);
        all.push_back(std::move(s));
    }

    // deterministic split: seeded shuffle, then the first train_count go to train
    int n_train = spec.train_count;
    if (n_train < 0)
        n_train = static_cast<int>(
            std::round(spec.train_fraction * static_cast<double>(all.size())));
    n_train = std::clamp(n_train, 0, static_cast<int>(all.size()));

    std::vector<int> order(all.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(Rng::mix(spec.seed, 0x73706c69)); // split stream
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<size_t>(rng.next_u64() % i)]);

    std::vector<ImageSample> out;
    if (spec.split == Split::train) {
        for (int i = 0; i < n_train; ++i)
            out.push_back(std::move(all[static_cast<size_t>(order[static_cast<size_t>(i)])]));
    } else {
        for (size_t i = static_cast<size_t>(n_train); i < order.size(); ++i)
            out.push_back(std::move(all[static_cast<size_t>(order[i])]));
    }
    std::sort(out.begin(), out.end(),
              [](const ImageSample& a, const ImageSample& b) { return a.id < b.id; });
    return out;
}

void write_dataset(const std::string& dir, const std::vector<ImageSample>& samples) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    for (const auto& s : samples) {
        const int h = s.image.dim(1), w = s.image.dim(2);
        ImageU8 img(h, w, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    const float v = s.image.data()[(static_cast<int64_t>(c) * h + y) * w + x];
                    img.at(y, x, c) = static_cast<uint8_t>(
                        std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
                }
        png::write((fs::path(dir) / "images" / (s.id + ".png")).string(), img);

        ImageU8 msk(h, w, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) msk.at(y, x, 0) = s.mask.at(y, x) ? 255 : 0;
        png::write((fs::path(dir) / "masks" / (s.id + ".png")).string(), msk);
    }
}

AugmentParams sample_augment_params(Rng& rng) {
    AugmentParams p;
    p.flip = rng.bernoulli(0.5);
    p.flip_vertical = rng.bernoulli(0.5);
    p.noise = rng.bernoulli(0.5);
    p.noise_sigma = rng.uniform(0.01, 0.05);
    p.jitter = rng.bernoulli(0.5);
    p.brightness = rng.uniform(-0.2, 0.2);
    p.contrast = rng.uniform(0.8, 1.2);
    p.shift = rng.bernoulli(0.5);
    p.shift_y = rng.uniform(-0.1, 0.1);
    p.shift_x = rng.uniform(-0.1, 0.1);
    p.zoom = rng.bernoulli(0.5);
    p.zoom_factor = rng.uniform(0.9, 1.1);
    p.rotate = rng.bernoulli(0.5);
    p.angle_deg = rng.uniform(-15.0, 15.0);
    p.noise_seed = rng.next_u64();
    return p;
}

ImageSample augment_with(const ImageSample& s, const AugmentParams& p,
                         const GaussianSpec& boundary_spec) {
    const int h = s.image.dim(1), w = s.image.dim(2);
    ImageSample out;
    out.id = s.id;
    out.domain = s.domain;

    const bool geometric = p.flip || p.shift || p.zoom || p.rotate;
    if (geometric) {
        // inverse mapping: output pixel -> source coordinates
        const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
        const double ang = p.rotate ? p.angle_deg * M_PI / 180.0 : 0.0;
        const double zoom = p.zoom ? p.zoom_factor : 1.0;
        const double cos_a = std::cos(ang) / zoom, sin_a = std::sin(ang) / zoom;
        const double ty = p.shift ? p.shift_y * h : 0.0;
        const double tx = p.shift ? p.shift_x * w : 0.0;

        out.image = Tensor({3, h, w});
        out.mask = Mask(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double oy = y, ox = x;
                if (p.flip) {
                    if (p.flip_vertical) oy = h - 1 - oy;
                    else ox = w - 1 - ox;
                }
                const double ry = oy - cy - ty, rx = ox - cx - tx;
                const double sy = cy + (cos_a * ry - sin_a * rx);
                const double sx = cx + (sin_a * ry + cos_a * rx);
                for (int c = 0; c < 3; ++c)
                    out.image.data()[(static_cast<int64_t>(c) * h + y) * w + x] =
                        sample_bilinear(s.image.data() + static_cast<int64_t>(c) * h * w, h, w,
                                        static_cast<float>(sy), static_cast<float>(sx));
                const int my = static_cast<int>(std::lround(sy));
                const int mx = static_cast<int>(std::lround(sx));
                out.mask.at(y, x) =
                    (my >= 0 && my < h && mx >= 0 && mx < w) ? s.mask.at(my, mx) : 0;
            }
    } else {
        out.image = s.image;
        out.mask = s.mask;
    }

    if (p.noise || p.jitter) {
        Rng noise_rng(Rng::mix(0x6e6f6973, p.noise_seed));
        for (int64_t i = 0; i < out.image.numel(); ++i) {
            double v = out.image[i];
            if (p.jitter) v = (v - 0.5) * p.contrast + 0.5 + p.brightness;
            if (p.noise) v += p.noise_sigma * noise_rng.normal();
            out.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }

    out.boundary = geometric ? boundary_tensor(out.mask, boundary_spec) : s.boundary;
    return out;
}

ImageSample augment(const ImageSample& s, Rng& rng, const GaussianSpec& boundary_spec) {
    return augment_with(s, sample_augment_params(rng), boundary_spec);
}

DomainBatch make_batch(const std::vector<ImageSample>& samples,
                       const std::vector<int>& indices, Domain domain) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    const ImageSample& first = samples[static_cast<size_t>(indices[0])];
    const int h = first.image.dim(1), w = first.image.dim(2);
    const int b = static_cast<int>(indices.size());

    DomainBatch batch;
    batch.domain = domain;
    batch.images = Tensor({b, 3, h, w});
    batch.masks = Tensor({b, 1, h, w});
    batch.boundaries = Tensor({b, 1, h, w});
    for (int i = 0; i < b; ++i) {
        const ImageSample& s = samples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
        if (s.domain != domain) throw std::logic_error("make_batch: mixed domains");
        std::copy_n(s.image.data(), s.image.numel(),
                    batch.images.data() + static_cast<int64_t>(i) * 3 * h * w);
        for (int64_t j = 0; j < static_cast<int64_t>(h) * w; ++j)
            batch.masks.data()[static_cast<int64_t>(i) * h * w + j] =
                s.mask.grid[static_cast<size_t>(j)] ? 1.0f : 0.0f;
        std::copy_n(s.boundary.data(), s.boundary.numel(),
                    batch.boundaries.data() + static_cast<int64_t>(i) * h * w);
        batch.ids.push_back(s.id);
    }
    return batch;
}

PairedIterator::PairedIterator(const std::vector<ImageSample>& source,
                               const std::vector<ImageSample>& target, int batch_size,
                               uint64_t seed, bool augment, GaussianSpec boundary_spec,
                               bool drop_last)
    : batch_size_(batch_size), seed_(seed), augment_(augment),
      boundary_spec_(boundary_spec), drop_last_(drop_last) {
    if (source.empty() || target.empty())
        throw std::runtime_error("paired_iterator: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("paired_iterator: batch_size must be >= 1");
    source_.set = &source;
    target_.set = &target;
    const size_t ns = source.size(), nt = target.size();
    source_.primary = ns >= nt;
    target_.primary = nt >= ns;
    const int64_t n_max = static_cast<int64_t>(std::max(ns, nt));
    if (drop_last_)
        iterations_ = static_cast<int>(std::max<int64_t>(n_max / batch_size, 1));
    else
        iterations_ = static_cast<int>((n_max + batch_size - 1) / batch_size);
    reshuffle(source_, 0);
    reshuffle(target_, 0);
}

void PairedIterator::reshuffle(Stream& s, uint64_t salt) {
    const size_t n = s.set->size();
    s.order.resize(n);
    for (size_t i = 0; i < n; ++i) s.order[i] = static_cast<int>(i);
    const uint64_t domain_tag = s.set == source_.set ? 0x53 : 0x54;
    Rng rng(Rng::mix(Rng::mix(seed_, domain_tag), salt));
    for (size_t i = n; i > 1; --i)
        std::swap(s.order[i - 1], s.order[static_cast<size_t>(rng.next_u64() % i)]);
    s.pos = 0;
}

void PairedIterator::start_epoch(int epoch) {
    epoch_ = epoch;
    if (source_.primary) reshuffle(source_, 0x652 + static_cast<uint64_t>(epoch));
    if (target_.primary) reshuffle(target_, 0x652 + static_cast<uint64_t>(epoch));
    // epoch-keyed augmentation stream, so a resumed run draws identically
    draw_counter_ = static_cast<int64_t>(epoch) * iterations_ * batch_size_;
}

std::vector<int> PairedIterator::take(Stream& s, int want) {
    // evaluation keeps the short trailing batch of the driving dataset
    if (s.primary && !drop_last_ && s.pos < s.order.size())
        want = std::min(want, static_cast<int>(s.order.size() - s.pos));
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(want));
    while (static_cast<int>(idx.size()) < want) {
        if (s.pos >= s.order.size()) {
            ++s.cycle;
            reshuffle(s, s.primary ? 0x652 + static_cast<uint64_t>(epoch_) + 1000003u
                                   : 0x9e1 + static_cast<uint64_t>(s.cycle));
        }
        idx.push_back(s.order[s.pos++]);
    }
    return idx;
}

DomainBatch PairedIterator::build(Stream& s, const std::vector<int>& idx, Domain domain) {
    if (!augment_) return make_batch(*s.set, idx, domain);
    std::vector<ImageSample> augmented;
    augmented.reserve(idx.size());
    std::vector<int> local;
    for (int i : idx) {
        Rng rng(Rng::mix(Rng::mix(seed_ ^ 0xA06u, static_cast<uint64_t>(domain_index(domain))),
                         static_cast<uint64_t>(draw_counter_++)));
        augmented.push_back(augment((*s.set)[static_cast<size_t>(i)], rng, boundary_spec_));
        local.push_back(static_cast<int>(augmented.size()) - 1);
    }
    return make_batch(augmented, local, domain);
}

std::pair<DomainBatch, DomainBatch> PairedIterator::next() {
    const auto src_idx = take(source_, batch_size_);
    const auto tgt_idx = take(target_, batch_size_);
    return {build(source_, src_idx, Domain::source), build(target_, tgt_idx, Domain::target)};
}

} // namespace cots::data
