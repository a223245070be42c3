#ifndef COTSNET_DATA_HPP
#define COTSNET_DATA_HPP

#include <string>
#include <utility>
#include <vector>

#include "cotsnet/domain.hpp"
#include "cotsnet/geometry.hpp"
#include "cotsnet/rng.hpp"
#include "cotsnet/tensor.hpp"

namespace cots::data {

// One image with its mask, cached boundary map and domain tag.
struct ImageSample {
    Tensor image;    // (3,H,W) in [0,1]
    Mask mask;       // same spatial shape
    Tensor boundary; // (1,H,W) in [0,1], geometry::boundary_map of mask
    Domain domain = Domain::source;
    std::string id;
};

enum class Split { train, test };

struct DatasetSpec {
    std::string root; // contains images/ and masks/
    Split split = Split::train;
    int resize_h = 256;
    int resize_w = 256;
    bool augmentation = false;
    uint64_t seed = 0;
    GaussianSpec boundary_spec{5, 1.0};
    // train/test partition of the flat directory layout; train_count < 0
    // selects by fraction
    int train_count = -1;
    double train_fraction = 0.8;
};

// Loads, resizes (bilinear image / nearest re-binarized mask), computes
// boundary maps, orders deterministically, then applies the split selection.
std::vector<ImageSample> load_dataset(const DatasetSpec& spec, Domain domain);

enum class SynthStyle { ellipse_speckle, blob_texture };
SynthStyle synth_style_from_string(const std::string& s);
const char* synth_style_name(SynthStyle s);

std::vector<ImageSample> generate_synthetic(SynthStyle style, int n, uint64_t seed, int size,
                                            Domain domain,
                                            const GaussianSpec& boundary_spec = {5, 1.0});

// Writes samples in the standard layout: <dir>/images/<id>.png, <dir>/masks/<id>.png.
void write_dataset(const std::string& dir, const std::vector<ImageSample>& samples);

// Sampled augmentation decision; the default value is the identity transform.
struct AugmentParams {
    bool flip = false;
    bool flip_vertical = false; // orientation when flip fires
    bool noise = false;
    double noise_sigma = 0.0;
    bool jitter = false;
    double brightness = 0.0; // additive, +-0.2
    double contrast = 1.0;   // multiplicative, +-20%
    bool shift = false;
    double shift_y = 0.0, shift_x = 0.0; // fraction of size, +-0.1
    bool zoom = false;
    double zoom_factor = 1.0; // +-10%
    bool rotate = false;
    double angle_deg = 0.0; // +-15
    uint64_t noise_seed = 0;
};

AugmentParams sample_augment_params(Rng& rng);

// Geometric transforms move image (bilinear) and mask (nearest) together;
// the boundary map is recomputed from the transformed mask.
ImageSample augment_with(const ImageSample& s, const AugmentParams& p,
                         const GaussianSpec& boundary_spec);
ImageSample augment(const ImageSample& s, Rng& rng, const GaussianSpec& boundary_spec);

struct DomainBatch {
    Tensor images;     // (B,3,H,W)
    Tensor masks;      // (B,1,H,W) of {0,1}
    Tensor boundaries; // (B,1,H,W)
    Domain domain = Domain::source;
    std::vector<std::string> ids;
    int size() const { return images.empty() ? 0 : images.dim(0); }
};

DomainBatch make_batch(const std::vector<ImageSample>& samples,
                       const std::vector<int>& indices, Domain domain);

// Yields one source batch plus one target batch per iteration. The longer
// dataset drives the epoch and is reshuffled per (seed, epoch); the shorter
// one cycles with a reshuffle per cycle. Incomplete trailing batches of the
// driving dataset are dropped when drop_last is set.
class PairedIterator {
public:
    PairedIterator(const std::vector<ImageSample>& source,
                   const std::vector<ImageSample>& target, int batch_size, uint64_t seed,
                   bool augment = false, GaussianSpec boundary_spec = {5, 1.0},
                   bool drop_last = true);

    int iterations_per_epoch() const { return iterations_; }
    void start_epoch(int epoch);
    std::pair<DomainBatch, DomainBatch> next();

private:
    struct Stream {
        const std::vector<ImageSample>* set = nullptr;
        std::vector<int> order;
        size_t pos = 0;
        int64_t cycle = 0;
        bool primary = false; // reshuffled per epoch instead of per cycle
    };
    void reshuffle(Stream& s, uint64_t salt);
    std::vector<int> take(Stream& s, int want);
    DomainBatch build(Stream& s, const std::vector<int>& idx, Domain domain);

    Stream source_, target_;
    int batch_size_;
    uint64_t seed_;
    bool augment_;
    GaussianSpec boundary_spec_;
    bool drop_last_;
    int iterations_ = 0;
    int epoch_ = 0;
    int64_t draw_counter_ = 0;
};

} // namespace cots::data

#endif
