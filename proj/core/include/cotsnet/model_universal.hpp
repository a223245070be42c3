#ifndef COTSNET_MODEL_UNIVERSAL_HPP
#define COTSNET_MODEL_UNIVERSAL_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cotsnet/domain.hpp"
#include "cotsnet/graph.hpp"
#include "cotsnet/rng.hpp"

namespace cots {

enum class Backbone { conv_unet, hierarchical_attention };

Backbone backbone_from_string(const std::string& s);
const char* backbone_name(Backbone b);

struct ModelConfig {
    int in_channels = 3;
    int num_stages = 4;
    std::vector<int> stage_channels = {32, 64, 128, 256};
    Backbone backbone = Backbone::conv_unet;
    int num_domains = 2;
    int input_h = 256;
    int input_w = 256;
    int decoder_feature_channels = 64; // channel width of the decoder tap
    int attention_heads = 4;           // hierarchical_attention only

    void validate() const; // throws with the violated constraint named
};

// One forward pass worth of universal-network outputs. encoder_features[l]
// sits at resolution (H/2^(l+1), W/2^(l+1)); decoder_last at (H/4, W/4).
struct UniversalOutput {
    nn::NodePtr prediction;
    std::vector<nn::NodePtr> encoder_features;
    nn::NodePtr decoder_last;
};

// U-shaped encoder-decoder with per-domain adapters at every encoder stage.
// Both backbones share the decoder and the adapter mechanism; the attention
// variant swaps the encoder stage body for patch-merging attention blocks.
class UniversalNet {
public:
    explicit UniversalNet(ModelConfig cfg, uint64_t seed);

    UniversalOutput forward(nn::Graph& g, const Tensor& images, Domain domain);

    const ModelConfig& config() const { return cfg_; }

    std::vector<nn::Parameter*> all_params();
    std::vector<nn::Parameter*> encoder_params();
    std::vector<nn::Parameter*> decoder_params();
    std::vector<nn::Parameter*> adapter_params(Domain d);

    int64_t parameter_count() const;

private:
    friend class UniversalBuilder;
    struct Impl;
    std::shared_ptr<Impl> impl_;
    ModelConfig cfg_;
};

std::unique_ptr<UniversalNet> build_universal(const ModelConfig& cfg, uint64_t seed);

// shared initializers
namespace init {
void kaiming_uniform(Tensor& t, int fan_in, Rng& rng, double gain = 1.0);
}

} // namespace cots

#endif
