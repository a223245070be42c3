#ifndef COTSNET_MODEL_AUXILIARY_HPP
#define COTSNET_MODEL_AUXILIARY_HPP

#include <memory>
#include <vector>

#include "cotsnet/model_universal.hpp"

namespace cots {

struct AuxConfig {
    int reduction_ratio = 8; // channel-attention bottleneck
    int spatial_kernel = 7;  // spatial-attention conv
    bool use_haam = true;    // ablation toggle; off bypasses the attention pair
};

struct HaamOutput {
    nn::NodePtr channel_gate; // (N,C), sigmoid-bounded
    nn::NodePtr channel_out;  // (N,C,H,W)
    nn::NodePtr spatial_gate; // (N,1,H,W), sigmoid-bounded
    nn::NodePtr spatial_out;  // (N,C,H,W)
};

// Per-domain expert branch: HAAM attention over each encoder level, channel
// MLP, upsample-and-concatenate fusion at (H/4, W/4), additive combination
// with the decoder tap, prediction head upsampled to full resolution.
class AuxiliaryBranch {
public:
    AuxiliaryBranch(const ModelConfig& model_cfg, AuxConfig aux_cfg, Domain domain,
                    uint64_t seed);

    nn::NodePtr forward(nn::Graph& g, const std::vector<nn::NodePtr>& encoder_features,
                        nn::NodePtr decoder_last);

    // attention stages of one level, exposed for inspection
    HaamOutput haam_channel(nn::Graph& g, nn::NodePtr features, int level);
    HaamOutput haam(nn::Graph& g, nn::NodePtr features, int level);

    std::vector<nn::Parameter*> params();
    Domain domain() const { return domain_; }
    const AuxConfig& config() const { return aux_cfg_; }

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    ModelConfig model_cfg_;
    AuxConfig aux_cfg_;
    Domain domain_;
};

} // namespace cots

#endif
