#include "cotsnet/model_auxiliary.hpp"

#include <stdexcept>
#include <string>

namespace cots {

struct AuxiliaryBranch::Impl {
    std::vector<std::unique_ptr<nn::Parameter>> pool;
    std::vector<nn::Parameter*> group;

    struct Level {
        nn::Parameter* fc1_w = nullptr; // (C/r, C)
        nn::Parameter* fc1_b = nullptr;
        nn::Parameter* fc2_w = nullptr; // (C, C/r)
        nn::Parameter* fc2_b = nullptr;
        nn::Parameter* spat_w = nullptr; // (1, 2, k, k)
        nn::Parameter* spat_b = nullptr;
        nn::Parameter* mlp1_w = nullptr; // 1x1 C -> 2C
        nn::Parameter* mlp1_b = nullptr;
        nn::Parameter* mlp2_w = nullptr; // 1x1 2C -> C
        nn::Parameter* mlp2_b = nullptr;
    };
    std::vector<Level> levels;
    nn::Parameter* proj_w = nullptr; // 1x1 sum(C) -> decoder width
    nn::Parameter* proj_b = nullptr;
    nn::Parameter* head_w = nullptr; // 1x1 decoder width -> 1
    nn::Parameter* head_b = nullptr;

    nn::Parameter* add(std::string name, Tensor v) {
        pool.push_back(std::make_unique<nn::Parameter>(std::move(name), std::move(v)));
        group.push_back(pool.back().get());
        return pool.back().get();
    }
};

AuxiliaryBranch::AuxiliaryBranch(const ModelConfig& model_cfg, AuxConfig aux_cfg,
                                 Domain domain, uint64_t seed)
    : model_cfg_(model_cfg), aux_cfg_(aux_cfg), domain_(domain) {
    model_cfg_.validate();
    if (aux_cfg_.reduction_ratio < 1)
        throw std::invalid_argument("aux config: reduction_ratio must be >= 1");
    if (aux_cfg_.spatial_kernel < 1 || aux_cfg_.spatial_kernel % 2 == 0)
        throw std::invalid_argument("aux config: spatial_kernel must be odd");
    for (int c : model_cfg_.stage_channels)
        if (c < aux_cfg_.reduction_ratio)
            throw std::invalid_argument(
                "aux config: stage channel count below reduction_ratio");

    impl_ = std::make_shared<Impl>();
    Rng rng(Rng::mix(seed, 0x617578u + static_cast<uint64_t>(domain_index(domain))));
    auto& im = *impl_;
    const std::string base = std::string("aux.") + domain_name(domain);

    int ch_sum = 0;
    for (int l = 0; l < model_cfg_.num_stages; ++l) {
        const int c = model_cfg_.stage_channels[static_cast<size_t>(l)];
        const int cr = std::max(c / aux_cfg_.reduction_ratio, 1);
        const int k = aux_cfg_.spatial_kernel;
        ch_sum += c;
        Impl::Level lv;
        const std::string lb = base + ".l" + std::to_string(l);

        Tensor fc1({cr, c});
        init::kaiming_uniform(fc1, c, rng);
        lv.fc1_w = im.add(lb + ".chan.fc1.w", std::move(fc1));
        lv.fc1_b = im.add(lb + ".chan.fc1.b", Tensor({cr}));
        Tensor fc2({c, cr});
        init::kaiming_uniform(fc2, cr, rng, 1.0);
        lv.fc2_w = im.add(lb + ".chan.fc2.w", std::move(fc2));
        lv.fc2_b = im.add(lb + ".chan.fc2.b", Tensor({c}));

        Tensor sw({1, 2, k, k});
        init::kaiming_uniform(sw, 2 * k * k, rng, 1.0);
        lv.spat_w = im.add(lb + ".spat.w", std::move(sw));
        lv.spat_b = im.add(lb + ".spat.b", Tensor({1}));

        Tensor m1({2 * c, c, 1, 1});
        init::kaiming_uniform(m1, c, rng);
        lv.mlp1_w = im.add(lb + ".mlp1.w", std::move(m1));
        lv.mlp1_b = im.add(lb + ".mlp1.b", Tensor({2 * c}));
        Tensor m2({c, 2 * c, 1, 1});
        init::kaiming_uniform(m2, 2 * c, rng, 1.0);
        lv.mlp2_w = im.add(lb + ".mlp2.w", std::move(m2));
        lv.mlp2_b = im.add(lb + ".mlp2.b", Tensor({c}));

        im.levels.push_back(lv);
    }

    const int dw = model_cfg_.decoder_feature_channels;
    Tensor pw({dw, ch_sum, 1, 1});
    init::kaiming_uniform(pw, ch_sum, rng, 1.0);
    im.proj_w = im.add(base + ".proj.w", std::move(pw));
    im.proj_b = im.add(base + ".proj.b", Tensor({dw}));
    Tensor hw({1, dw, 1, 1});
    init::kaiming_uniform(hw, dw, rng, 1.0);
    for (int64_t i = 0; i < hw.numel(); ++i) hw[i] *= 0.05f;
    im.head_w = im.add(base + ".head.w", std::move(hw));
    im.head_b = im.add(base + ".head.b", Tensor({1}));
}

HaamOutput AuxiliaryBranch::haam_channel(nn::Graph& g, nn::NodePtr features, int level) {
    if (level < 0 || level >= static_cast<int>(impl_->levels.size()))
        throw std::invalid_argument("haam: level out of range");
    auto& lv = impl_->levels[static_cast<size_t>(level)];

    auto pooled = g.global_avg_pool(features); // (N,C)
    auto gate = g.sigmoid(
        g.linear(g.relu(g.linear(pooled, *lv.fc1_w, lv.fc1_b)), *lv.fc2_w, lv.fc2_b));
    const int n = features->value.dim(0), c = features->value.dim(1);
    auto gated = g.mul_bcast(features, g.reshape(gate, {n, c, 1, 1}));

    HaamOutput out;
    out.channel_gate = gate;
    out.channel_out = gated;
    return out;
}

HaamOutput AuxiliaryBranch::haam(nn::Graph& g, nn::NodePtr features, int level) {
    HaamOutput out = haam_channel(g, features, level);
    auto& lv = impl_->levels[static_cast<size_t>(level)];
    const int pad = aux_cfg_.spatial_kernel / 2;
    auto pooled = g.concat_channels({g.channel_mean(out.channel_out),
                                     g.channel_max(out.channel_out)}); // (N,2,H,W)
    out.spatial_gate = g.sigmoid(g.conv2d(pooled, *lv.spat_w, lv.spat_b, 1, pad));
    out.spatial_out = g.mul_bcast(out.channel_out, out.spatial_gate);
    return out;
}

nn::NodePtr AuxiliaryBranch::forward(nn::Graph& g,
                                     const std::vector<nn::NodePtr>& encoder_features,
                                     nn::NodePtr decoder_last) {
    if (static_cast<int>(encoder_features.size()) != model_cfg_.num_stages)
        throw std::invalid_argument("aux forward: encoder level count mismatch");
    const int fh = model_cfg_.input_h / 4;
    const int fw = model_cfg_.input_w / 4;
    if (decoder_last->value.dim(2) != fh || decoder_last->value.dim(3) != fw)
        throw std::invalid_argument("aux forward: decoder feature not at (H/4, W/4)");

    auto& im = *impl_;
    std::vector<nn::NodePtr> interp;
    interp.reserve(encoder_features.size());
    for (int l = 0; l < model_cfg_.num_stages; ++l) {
        auto& lv = im.levels[static_cast<size_t>(l)];
        nn::NodePtr x = encoder_features[static_cast<size_t>(l)];
        if (aux_cfg_.use_haam) x = haam(g, x, l).spatial_out;
        x = g.relu(g.conv2d(x, *lv.mlp1_w, lv.mlp1_b, 1, 0));
        x = g.conv2d(x, *lv.mlp2_w, lv.mlp2_b, 1, 0);
        interp.push_back(g.bilinear_resize(x, fh, fw));
    }
    auto fused = g.concat_channels(interp);
    auto projected = g.conv2d(fused, *im.proj_w, im.proj_b, 1, 0);
    auto combined = g.add(projected, decoder_last);
    auto pred = g.sigmoid(g.conv2d(combined, *im.head_w, im.head_b, 1, 0));
    return g.bilinear_resize(pred, model_cfg_.input_h, model_cfg_.input_w);
}

std::vector<nn::Parameter*> AuxiliaryBranch::params() { return impl_->group; }

} // namespace cots
