#include "cotsnet/model_universal.hpp"

#include <cmath>
#include <stdexcept>

namespace cots {

Backbone backbone_from_string(const std::string& s) {
    if (s == "conv_unet") return Backbone::conv_unet;
    if (s == "hierarchical_attention") return Backbone::hierarchical_attention;
    throw std::invalid_argument("unknown backbone: " + s);
}

const char* backbone_name(Backbone b) {
    return b == Backbone::conv_unet ? "conv_unet" : "hierarchical_attention";
}

void ModelConfig::validate() const {
    if (in_channels < 1) throw std::invalid_argument("model config: in_channels must be >= 1");
    if (num_stages < 2 || num_stages > 8)
        throw std::invalid_argument("model config: num_stages must be in [2,8]");
    if (static_cast<int>(stage_channels.size()) != num_stages)
        throw std::invalid_argument(
            "model config: stage_channels length must equal num_stages");
    for (int c : stage_channels)
        if (c < 2) throw std::invalid_argument("model config: stage channels must be >= 2");
    const int div = 1 << num_stages;
    if (input_h % div != 0 || input_w % div != 0)
        throw std::invalid_argument(
            "model config: input size must be divisible by 2^num_stages");
    if (input_h < div || input_w < div)
        throw std::invalid_argument("model config: input smaller than 2^num_stages");
    if (num_domains < 1) throw std::invalid_argument("model config: num_domains must be >= 1");
    if (decoder_feature_channels < 1)
        throw std::invalid_argument("model config: decoder_feature_channels must be >= 1");
    if (backbone == Backbone::hierarchical_attention) {
        if (attention_heads < 1)
            throw std::invalid_argument("model config: attention_heads must be >= 1");
        for (int c : stage_channels)
            if (c % attention_heads != 0)
                throw std::invalid_argument(
                    "model config: stage channels must be divisible by attention_heads");
    }
}

namespace init {
void kaiming_uniform(Tensor& t, int fan_in, Rng& rng, double gain) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.uniform(-bound, bound));
}
} // namespace init

namespace {

constexpr double kReluGain = 1.4142135623730951;

struct ConvP {
    nn::Parameter* w = nullptr;
    nn::Parameter* b = nullptr;
};
struct NormP {
    nn::Parameter* gamma = nullptr;
    nn::Parameter* beta = nullptr;
};
struct AdapterP {
    NormP norm;
    ConvP reduce;
    ConvP expand;
};

} // namespace

struct UniversalNet::Impl {
    std::vector<std::unique_ptr<nn::Parameter>> pool;
    std::vector<nn::Parameter*> enc_group, dec_group;
    std::vector<std::vector<nn::Parameter*>> adapter_group;

    struct Stage {
        ConvP entry; // stride-2
        NormP n1;
        ConvP conv2;
        NormP n2;
        // attention body (hierarchical_attention only)
        NormP ln1, ln2;
        ConvP q, k, v, proj, mlp1, mlp2;
        std::vector<AdapterP> adapters; // per domain
    };
    struct DecStep {
        ConvP conv1;
        NormP n1;
        ConvP conv2;
        NormP n2;
    };

    std::vector<Stage> stages;
    std::vector<DecStep> dec;
    ConvP dec_tap;
    ConvP head_conv;
    NormP head_norm;
    ConvP head_out;

    nn::Parameter* add_param(std::vector<nn::Parameter*>& group, std::string name,
                             Tensor value) {
        pool.push_back(std::make_unique<nn::Parameter>(std::move(name), std::move(value)));
        group.push_back(pool.back().get());
        return pool.back().get();
    }

    ConvP make_conv(std::vector<nn::Parameter*>& group, const std::string& name, int cout,
                    int cin, int k, Rng& rng, double gain = kReluGain) {
        ConvP c;
        Tensor w({cout, cin, k, k});
        init::kaiming_uniform(w, cin * k * k, rng, gain);
        c.w = add_param(group, name + ".w", std::move(w));
        c.b = add_param(group, name + ".b", Tensor({cout}));
        return c;
    }

    NormP make_norm(std::vector<nn::Parameter*>& group, const std::string& name, int c) {
        NormP n;
        n.gamma = add_param(group, name + ".gamma", Tensor({c}, 1.0f));
        n.beta = add_param(group, name + ".beta", Tensor({c}));
        return n;
    }
};

UniversalNet::UniversalNet(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    impl_ = std::make_shared<Impl>();
    Rng rng(Rng::mix(seed, 0x756e69)); // universal-network init stream

    auto& im = *impl_;
    im.adapter_group.resize(static_cast<size_t>(cfg_.num_domains));
    const int L = cfg_.num_stages;
    const auto& ch = cfg_.stage_channels;
    const bool attn = cfg_.backbone == Backbone::hierarchical_attention;

    for (int l = 0; l < L; ++l) {
        Impl::Stage st;
        const int cin = l == 0 ? cfg_.in_channels : ch[static_cast<size_t>(l - 1)];
        const int c = ch[static_cast<size_t>(l)];
        const std::string base = "uni.enc" + std::to_string(l);
        st.entry = im.make_conv(im.enc_group, base + ".entry", c, cin, 3, rng);
        st.n1 = im.make_norm(im.enc_group, base + ".n1", c);
        if (!attn) {
            st.conv2 = im.make_conv(im.enc_group, base + ".conv2", c, c, 3, rng);
            st.n2 = im.make_norm(im.enc_group, base + ".n2", c);
        } else {
            st.ln1 = im.make_norm(im.enc_group, base + ".ln1", c);
            st.q = im.make_conv(im.enc_group, base + ".q", c, c, 1, rng, 1.0);
            st.k = im.make_conv(im.enc_group, base + ".k", c, c, 1, rng, 1.0);
            st.v = im.make_conv(im.enc_group, base + ".v", c, c, 1, rng, 1.0);
            st.proj = im.make_conv(im.enc_group, base + ".proj", c, c, 1, rng, 1.0);
            st.ln2 = im.make_norm(im.enc_group, base + ".ln2", c);
            st.mlp1 = im.make_conv(im.enc_group, base + ".mlp1", 2 * c, c, 1, rng);
            st.mlp2 = im.make_conv(im.enc_group, base + ".mlp2", c, 2 * c, 1, rng);
        }
        for (int d = 0; d < cfg_.num_domains; ++d) {
            AdapterP ad;
            const std::string aname =
                "uni.adapter.d" + std::to_string(d) + ".stage" + std::to_string(l);
            auto& group = im.adapter_group[static_cast<size_t>(d)];
            ad.norm = im.make_norm(group, aname + ".norm", c);
            const int mid = std::max(c / 4, 4);
            ad.reduce = im.make_conv(group, aname + ".reduce", mid, c, 1, rng);
            ad.expand = im.make_conv(group, aname + ".expand", c, mid, 1, rng);
            st.adapters.push_back(ad);
        }
        im.stages.push_back(std::move(st));
    }

    for (int l = L - 2; l >= 0; --l) {
        Impl::DecStep d;
        const int cin = ch[static_cast<size_t>(l + 1)] + ch[static_cast<size_t>(l)];
        const int c = ch[static_cast<size_t>(l)];
        const std::string base = "uni.dec" + std::to_string(l);
        d.conv1 = im.make_conv(im.dec_group, base + ".conv1", c, cin, 3, rng);
        d.n1 = im.make_norm(im.dec_group, base + ".n1", c);
        d.conv2 = im.make_conv(im.dec_group, base + ".conv2", c, c, 3, rng);
        d.n2 = im.make_norm(im.dec_group, base + ".n2", c);
        im.dec.push_back(d);
    }

    // decoder tap at (H/4, W/4); with L == 2 the tap source is the bottom stage
    const int tap_cin = L >= 3 ? ch[1] : ch[static_cast<size_t>(L - 1)];
    im.dec_tap = im.make_conv(im.dec_group, "uni.dec_tap", cfg_.decoder_feature_channels,
                              tap_cin, 1, rng);

    im.head_conv = im.make_conv(im.dec_group, "uni.head.conv", ch[0], ch[0], 3, rng);
    im.head_norm = im.make_norm(im.dec_group, "uni.head.norm", ch[0]);
    im.head_out = im.make_conv(im.dec_group, "uni.head.out", 1, ch[0], 1, rng, 1.0);
    // keep the untrained prediction near 0.5
    for (int64_t i = 0; i < im.head_out.w->value.numel(); ++i)
        im.head_out.w->value[i] *= 0.05f;
}

std::unique_ptr<UniversalNet> build_universal(const ModelConfig& cfg, uint64_t seed) {
    return std::make_unique<UniversalNet>(cfg, seed);
}

UniversalOutput UniversalNet::forward(nn::Graph& g, const Tensor& images, Domain domain) {
    const int d = domain_index(domain);
    if (d < 0 || d >= cfg_.num_domains)
        throw std::invalid_argument("forward_universal: unknown domain id");
    if (images.ndim() != 4 || images.dim(1) != cfg_.in_channels ||
        images.dim(2) != cfg_.input_h || images.dim(3) != cfg_.input_w)
        throw std::invalid_argument("forward_universal: input shape " + images.shape_str() +
                                    " does not match the configured input size");

    auto& im = *impl_;
    const int L = cfg_.num_stages;
    const bool attn = cfg_.backbone == Backbone::hierarchical_attention;

    nn::NodePtr x = g.constant(images);
    std::vector<nn::NodePtr> enc;
    enc.reserve(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
        auto& st = im.stages[static_cast<size_t>(l)];
        x = g.conv2d(x, *st.entry.w, st.entry.b, 2, 1);
        x = g.relu(g.instance_norm(x, *st.n1.gamma, *st.n1.beta));
        if (!attn) {
            x = g.conv2d(x, *st.conv2.w, st.conv2.b, 1, 1);
            x = g.relu(g.instance_norm(x, *st.n2.gamma, *st.n2.beta));
        } else {
            const int c = cfg_.stage_channels[static_cast<size_t>(l)];
            const int heads = cfg_.attention_heads;
            const int dh = c / heads;
            auto t = g.layer_norm_channel(x, *st.ln1.gamma, *st.ln1.beta);
            auto q = g.nchw_to_tokens(g.conv2d(t, *st.q.w, st.q.b, 1, 0), heads);
            auto k = g.nchw_to_tokens(g.conv2d(t, *st.k.w, st.k.b, 1, 0), heads);
            auto v = g.nchw_to_tokens(g.conv2d(t, *st.v.w, st.v.b, 1, 0), heads);
            auto att = g.softmax_lastdim(
                g.scale(g.matmul(q, g.transpose_last2(k)),
                        static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)))));
            auto o = g.tokens_to_nchw(g.matmul(att, v), x->value.dim(0), c, x->value.dim(2),
                                      x->value.dim(3), heads);
            x = g.add(x, g.conv2d(o, *st.proj.w, st.proj.b, 1, 0));
            auto m = g.layer_norm_channel(x, *st.ln2.gamma, *st.ln2.beta);
            m = g.relu(g.conv2d(m, *st.mlp1.w, st.mlp1.b, 1, 0));
            m = g.conv2d(m, *st.mlp2.w, st.mlp2.b, 1, 0);
            x = g.add(x, m);
        }
        auto& ad = st.adapters[static_cast<size_t>(d)];
        auto a = g.instance_norm(x, *ad.norm.gamma, *ad.norm.beta);
        a = g.relu(g.conv2d(a, *ad.reduce.w, ad.reduce.b, 1, 0));
        a = g.conv2d(a, *ad.expand.w, ad.expand.b, 1, 0);
        x = g.add(x, a);
        enc.push_back(x);
    }

    nn::NodePtr dec_last;
    x = enc[static_cast<size_t>(L - 1)];
    if (L == 2) dec_last = g.conv2d(enc[1], *im.dec_tap.w, im.dec_tap.b, 1, 0);
    size_t step = 0;
    for (int l = L - 2; l >= 0; --l, ++step) {
        auto& skip = enc[static_cast<size_t>(l)];
        auto& ds = im.dec[step];
        x = g.bilinear_resize(x, skip->value.dim(2), skip->value.dim(3));
        x = g.concat_channels({x, skip});
        x = g.conv2d(x, *ds.conv1.w, ds.conv1.b, 1, 1);
        x = g.relu(g.instance_norm(x, *ds.n1.gamma, *ds.n1.beta));
        x = g.conv2d(x, *ds.conv2.w, ds.conv2.b, 1, 1);
        x = g.relu(g.instance_norm(x, *ds.n2.gamma, *ds.n2.beta));
        if (l == 1) dec_last = g.conv2d(x, *im.dec_tap.w, im.dec_tap.b, 1, 0);
    }

    auto h = g.conv2d(x, *im.head_conv.w, im.head_conv.b, 1, 1);
    h = g.relu(g.instance_norm(h, *im.head_norm.gamma, *im.head_norm.beta));
    auto logits = g.conv2d(h, *im.head_out.w, im.head_out.b, 1, 0);
    logits = g.bilinear_resize(logits, cfg_.input_h, cfg_.input_w);
    auto pred = g.sigmoid(logits);

    return UniversalOutput{pred, std::move(enc), dec_last};
}

std::vector<nn::Parameter*> UniversalNet::all_params() {
    std::vector<nn::Parameter*> out;
    for (auto& p : impl_->pool) out.push_back(p.get());
    return out;
}

std::vector<nn::Parameter*> UniversalNet::encoder_params() { return impl_->enc_group; }
std::vector<nn::Parameter*> UniversalNet::decoder_params() { return impl_->dec_group; }

std::vector<nn::Parameter*> UniversalNet::adapter_params(Domain d) {
    return impl_->adapter_group[static_cast<size_t>(domain_index(d))];
}

int64_t UniversalNet::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : impl_->pool) n += p->value.numel();
    return n;
}

} // namespace cots
