#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "cotsnet/graph.hpp"
#include "cotsnet/rng.hpp"

using namespace cots;
using namespace cots::nn;

namespace {

Tensor randu(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Builds the op over parameter leaves, reduces with mse against a fixed
// target, and compares analytic parameter gradients against float central
// differences. Coarse tolerance: everything runs in float32.
struct GradHarness {
    std::vector<Tensor> inputs;
    std::function<NodePtr(Graph&, std::vector<NodePtr>&, std::vector<Parameter*>&)> build;
    Tensor target;

    double loss(const std::vector<Tensor>& vals) {
        Graph g;
        std::vector<std::unique_ptr<Parameter>> params;
        std::vector<Parameter*> praw;
        std::vector<NodePtr> leaves;
        for (size_t i = 0; i < vals.size(); ++i) {
            params.push_back(std::make_unique<Parameter>("p" + std::to_string(i), vals[i]));
            praw.push_back(params.back().get());
            leaves.push_back(g.param(*params.back()));
        }
        auto out = build(g, leaves, praw);
        if (target.empty()) target = Tensor(out->value.shape(), 0.25f);
        auto lossn = g.mse_mean(out, g.constant(target));
        return lossn->value[0];
    }

    void check(double tol = 2e-2) {
        // analytic pass
        Graph g;
        std::vector<std::unique_ptr<Parameter>> params;
        std::vector<Parameter*> praw;
        std::vector<NodePtr> leaves;
        for (size_t i = 0; i < inputs.size(); ++i) {
            params.push_back(std::make_unique<Parameter>("p" + std::to_string(i), inputs[i]));
            praw.push_back(params.back().get());
            leaves.push_back(g.param(*params.back()));
        }
        auto out = build(g, leaves, praw);
        if (target.empty()) target = Tensor(out->value.shape(), 0.25f);
        auto lossn = g.mse_mean(out, g.constant(target));
        g.backward(lossn);

        const double h = 1e-2;
        for (size_t pi = 0; pi < inputs.size(); ++pi) {
            const int64_t n = inputs[pi].numel();
            const int64_t step = std::max<int64_t>(1, n / 24); // sample coordinates
            for (int64_t i = 0; i < n; i += step) {
                std::vector<Tensor> vals = inputs;
                vals[pi][i] = inputs[pi][i] + static_cast<float>(h);
                const double fp = loss(vals);
                vals[pi][i] = inputs[pi][i] - static_cast<float>(h);
                const double fm = loss(vals);
                const double fd = (fp - fm) / (2.0 * h);
                const double an = params[pi]->grad[i];
                const double denom = std::max({std::abs(fd), std::abs(an), 5e-3});
                INFO("param ", pi, " index ", i, " fd=", fd, " an=", an);
                CHECK(std::abs(fd - an) / denom < tol);
            }
        }
    }
};

} // namespace

TEST_CASE("grad: conv2d variants") {
    Rng rng(101);
    struct Case {
        int cin, cout, k, stride, pad, h, w;
    };
    for (const Case& c : {Case{3, 4, 3, 1, 1, 6, 6}, Case{3, 4, 3, 2, 1, 6, 6},
                          Case{4, 2, 1, 1, 0, 5, 5}, Case{2, 1, 7, 1, 3, 8, 8}}) {
        GradHarness h;
        h.inputs = {randu(rng, {2, c.cin, c.h, c.w}), randu(rng, {c.cout, c.cin, c.k, c.k}),
                    randu(rng, {c.cout}, -0.2, 0.2)};
        h.build = [c](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>& p) {
            return g.conv2d(leaves[0], *p[1], p[2], c.stride, c.pad);
        };
        h.check();
    }
}

TEST_CASE("grad: linear") {
    Rng rng(102);
    GradHarness h;
    h.inputs = {randu(rng, {3, 5}), randu(rng, {4, 5}), randu(rng, {4}, -0.2, 0.2)};
    h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>& p) {
        return g.linear(leaves[0], *p[1], p[2]);
    };
    h.check();
}

TEST_CASE("grad: instance_norm and layer_norm_channel") {
    Rng rng(103);
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 3, 4, 4}), randu(rng, {3}, 0.5, 1.5),
                    randu(rng, {3}, -0.3, 0.3)};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>& p) {
            return g.instance_norm(leaves[0], *p[1], *p[2]);
        };
        h.check(4e-2); // normalization statistics amplify float noise
    }
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 6, 3, 3}), randu(rng, {6}, 0.5, 1.5),
                    randu(rng, {6}, -0.3, 0.3)};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>& p) {
            return g.layer_norm_channel(leaves[0], *p[1], *p[2]);
        };
        h.check(4e-2);
    }
}

TEST_CASE("grad: activations, add, scale, reshape") {
    Rng rng(104);
    GradHarness h;
    h.inputs = {randu(rng, {2, 3, 4, 4}, 0.2, 1.5), randu(rng, {2, 3, 4, 4}, 0.2, 1.5)};
    h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
        auto a = g.relu(leaves[0]);
        auto b = g.sigmoid(leaves[1]);
        auto s = g.add(a, b);
        s = g.scale(s, 0.7f);
        return g.reshape(s, {2, 3, 16, 1});
    };
    h.check();
}

TEST_CASE("grad: mul_bcast broadcast patterns") {
    Rng rng(105);
    for (int variant = 0; variant < 3; ++variant) {
        GradHarness h;
        std::vector<int> gshape = variant == 0   ? std::vector<int>{2, 3, 1, 1}
                                  : variant == 1 ? std::vector<int>{2, 1, 4, 4}
                                                 : std::vector<int>{2, 3, 4, 4};
        h.inputs = {randu(rng, {2, 3, 4, 4}), randu(rng, gshape, 0.1, 0.9)};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.mul_bcast(leaves[0], leaves[1]);
        };
        h.check();
    }
}

TEST_CASE("grad: pooling and reductions") {
    Rng rng(106);
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 4, 3, 3})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.global_avg_pool(leaves[0]);
        };
        h.check();
    }
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 4, 3, 3})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.channel_mean(leaves[0]);
        };
        h.check();
    }
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 4, 3, 3})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.channel_max(leaves[0]);
        };
        h.check();
    }
    {
        GradHarness h;
        h.inputs = {randu(rng, {3, 2, 3, 3})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.batch_mean(leaves[0]);
        };
        h.check();
    }
}

TEST_CASE("grad: bilinear resize up and down") {
    Rng rng(107);
    for (auto [oh, ow] : {std::pair{9, 11}, std::pair{3, 2}}) {
        GradHarness h;
        h.inputs = {randu(rng, {2, 2, 5, 4})};
        int out_h = oh, out_w = ow;
        h.build = [out_h, out_w](Graph& g, std::vector<NodePtr>& leaves,
                                 std::vector<Parameter*>&) {
            return g.bilinear_resize(leaves[0], out_h, out_w);
        };
        h.check();
    }
}

TEST_CASE("grad: concat_channels") {
    Rng rng(108);
    GradHarness h;
    h.inputs = {randu(rng, {2, 2, 3, 3}), randu(rng, {2, 3, 3, 3}), randu(rng, {2, 1, 3, 3})};
    h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
        return g.concat_channels({leaves[0], leaves[1], leaves[2]});
    };
    h.check();
}

TEST_CASE("grad: attention primitives") {
    Rng rng(109);
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 3, 4}), randu(rng, {2, 4, 5})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.matmul(leaves[0], leaves[1]);
        };
        h.check();
    }
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 3, 4})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            return g.softmax_lastdim(g.transpose_last2(leaves[0]));
        };
        h.check();
    }
    {
        GradHarness h;
        h.inputs = {randu(rng, {2, 4, 3, 3})};
        h.build = [](Graph& g, std::vector<NodePtr>& leaves, std::vector<Parameter*>&) {
            auto t = g.nchw_to_tokens(leaves[0], 2);
            return g.tokens_to_nchw(t, 2, 4, 3, 3, 2);
        };
        h.check();
        // the two reshapes are mutually inverse
        Graph g;
        Parameter p("x", h.inputs[0]);
        auto x = g.param(p);
        auto rt = g.tokens_to_nchw(g.nchw_to_tokens(x, 2), 2, 4, 3, 3, 2);
        for (int64_t i = 0; i < rt->value.numel(); ++i)
            CHECK(rt->value[i] == h.inputs[0][i]);
    }
}

TEST_CASE("grad: loss nodes wire kernel gradients through the tape") {
    Rng rng(110);
    Tensor gt({1, 1, 3, 3});
    for (int64_t i = 0; i < gt.numel(); ++i) gt[i] = rng.bernoulli(0.5) ? 1.0f : 0.0f;
    Tensor w({1, 1, 3, 3});
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(rng.uniform(1.0, 2.0));

    Tensor pv({1, 1, 3, 3});
    for (int64_t i = 0; i < pv.numel(); ++i) pv[i] = static_cast<float>(rng.uniform(0.1, 0.9));

    Graph g;
    Parameter p("pred", pv);
    auto pn = g.param(p);
    auto total = g.weighted_sum(
        {g.dice_loss(pn, gt), g.bce_loss(pn, gt, losses::Reduction::mean),
         g.weighted_bce_loss(pn, gt, w, losses::Reduction::mean)},
        {0.5f, 1.0f, 0.25f});
    g.backward(total);

    auto d = losses::dice_vg<float>(pv.span(), gt.span());
    auto b = losses::bce_vg<float>(pv.span(), gt.span(), losses::Reduction::mean);
    auto wb = losses::weighted_bce_vg<float>(pv.span(), gt.span(), w.span(),
                                             losses::Reduction::mean);
    for (int64_t i = 0; i < pv.numel(); ++i) {
        const float expect = 0.5f * d.grad[i] + 1.0f * b.grad[i] + 0.25f * wb.grad[i];
        CHECK(p.grad[i] == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("backward: disjoint objectives on one tape stay isolated") {
    Rng rng(111);
    Tensor xv = randu(rng, {1, 2, 4, 4}, 0.1, 0.9);
    Tensor yv = randu(rng, {1, 2, 4, 4}, 0.1, 0.9);

    // reference: separate graphs
    Tensor gx_ref, gy_ref;
    {
        Graph g;
        Parameter px("x", xv);
        auto nx = g.param(px);
        g.backward(g.mse_mean(g.sigmoid(nx), g.constant(Tensor({1, 2, 4, 4}, 0.3f))));
        gx_ref = px.grad;
    }
    {
        Graph g;
        Parameter py("y", yv);
        auto ny = g.param(py);
        g.backward(g.mse_mean(g.relu(ny), g.constant(Tensor({1, 2, 4, 4}, 0.6f))));
        gy_ref = py.grad;
    }

    // same work on a single tape, two backward calls
    Graph g;
    Parameter px("x", xv), py("y", yv);
    auto nx = g.param(px);
    auto ny = g.param(py);
    auto l1 = g.mse_mean(g.sigmoid(nx), g.constant(Tensor({1, 2, 4, 4}, 0.3f)));
    auto l2 = g.mse_mean(g.relu(ny), g.constant(Tensor({1, 2, 4, 4}, 0.6f)));
    g.backward(l1);
    g.backward(l2);
    for (int64_t i = 0; i < gx_ref.numel(); ++i) {
        CHECK(px.grad[i] == gx_ref[i]);
        CHECK(py.grad[i] == gy_ref[i]);
    }
}

TEST_CASE("detach blocks gradient flow") {
    Rng rng(112);
    Tensor xv = randu(rng, {1, 1, 3, 3}, 0.1, 0.9);
    Graph g;
    Parameter px("x", xv);
    auto nx = g.param(px);
    auto blocked = g.detach(g.sigmoid(nx));
    auto l = g.mse_mean(blocked, g.constant(Tensor({1, 1, 3, 3}, 0.4f)));
    CHECK_FALSE(l->requires_grad);
    for (int64_t i = 0; i < px.grad.numel(); ++i) CHECK(px.grad[i] == 0.0f);
}

TEST_CASE("inference graph skips closure bookkeeping") {
    Rng rng(113);
    Graph g(false);
    Parameter px("x", randu(rng, {1, 1, 4, 4}));
    auto out = g.sigmoid(g.param(px));
    CHECK_FALSE(out->requires_grad);
    CHECK_THROWS(g.backward(out));
}
