#ifndef COTSNET_GRAPH_HPP
#define COTSNET_GRAPH_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cotsnet/loss_kernels.hpp"
#include "cotsnet/tensor.hpp"

namespace cots::nn {

// Learnable tensor. Gradients accumulate here during Graph::backward and are
// consumed / zeroed by the optimizer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
    void zero_grad() { grad.zero(); }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad; // allocated on demand during backward
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backward_fn;
    int tape_index = -1;

    void ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape());
    }
    bool has_grad() const { return !grad.empty(); }
};

// Define-by-run tape. One Graph instance covers one forward/backward region;
// nodes hold their own storage, so the graph frees everything on destruction.
// Constructed with grad disabled it skips all closure bookkeeping (inference).
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    NodePtr constant(Tensor v);
    NodePtr param(Parameter& p);
    NodePtr detach(const NodePtr& x);

    NodePtr relu(NodePtr x);
    NodePtr sigmoid(NodePtr x);
    NodePtr add(NodePtr a, NodePtr b);
    NodePtr scale(NodePtr x, float s);
    // broadcast multiply: same shape, (N,C,H,W)*(N,C,1,1), or (N,C,H,W)*(N,1,H,W)
    NodePtr mul_bcast(NodePtr x, NodePtr gate);

    NodePtr conv2d(NodePtr x, Parameter& w, Parameter* bias, int stride, int pad);
    NodePtr linear(NodePtr x, Parameter& w, Parameter* bias);
    NodePtr instance_norm(NodePtr x, Parameter& gamma, Parameter& beta);
    NodePtr layer_norm_channel(NodePtr x, Parameter& gamma, Parameter& beta);

    NodePtr bilinear_resize(NodePtr x, int out_h, int out_w);
    NodePtr concat_channels(const std::vector<NodePtr>& xs);
    NodePtr global_avg_pool(NodePtr x); // (N,C,H,W) -> (N,C)
    NodePtr channel_mean(NodePtr x);    // (N,C,H,W) -> (N,1,H,W)
    NodePtr channel_max(NodePtr x);     // (N,C,H,W) -> (N,1,H,W)
    NodePtr reshape(NodePtr x, std::vector<int> shape);
    NodePtr batch_mean(NodePtr x);      // (N,C,H,W) -> (1,C,H,W)

    // attention primitives
    NodePtr matmul(NodePtr a, NodePtr b);      // (B,M,K) x (B,K,N)
    NodePtr transpose_last2(NodePtr x);        // (B,M,N) -> (B,N,M)
    NodePtr softmax_lastdim(NodePtr x);
    NodePtr nchw_to_tokens(NodePtr x, int heads); // -> (N*heads, H*W, C/heads)
    NodePtr tokens_to_nchw(NodePtr x, int n, int c, int h, int w, int heads);

    // scalar loss nodes; gt / weights are constants
    NodePtr dice_loss(NodePtr pred, const Tensor& gt);
    NodePtr bce_loss(NodePtr pred, const Tensor& gt, losses::Reduction red);
    NodePtr weighted_bce_loss(NodePtr pred, const Tensor& gt, const Tensor& pixel_weights,
                              losses::Reduction red);
    NodePtr soft_dice_pair(NodePtr a, NodePtr b);
    NodePtr mse_mean(NodePtr a, NodePtr b);
    NodePtr weighted_sum(const std::vector<NodePtr>& scalars, const std::vector<float>& weights);

    // Seeds d(root)=1 and walks the tape in reverse. root must be scalar.
    void backward(const NodePtr& root);

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return tape_.size(); }

private:
    friend struct OpBuilder;
    NodePtr make(Tensor value, std::vector<NodePtr> inputs,
                 std::function<void(Node&)> backward_fn, bool forces_grad = false);

    std::vector<NodePtr> tape_;
    bool grad_enabled_;
};

} // namespace cots::nn

#endif
