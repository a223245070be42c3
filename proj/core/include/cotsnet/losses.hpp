#ifndef COTSNET_LOSSES_HPP
#define COTSNET_LOSSES_HPP

#include <vector>

#include "cotsnet/domain.hpp"
#include "cotsnet/loss_kernels.hpp"
#include "cotsnet/tensor.hpp"

namespace cots::losses {

// EMA shadow means of batch-averaged universal predictions, one per domain.
// Values live in [0,1]; stored in double so the closed-form recursion holds
// to tight tolerance. Detached from any gradient flow.
struct EmaState {
    int height = 0;
    int width = 0;
    std::vector<double> m_source;
    std::vector<double> m_target;
    double lambda = 0.9;
    bool source_initialized = false;
    bool target_initialized = false;

    EmaState() = default;
    EmaState(int h, int w, double lam)
        : height(h), width(w),
          m_source(static_cast<size_t>(h) * w, 0.0),
          m_target(static_cast<size_t>(h) * w, 0.0),
          lambda(lam) {}

    bool both_initialized() const { return source_initialized && target_initialized; }
    const std::vector<double>& shadow(Domain d) const {
        return d == Domain::source ? m_source : m_target;
    }
    bool initialized(Domain d) const {
        return d == Domain::source ? source_initialized : target_initialized;
    }
};

struct LossWeights {
    double alpha = 0.5;  // segmentation term
    double beta = 0.5;   // distillation term
    double gamma = 1.0;  // boundary emphasis
    double lambda = 0.9; // EMA decay
};

// Scalar losses on tensors of matching shape. gt holds {0,1} values.
double dice_loss(const Tensor& pred, const Tensor& gt);
double bce_loss(const Tensor& pred, const Tensor& gt, Reduction red = Reduction::mean);
double seg_loss(const Tensor& pred, const Tensor& gt);

// Boundary-weighted BCE with per-pixel weight (1 + gamma * M), reduced per
// domain and summed over the two domains.
double boundary_loss(const Tensor& pred_s, const Tensor& gt_s, const Tensor& map_s,
                     const Tensor& pred_t, const Tensor& gt_t, const Tensor& map_t,
                     double gamma, Reduction red = Reduction::mean);

// First update for a domain installs the batch mean; later updates apply
// shadow <- lambda * shadow + (1 - lambda) * batch_mean.
EmaState ema_update(EmaState state, const Tensor& batch_mean, Domain domain);

// Mean-square error of the two shadows; 0 until both domains initialized.
double consistency_loss(const EmaState& state);

// Symmetric soft dice between auxiliary and universal prediction maps;
// squared-sum denominator, so distill_loss(a, a) == 0 for any map.
double distill_loss(const Tensor& aux_pred, const Tensor& uni_pred);

struct UniversalLossParts {
    double seg_source = 0.0;
    double seg_target = 0.0;
    double distill_source = 0.0;
    double distill_target = 0.0;
    double boundary = 0.0;
    double consistency = 0.0;
};

double universal_objective(const UniversalLossParts& parts, double alpha, double beta);
double auxiliary_objective(const Tensor& aux_pred, const Tensor& gt);

} // namespace cots::losses

#endif
