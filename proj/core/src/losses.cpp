#include "cotsnet/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cots::losses {

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}
} // namespace

double dice_loss(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "dice_loss");
    return static_cast<double>(dice_vg<float>(pred.span(), gt.span()).value);
}

double bce_loss(const Tensor& pred, const Tensor& gt, Reduction red) {
    require_same_shape(pred, gt, "bce_loss");
    return static_cast<double>(bce_vg<float>(pred.span(), gt.span(), red).value);
}

double seg_loss(const Tensor& pred, const Tensor& gt) {
    return dice_loss(pred, gt) + bce_loss(pred, gt);
}

double boundary_loss(const Tensor& pred_s, const Tensor& gt_s, const Tensor& map_s,
                     const Tensor& pred_t, const Tensor& gt_t, const Tensor& map_t,
                     double gamma, Reduction red) {
    require_same_shape(pred_s, gt_s, "boundary_loss source");
    require_same_shape(pred_s, map_s, "boundary_loss source map");
    require_same_shape(pred_t, gt_t, "boundary_loss target");
    require_same_shape(pred_t, map_t, "boundary_loss target map");

    auto one_domain = [&](const Tensor& pred, const Tensor& gt, const Tensor& map) {
        std::vector<float> w(static_cast<size_t>(pred.numel()));
        const float g = static_cast<float>(gamma);
        for (size_t i = 0; i < w.size(); ++i)
            w[i] = 1.0f + g * map.data()[i];
        return static_cast<double>(
            weighted_bce_vg<float>(pred.span(), gt.span(), w, red).value);
    };
    return one_domain(pred_s, gt_s, map_s) + one_domain(pred_t, gt_t, map_t);
}

EmaState ema_update(EmaState state, const Tensor& batch_mean, Domain domain) {
    if (batch_mean.numel() != static_cast<int64_t>(state.height) * state.width)
        throw std::invalid_argument("ema_update: batch mean shape mismatch");
    auto& shadow = domain == Domain::source ? state.m_source : state.m_target;
    bool& init = domain == Domain::source ? state.source_initialized : state.target_initialized;
    if (!init) {
        for (size_t i = 0; i < shadow.size(); ++i)
            shadow[i] = static_cast<double>(batch_mean.data()[i]);
        init = true;
    } else {
        const double lam = state.lambda;
        for (size_t i = 0; i < shadow.size(); ++i)
            shadow[i] = lam * shadow[i] + (1.0 - lam) * static_cast<double>(batch_mean.data()[i]);
    }
    return state;
}

double consistency_loss(const EmaState& state) {
    if (!state.both_initialized()) return 0.0;
    return mse_mean_vg<double>(std::span<const double>(state.m_source),
                               std::span<const double>(state.m_target))
        .value;
}

double distill_loss(const Tensor& aux_pred, const Tensor& uni_pred) {
    require_same_shape(aux_pred, uni_pred, "distill_loss");
    return static_cast<double>(
        soft_dice_pair_vg<float>(aux_pred.span(), uni_pred.span()).value);
}

double universal_objective(const UniversalLossParts& p, double alpha, double beta) {
    return alpha * (p.seg_source + p.seg_target) +
           beta * (p.distill_source + p.distill_target) + p.boundary + p.consistency;
}

double auxiliary_objective(const Tensor& aux_pred, const Tensor& gt) {
    return seg_loss(aux_pred, gt);
}

} // namespace cots::losses
