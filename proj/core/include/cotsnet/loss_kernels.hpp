#ifndef COTSNET_LOSS_KERNELS_HPP
#define COTSNET_LOSS_KERNELS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

// Scalar-templated loss math shared by the training graph (float) and the
// finite-difference checks (double). Each kernel returns the loss value and
// the analytic gradient with respect to its prediction input(s).

namespace cots::losses {

inline constexpr double kProbEps = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

enum class Reduction { mean, sum };

template <class T>
struct ValueGrad {
    T value{};
    std::vector<T> grad; // d value / d pred
};

template <class T>
struct PairValueGrad {
    T value{};
    std::vector<T> grad_a;
    std::vector<T> grad_b;
};

namespace detail {
inline void check_sizes(size_t a, size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
} // namespace detail

// 1 - (2*sum(p*y) + s) / (sum(p) + sum(y) + s)
template <class T>
ValueGrad<T> dice_vg(std::span<const T> pred, std::span<const T> gt) {
    detail::check_sizes(pred.size(), gt.size(), "dice_loss");
    const T s = static_cast<T>(kDiceSmooth);
    T inter = 0, psum = 0, ysum = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += pred[i] * gt[i];
        psum += pred[i];
        ysum += gt[i];
    }
    const T num = 2 * inter + s;
    const T den = psum + ysum + s;
    ValueGrad<T> out;
    out.value = 1 - num / den;
    out.grad.resize(pred.size());
    const T inv_den2 = 1 / (den * den);
    for (size_t i = 0; i < pred.size(); ++i)
        out.grad[i] = -(2 * gt[i] * den - num) * inv_den2;
    return out;
}

// Per-pixel weighted binary cross entropy. weights may be empty (all ones).
// Probabilities are clamped to [eps, 1-eps]; clamped pixels get zero gradient.
template <class T>
ValueGrad<T> weighted_bce_vg(std::span<const T> pred, std::span<const T> gt,
                             std::span<const T> weights, Reduction red) {
    detail::check_sizes(pred.size(), gt.size(), "bce_loss");
    if (!weights.empty()) detail::check_sizes(pred.size(), weights.size(), "bce_loss weights");
    const T eps = static_cast<T>(kProbEps);
    const T lo = eps, hi = 1 - eps;
    T acc = 0;
    ValueGrad<T> out;
    out.grad.resize(pred.size());
    const T norm = red == Reduction::mean ? static_cast<T>(1) / static_cast<T>(pred.size())
                                          : static_cast<T>(1);
    for (size_t i = 0; i < pred.size(); ++i) {
        const T w = weights.empty() ? static_cast<T>(1) : weights[i];
        const bool clamped = pred[i] < lo || pred[i] > hi;
        const T p = clamped ? (pred[i] < lo ? lo : hi) : pred[i];
        acc += w * (-(gt[i] * std::log(p) + (1 - gt[i]) * std::log(1 - p)));
        out.grad[i] = clamped ? 0 : norm * w * (-gt[i] / p + (1 - gt[i]) / (1 - p));
    }
    out.value = acc * norm;
    return out;
}

template <class T>
ValueGrad<T> bce_vg(std::span<const T> pred, std::span<const T> gt,
                    Reduction red = Reduction::mean) {
    return weighted_bce_vg<T>(pred, gt, {}, red);
}

// Symmetric soft dice between two probability maps (distillation). Uses the
// squared-sum denominator so that equal maps score exactly zero regardless of
// how soft they are; the linear-sum form retains a residual 2*sum(a-a^2) term
// on non-binary maps.
template <class T>
PairValueGrad<T> soft_dice_pair_vg(std::span<const T> a, std::span<const T> u) {
    detail::check_sizes(a.size(), u.size(), "distill_loss");
    const T s = static_cast<T>(kDiceSmooth);
    T inter = 0, asq = 0, usq = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        inter += a[i] * u[i];
        asq += a[i] * a[i];
        usq += u[i] * u[i];
    }
    const T num = 2 * inter + s;
    const T den = asq + usq + s;
    PairValueGrad<T> out;
    out.value = 1 - num / den;
    out.grad_a.resize(a.size());
    out.grad_b.resize(a.size());
    const T inv_den2 = 1 / (den * den);
    for (size_t i = 0; i < a.size(); ++i) {
        out.grad_a[i] = -(2 * u[i] * den - num * 2 * a[i]) * inv_den2;
        out.grad_b[i] = -(2 * a[i] * den - num * 2 * u[i]) * inv_den2;
    }
    return out;
}

// mean over elements of (a - b)^2
template <class T>
PairValueGrad<T> mse_mean_vg(std::span<const T> a, std::span<const T> b) {
    detail::check_sizes(a.size(), b.size(), "consistency_loss");
    PairValueGrad<T> out;
    out.grad_a.resize(a.size());
    out.grad_b.resize(a.size());
    const T norm = static_cast<T>(1) / static_cast<T>(a.size());
    T acc = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const T d = a[i] - b[i];
        acc += d * d;
        out.grad_a[i] = 2 * d * norm;
        out.grad_b[i] = -2 * d * norm;
    }
    out.value = acc * norm;
    return out;
}

} // namespace cots::losses

#endif
