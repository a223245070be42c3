#ifndef COTSNET_OPTIM_HPP
#define COTSNET_OPTIM_HPP

#include <vector>

#include "cotsnet/graph.hpp"

namespace cots::nn {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05; // decoupled
    double clip_norm = 5.0;     // global norm over the group; <= 0 disables
};

// AdamW with decoupled weight decay over a fixed parameter group.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

    void zero_grad();
    void step(); // clips to cfg.clip_norm, then updates

    int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Parameter*>& params() const { return params_; }

    // moment access for checkpointing
    std::vector<float>& moment1(size_t i) { return m_[i]; }
    std::vector<float>& moment2(size_t i) { return v_[i]; }
    void set_step_count(int64_t t) { t_ = t; }

    double grad_global_norm() const;

private:
    std::vector<Parameter*> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    int64_t t_ = 0;
};

} // namespace cots::nn

#endif
