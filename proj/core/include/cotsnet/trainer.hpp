#ifndef COTSNET_TRAINER_HPP
#define COTSNET_TRAINER_HPP

#include <memory>
#include <string>
#include <vector>

#include "cotsnet/data.hpp"
#include "cotsnet/losses.hpp"
#include "cotsnet/metrics.hpp"
#include "cotsnet/model_auxiliary.hpp"
#include "cotsnet/model_universal.hpp"
#include "cotsnet/optim.hpp"

namespace cots {

struct AblationFlags {
    bool haam = true;
    bool consistency = true;
    bool boundary = true;
};

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.05;
    int batch_size = 4; // per domain
    int epochs = 200;
    losses::LossWeights weights; // alpha 0.5, beta 0.5, gamma 1.0, lambda 0.9
    uint64_t seed = 0;
    int checkpoint_every = 50; // epochs; <= 0 disables periodic checkpoints
    AblationFlags ablation;
    losses::Reduction boundary_reduction = losses::Reduction::mean;
    bool joint_step = false; // single combined backward instead of two phases
    bool augment = true;
    double grad_clip = 5.0;
    ModelConfig model;
    AuxConfig aux;
    GaussianSpec boundary_spec{5, 1.0};

    void validate() const;
};

// Weighted contributions of each objective term, one record per step.
struct StepRecord {
    int64_t step = 0;
    int epoch = 0;
    double seg = 0.0;
    double distill = 0.0;
    double boundary = 0.0;
    double consistency = 0.0;
    double aux = 0.0;
    double lr = 0.0;

    std::string to_json_line() const;
};

struct TrainState {
    int epoch = 0;
    int64_t global_step = 0;
    losses::EmaState ema;
    double best_dice = 0.0;
    int best_epoch = -1;
};

struct FitResult {
    std::vector<StepRecord> log;
    metrics::MetricReport source_report;
    metrics::MetricReport target_report;
    std::string final_checkpoint;
};

// Dual-objective loop: per iteration one source and one target batch flow
// through the universal network and the matching auxiliary branches; the
// auxiliary optimizer steps first on detached encoder features, then the
// universal optimizer steps on an objective whose distillation inputs are
// detached auxiliary predictions.
class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    StepRecord train_step(const data::DomainBatch& source, const data::DomainBatch& target);

    FitResult fit(const std::vector<data::ImageSample>& source_train,
                  const std::vector<data::ImageSample>& target_train,
                  const std::vector<data::ImageSample>& source_eval,
                  const std::vector<data::ImageSample>& target_eval,
                  const std::string& out_dir = "");

    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);

    UniversalNet& universal() { return *universal_; }
    AuxiliaryBranch& auxiliary(Domain d) {
        return d == Domain::source ? *aux_source_ : *aux_target_;
    }
    nn::AdamW& universal_optimizer() { return *uni_opt_; }
    nn::AdamW& auxiliary_optimizer() { return *aux_opt_; }
    TrainState& state() { return state_; }
    const TrainConfig& config() const { return cfg_; }

    // test hooks for the parameter-partition checks
    bool enable_universal_updates = true;
    bool enable_auxiliary_updates = true;

private:
    TrainConfig cfg_;
    std::unique_ptr<UniversalNet> universal_;
    std::unique_ptr<AuxiliaryBranch> aux_source_;
    std::unique_ptr<AuxiliaryBranch> aux_target_;
    std::unique_ptr<nn::AdamW> uni_opt_;
    std::unique_ptr<nn::AdamW> aux_opt_;
    TrainState state_;
};

struct AblationRow {
    std::string label;
    AblationFlags flags;
    metrics::MetricReport target_report;
    // Dice reported for the original thyroid->pancreatic experiment; carried
    // as reference only, not reproduced on synthetic data.
    double published_dice_reference = 0.0;
};

std::vector<AblationRow> ablation_run(const TrainConfig& base,
                                      const std::vector<data::ImageSample>& source_train,
                                      const std::vector<data::ImageSample>& target_train,
                                      const std::vector<data::ImageSample>& target_eval);

std::string ablation_table_text(const std::vector<AblationRow>& rows);
std::string ablation_table_json(const std::vector<AblationRow>& rows);

} // namespace cots

#endif
