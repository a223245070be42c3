#include "cotsnet/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "cotsnet/checkpoint.hpp"
#include "cotsnet/run_config.hpp"

namespace fs = std::filesystem;

namespace cots {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0)
        throw std::invalid_argument("train config: loss weights must be >= 0");
    if (weights.lambda < 0.0 || weights.lambda >= 1.0)
        throw std::invalid_argument("train config: lambda must be in [0,1)");
    model.validate();
    geometry::validate_spec(boundary_spec);
}

std::string StepRecord::to_json_line() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"step\":%lld,\"epoch\":%d,\"seg\":%.9g,\"distill\":%.9g,"
                  "\"boundary\":%.9g,\"consistency\":%.9g,\"aux\":%.9g,\"lr\":%.9g}",
                  static_cast<long long>(step), epoch, seg, distill, boundary, consistency,
                  aux, lr);
    return buf;
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    cfg_.aux.use_haam = cfg_.ablation.haam;
    universal_ = build_universal(cfg_.model, cfg_.seed);
    aux_source_ = std::make_unique<AuxiliaryBranch>(cfg_.model, cfg_.aux, Domain::source,
                                                    cfg_.seed);
    aux_target_ = std::make_unique<AuxiliaryBranch>(cfg_.model, cfg_.aux, Domain::target,
                                                    cfg_.seed);

    nn::AdamWConfig oc;
    oc.lr = cfg_.lr;
    oc.weight_decay = cfg_.weight_decay;
    oc.clip_norm = cfg_.grad_clip;
    uni_opt_ = std::make_unique<nn::AdamW>(universal_->all_params(), oc);
    std::vector<nn::Parameter*> aux_params = aux_source_->params();
    for (auto* p : aux_target_->params()) aux_params.push_back(p);
    aux_opt_ = std::make_unique<nn::AdamW>(std::move(aux_params), oc);

    state_.ema = losses::EmaState(cfg_.model.input_h, cfg_.model.input_w, cfg_.weights.lambda);
}

namespace {

double checked(double v, const char* term) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite loss term: ") + term);
    return v;
}

Tensor boundary_weights(const Tensor& maps, double gamma) {
    Tensor w(maps.shape());
    const float g = static_cast<float>(gamma);
    for (int64_t i = 0; i < maps.numel(); ++i) w[i] = 1.0f + g * maps[i];
    return w;
}

Tensor shadow_to_tensor(const std::vector<double>& shadow, int h, int w, double scale) {
    Tensor t({1, 1, h, w});
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(scale * shadow[static_cast<size_t>(i)]);
    return t;
}

} // namespace

StepRecord Trainer::train_step(const data::DomainBatch& source,
                               const data::DomainBatch& target) {
    if (source.domain != Domain::source || target.domain != Domain::target)
        throw std::invalid_argument("train_step: batches must be (source, target)");

    nn::Graph g;
    const auto& w = cfg_.weights;

    // (1) universal forward per domain
    auto uni_s = universal_->forward(g, source.images, Domain::source);
    auto uni_t = universal_->forward(g, target.images, Domain::target);

    // (2) auxiliary forward on detached universal features
    auto detach_all = [&g](const std::vector<nn::NodePtr>& xs) {
        std::vector<nn::NodePtr> out;
        out.reserve(xs.size());
        for (const auto& x : xs) out.push_back(g.detach(x));
        return out;
    };
    auto aux_pred_s =
        aux_source_->forward(g, detach_all(uni_s.encoder_features), g.detach(uni_s.decoder_last));
    auto aux_pred_t =
        aux_target_->forward(g, detach_all(uni_t.encoder_features), g.detach(uni_t.decoder_last));

    // (3) auxiliary objective: seg loss per branch on its own domain
    auto aux_loss_node = g.weighted_sum(
        {g.dice_loss(aux_pred_s, source.masks),
         g.bce_loss(aux_pred_s, source.masks, losses::Reduction::mean),
         g.dice_loss(aux_pred_t, target.masks),
         g.bce_loss(aux_pred_t, target.masks, losses::Reduction::mean)},
        {1.0f, 1.0f, 1.0f, 1.0f});
    const double aux_value = checked(aux_loss_node->value[0], "aux");

    if (!cfg_.joint_step) {
        aux_opt_->zero_grad();
        g.backward(aux_loss_node);
        if (enable_auxiliary_updates) aux_opt_->step();
    }

    // (4) EMA update per domain from universal batch-mean predictions
    auto bm_s = g.batch_mean(uni_s.prediction);
    auto bm_t = g.batch_mean(uni_t.prediction);
    const bool consistency_active = cfg_.ablation.consistency && state_.ema.both_initialized();

    // (5) universal objective with detached auxiliary predictions
    auto seg_s_dice = g.dice_loss(uni_s.prediction, source.masks);
    auto seg_s_bce = g.bce_loss(uni_s.prediction, source.masks, losses::Reduction::mean);
    auto seg_t_dice = g.dice_loss(uni_t.prediction, target.masks);
    auto seg_t_bce = g.bce_loss(uni_t.prediction, target.masks, losses::Reduction::mean);
    auto dist_s = g.soft_dice_pair(g.detach(aux_pred_s), uni_s.prediction);
    auto dist_t = g.soft_dice_pair(g.detach(aux_pred_t), uni_t.prediction);

    std::vector<nn::NodePtr> terms = {seg_s_dice, seg_s_bce, seg_t_dice, seg_t_bce,
                                      dist_s, dist_t};
    const float alpha = static_cast<float>(w.alpha), beta = static_cast<float>(w.beta);
    std::vector<float> term_w = {alpha, alpha, alpha, alpha, beta, beta};

    double boundary_value = 0.0;
    if (cfg_.ablation.boundary) {
        auto bound_s = g.weighted_bce_loss(uni_s.prediction, source.masks,
                                           boundary_weights(source.boundaries, w.gamma),
                                           cfg_.boundary_reduction);
        auto bound_t = g.weighted_bce_loss(uni_t.prediction, target.masks,
                                           boundary_weights(target.boundaries, w.gamma),
                                           cfg_.boundary_reduction);
        boundary_value = checked(bound_s->value[0] + bound_t->value[0], "boundary");
        terms.push_back(bound_s);
        term_w.push_back(1.0f);
        terms.push_back(bound_t);
        term_w.push_back(1.0f);
    }

    double consistency_value = 0.0;
    if (consistency_active) {
        // effective shadow: lambda * detach(previous shadow) + (1-lambda) * batch mean
        const double lam = state_.ema.lambda;
        auto m_s = g.add(g.scale(bm_s, static_cast<float>(1.0 - lam)),
                         g.constant(shadow_to_tensor(state_.ema.m_source, cfg_.model.input_h,
                                                     cfg_.model.input_w, lam)));
        auto m_t = g.add(g.scale(bm_t, static_cast<float>(1.0 - lam)),
                         g.constant(shadow_to_tensor(state_.ema.m_target, cfg_.model.input_h,
                                                     cfg_.model.input_w, lam)));
        auto consist = g.mse_mean(m_s, m_t);
        consistency_value = checked(consist->value[0], "consistency");
        terms.push_back(consist);
        term_w.push_back(1.0f);
    }

    auto uni_loss_node = g.weighted_sum(terms, term_w);
    checked(uni_loss_node->value[0], "universal");

    const double seg_value =
        checked(w.alpha * (seg_s_dice->value[0] + seg_s_bce->value[0] + seg_t_dice->value[0] +
                           seg_t_bce->value[0]),
                "seg");
    const double distill_value =
        checked(w.beta * (dist_s->value[0] + dist_t->value[0]), "distill");

    uni_opt_->zero_grad();
    if (cfg_.joint_step) {
        aux_opt_->zero_grad();
        g.backward(aux_loss_node);
        g.backward(uni_loss_node);
        if (enable_auxiliary_updates) aux_opt_->step();
        if (enable_universal_updates) uni_opt_->step();
    } else {
        g.backward(uni_loss_node);
        if (enable_universal_updates) uni_opt_->step();
    }

    // stored EMA advances with the detached batch means
    state_.ema = losses::ema_update(std::move(state_.ema), bm_s->value, Domain::source);
    state_.ema = losses::ema_update(std::move(state_.ema), bm_t->value, Domain::target);

    ++state_.global_step;
    StepRecord rec;
    rec.step = state_.global_step;
    rec.epoch = state_.epoch;
    rec.seg = seg_value;
    rec.distill = distill_value;
    rec.boundary = boundary_value;
    rec.consistency = consistency_value;
    rec.aux = aux_value;
    rec.lr = cfg_.lr;
    return rec;
}

FitResult Trainer::fit(const std::vector<data::ImageSample>& source_train,
                       const std::vector<data::ImageSample>& target_train,
                       const std::vector<data::ImageSample>& source_eval,
                       const std::vector<data::ImageSample>& target_eval,
                       const std::string& out_dir) {
    FitResult result;
    std::ofstream log_stream;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        fs::create_directories(fs::path(out_dir) / "checkpoints");
        log_stream.open(fs::path(out_dir) / "train_log.jsonl",
                        state_.epoch > 0 ? std::ios::app : std::ios::trunc);
        if (!log_stream) throw std::runtime_error("fit: cannot open train_log.jsonl under " + out_dir);
    }

    data::PairedIterator iter(source_train, target_train, cfg_.batch_size, cfg_.seed,
                              cfg_.augment, cfg_.boundary_spec, /*drop_last=*/true);

    for (int epoch = state_.epoch; epoch < cfg_.epochs; ++epoch) {
        state_.epoch = epoch;
        iter.start_epoch(epoch);
        for (int it = 0; it < iter.iterations_per_epoch(); ++it) {
            auto [src, tgt] = iter.next();
            StepRecord rec = train_step(src, tgt);
            if (log_stream) log_stream << rec.to_json_line() << "\n";
            result.log.push_back(rec);
        }
        if (log_stream) log_stream.flush();
        state_.epoch = epoch + 1;
        if (!out_dir.empty() && cfg_.checkpoint_every > 0 &&
            (epoch + 1) % cfg_.checkpoint_every == 0 && epoch + 1 < cfg_.epochs) {
            save_checkpoint(
                (fs::path(out_dir) / "checkpoints" /
                 ("epoch_" + std::to_string(epoch + 1) + ".ckpt")).string());
        }
    }

    if (!source_eval.empty())
        result.source_report = metrics::evaluate(*universal_, source_eval, Domain::source);
    if (!target_eval.empty()) {
        result.target_report = metrics::evaluate(*universal_, target_eval, Domain::target);
        if (result.target_report.aggregate.dice > state_.best_dice) {
            state_.best_dice = result.target_report.aggregate.dice;
            state_.best_epoch = state_.epoch;
        }
    }

    if (!out_dir.empty()) {
        const std::string final_path =
            (fs::path(out_dir) / "checkpoints" /
             ("epoch_" + std::to_string(cfg_.epochs) + ".ckpt")).string();
        save_checkpoint(final_path);
        result.final_checkpoint = final_path;
    }
    return result;
}

void Trainer::save_checkpoint(const std::string& path) {
    checkpoint::Archive a;
    for (const auto* p : universal_->all_params())
        a.put_f32("param/" + p->name, p->value.shape(), p->value.data(), p->value.numel());
    for (auto* branch : {aux_source_.get(), aux_target_.get()})
        for (const auto* p : branch->params())
            a.put_f32("param/" + p->name, p->value.shape(), p->value.data(), p->value.numel());

    auto dump_optimizer = [&a](const std::string& prefix, nn::AdamW& opt) {
        const auto& params = opt.params();
        for (size_t i = 0; i < params.size(); ++i) {
            a.put_f32(prefix + "/m/" + params[i]->name, params[i]->value.shape(),
                      opt.moment1(i).data(), static_cast<int64_t>(opt.moment1(i).size()));
            a.put_f32(prefix + "/v/" + params[i]->name, params[i]->value.shape(),
                      opt.moment2(i).data(), static_cast<int64_t>(opt.moment2(i).size()));
        }
        a.put_scalar(prefix + "/t", static_cast<double>(opt.step_count()));
    };
    dump_optimizer("adam_uni", *uni_opt_);
    dump_optimizer("adam_aux", *aux_opt_);

    a.put_f64("ema/m_source", state_.ema.m_source);
    a.put_f64("ema/m_target", state_.ema.m_target);
    a.put_scalar("ema/lambda", state_.ema.lambda);
    a.put_f64("ema/initialized", {state_.ema.source_initialized ? 1.0 : 0.0,
                                  state_.ema.target_initialized ? 1.0 : 0.0});
    a.put_scalar("state/epoch", static_cast<double>(state_.epoch));
    a.put_scalar("state/global_step", static_cast<double>(state_.global_step));
    a.put_scalar("state/best_dice", state_.best_dice);
    a.put_scalar("state/best_epoch", static_cast<double>(state_.best_epoch));
    a.save(path);

    // sidecar manifest with the config echo
    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(config::train_config_to_json(cfg_));
    manifest["epoch"] = state_.epoch;
    manifest["seed"] = cfg_.seed;
    manifest["best_dice"] = state_.best_dice;
    manifest["best_epoch"] = state_.best_epoch;
    std::ofstream mf(path + ".json");
    mf << manifest.dump(2) << "\n";
}

namespace {
void load_params_into(const checkpoint::Archive& a, std::vector<nn::Parameter*> params) {
    for (auto* p : params) {
        const auto& e = a.get("param/" + p->name);
        if (e.shape != p->value.shape())
            throw std::runtime_error("checkpoint/model mismatch for " + p->name);
        std::copy(e.f32.begin(), e.f32.end(), p->value.data());
    }
}
} // namespace

void Trainer::load_checkpoint(const std::string& path) {
    checkpoint::Archive a = checkpoint::Archive::load(path);
    load_params_into(a, universal_->all_params());
    load_params_into(a, aux_source_->params());
    load_params_into(a, aux_target_->params());

    auto restore_optimizer = [&a](const std::string& prefix, nn::AdamW& opt) {
        const auto& params = opt.params();
        for (size_t i = 0; i < params.size(); ++i) {
            const auto& m = a.get(prefix + "/m/" + params[i]->name);
            const auto& v = a.get(prefix + "/v/" + params[i]->name);
            if (m.f32.size() != opt.moment1(i).size() || v.f32.size() != opt.moment2(i).size())
                throw std::runtime_error("checkpoint/optimizer mismatch for " + params[i]->name);
            opt.moment1(i) = m.f32;
            opt.moment2(i) = v.f32;
        }
        opt.set_step_count(static_cast<int64_t>(a.get_scalar(prefix + "/t")));
    };
    restore_optimizer("adam_uni", *uni_opt_);
    restore_optimizer("adam_aux", *aux_opt_);

    const auto& m_source = a.get("ema/m_source").f64;
    if (m_source.size() != state_.ema.m_source.size())
        throw std::runtime_error(
            "checkpoint/model mismatch: EMA shadow size does not match the configured "
            "input size");
    state_.ema.m_source = m_source;
    state_.ema.m_target = a.get("ema/m_target").f64;
    state_.ema.lambda = a.get_scalar("ema/lambda");
    const auto& init = a.get("ema/initialized").f64;
    state_.ema.source_initialized = init.at(0) != 0.0;
    state_.ema.target_initialized = init.at(1) != 0.0;
    state_.epoch = static_cast<int>(a.get_scalar("state/epoch"));
    state_.global_step = static_cast<int64_t>(a.get_scalar("state/global_step"));
    state_.best_dice = a.get_scalar("state/best_dice");
    state_.best_epoch = static_cast<int>(a.get_scalar("state/best_epoch"));
}

std::vector<AblationRow> ablation_run(const TrainConfig& base,
                                      const std::vector<data::ImageSample>& source_train,
                                      const std::vector<data::ImageSample>& target_train,
                                      const std::vector<data::ImageSample>& target_eval) {
    struct Setup {
        const char* label;
        AblationFlags flags;
        double published;
    };
    // Dice reported for the original thyroid->pancreatic runs; kept as
    // reference metadata, not reproduced on synthetic data.
    const Setup setups[] = {
        {"baseline", {false, false, false}, 79.862},
        {"+haam", {true, false, false}, 80.546},
        {"+haam+consistency", {true, true, false}, 80.601},
        {"+haam+consistency+boundary", {true, true, true}, 81.652},
    };

    std::vector<AblationRow> rows;
    for (const auto& s : setups) {
        TrainConfig cfg = base;
        cfg.ablation = s.flags;
        Trainer trainer(cfg);
        FitResult r = trainer.fit(source_train, target_train, {}, target_eval, "");
        AblationRow row;
        row.label = s.label;
        row.flags = s.flags;
        row.target_report = std::move(r.target_report);
        row.published_dice_reference = s.published;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %6s %6s %6s %6s %9s %9s  %s\n", "configuration",
                  "haam", "cons", "bound", "", "dice", "iou",
                  "published dice (reference, not reproduced)");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %6s %6s %6s %6s %9.3f %9.3f  %.3f\n",
                      r.label.c_str(), r.flags.haam ? "on" : "off",
                      r.flags.consistency ? "on" : "off", r.flags.boundary ? "on" : "off", "",
                      r.target_report.aggregate.dice, r.target_report.aggregate.iou,
                      r.published_dice_reference);
        out += buf;
    }
    return out;
}

std::string ablation_table_json(const std::vector<AblationRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json e;
        e["configuration"] = r.label;
        e["haam"] = r.flags.haam;
        e["consistency"] = r.flags.consistency;
        e["boundary"] = r.flags.boundary;
        e["dice"] = r.target_report.aggregate.dice;
        e["iou"] = r.target_report.aggregate.iou;
        e["asd"] = r.target_report.aggregate.asd;
        e["hd95"] = r.target_report.aggregate.hd95;
        e["published_dice_reference"] = r.published_dice_reference;
        e["published_note"] = "reference from the original thyroid->pancreatic experiment; "
                              "not reproduced on synthetic data";
        j.push_back(std::move(e));
    }
    return j.dump(2);
}

} // namespace cots
