#include "cotsnet/run_config.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cots::config {

namespace {

struct KeyNode {
    std::vector<std::pair<std::string, KeyNode>> children; // empty => leaf
    const KeyNode* find(const std::string& k) const {
        for (const auto& [name, node] : children)
            if (name == k) return &node;
        return nullptr;
    }
};

const KeyNode& schema_tree() {
    static const KeyNode ablation{{{"haam", {}}, {"consistency", {}}, {"boundary", {}}}};
    static const KeyNode train{{{"lr", {}},
                                {"weight_decay", {}},
                                {"batch_size", {}},
                                {"epochs", {}},
                                {"alpha", {}},
                                {"beta", {}},
                                {"gamma", {}},
                                {"lambda", {}},
                                {"seed", {}},
                                {"checkpoint_every", {}},
                                {"augment", {}},
                                {"joint_step", {}},
                                {"boundary_reduction", {}},
                                {"grad_clip", {}},
                                {"ablation", ablation}}};
    static const KeyNode model{{{"backbone", {}},
                                {"in_channels", {}},
                                {"num_stages", {}},
                                {"stage_channels", {}},
                                {"input_size", {}},
                                {"decoder_feature_channels", {}},
                                {"attention_heads", {}}}};
    static const KeyNode dataset{{{"root", {}}, {"train_count", {}}, {"train_fraction", {}}}};
    static const KeyNode eval{{{"threshold", {}}, {"spacing", {}}}};
    static const KeyNode boundary{{{"kernel_size", {}}, {"sigma", {}}}};
    static const KeyNode aux{{{"reduction_ratio", {}}, {"spatial_kernel", {}}}};
    static const KeyNode root{{{"output_dir", {}},
                               {"eval", eval},
                               {"source", dataset},
                               {"target", dataset},
                               {"train", train},
                               {"model", model},
                               {"boundary_map", boundary},
                               {"aux", aux}}};
    return root;
}

void reject_unknown(const json& j, const KeyNode& node, const std::string& prefix) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        const KeyNode* child = node.find(key);
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!child) throw std::invalid_argument("config: unknown key: " + path);
        if (!child->children.empty()) reject_unknown(value, *child, path);
        else if (value.is_object())
            throw std::invalid_argument("config: key is not a section: " + path);
    }
}

void collect_leaf_paths(const KeyNode& node, const std::string& prefix,
                        std::vector<std::string>& out) {
    for (const auto& [name, child] : node.children) {
        const std::string path = prefix.empty() ? name : prefix + "." + name;
        if (child.children.empty()) out.push_back(path);
        else collect_leaf_paths(child, path, out);
    }
}

std::string resolve_override_key(const std::string& key) {
    std::vector<std::string> leaves;
    collect_leaf_paths(schema_tree(), "", leaves);
    for (const auto& leaf : leaves)
        if (leaf == key) return leaf;
    std::vector<std::string> matches;
    for (const auto& leaf : leaves) {
        const size_t pos = leaf.rfind('.');
        if (pos != std::string::npos && leaf.substr(pos + 1) == key) matches.push_back(leaf);
    }
    if (matches.size() == 1) return matches[0];
    if (matches.empty()) throw std::invalid_argument("config: unknown override key: " + key);
    std::string msg = "config: ambiguous override key '" + key + "', candidates:";
    for (const auto& m : matches) msg += " " + m;
    throw std::invalid_argument(msg);
}

void apply_override(json& doc, const std::string& spec) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("config: override must be KEY=VALUE: " + spec);
    const std::string key = resolve_override_key(spec.substr(0, eq));
    const std::string value_text = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::exception&) {
        value = value_text; // fall back to a plain string
    }
    json* cursor = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (size_t i = 0; i + 1 < parts.size(); ++i) cursor = &((*cursor)[parts[i]]);
    (*cursor)[parts.back()] = value;
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_dataset(const json& j, data::DatasetSpec& spec) {
    maybe(j, "root", spec.root);
    maybe(j, "train_count", spec.train_count);
    maybe(j, "train_fraction", spec.train_fraction);
}

} // namespace

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    reject_unknown(doc, schema_tree(), "");

    RunConfig rc;
    maybe(doc, "output_dir", rc.output_dir);
    if (doc.contains("eval")) {
        maybe(doc.at("eval"), "threshold", rc.eval_threshold);
        maybe(doc.at("eval"), "spacing", rc.eval_spacing);
    }
    if (doc.contains("source")) parse_dataset(doc.at("source"), rc.source);
    if (doc.contains("target")) parse_dataset(doc.at("target"), rc.target);

    TrainConfig& t = rc.train;
    if (doc.contains("train")) {
        const json& j = doc.at("train");
        maybe(j, "lr", t.lr);
        maybe(j, "weight_decay", t.weight_decay);
        maybe(j, "batch_size", t.batch_size);
        maybe(j, "epochs", t.epochs);
        maybe(j, "alpha", t.weights.alpha);
        maybe(j, "beta", t.weights.beta);
        maybe(j, "gamma", t.weights.gamma);
        maybe(j, "lambda", t.weights.lambda);
        maybe(j, "seed", t.seed);
        maybe(j, "checkpoint_every", t.checkpoint_every);
        maybe(j, "augment", t.augment);
        maybe(j, "joint_step", t.joint_step);
        maybe(j, "grad_clip", t.grad_clip);
        if (j.contains("boundary_reduction")) {
            const std::string red = j.at("boundary_reduction").get<std::string>();
            if (red == "mean") t.boundary_reduction = losses::Reduction::mean;
            else if (red == "sum") t.boundary_reduction = losses::Reduction::sum;
            else throw std::invalid_argument("config: boundary_reduction must be mean or sum");
        }
        if (j.contains("ablation")) {
            maybe(j.at("ablation"), "haam", t.ablation.haam);
            maybe(j.at("ablation"), "consistency", t.ablation.consistency);
            maybe(j.at("ablation"), "boundary", t.ablation.boundary);
        }
    }
    if (doc.contains("model")) {
        const json& j = doc.at("model");
        if (j.contains("backbone"))
            t.model.backbone = backbone_from_string(j.at("backbone").get<std::string>());
        maybe(j, "in_channels", t.model.in_channels);
        maybe(j, "num_stages", t.model.num_stages);
        maybe(j, "stage_channels", t.model.stage_channels);
        if (j.contains("input_size")) {
            const auto v = j.at("input_size").get<std::vector<int>>();
            if (v.size() != 2)
                throw std::invalid_argument("config: input_size must be [height, width]");
            t.model.input_h = v[0];
            t.model.input_w = v[1];
        }
        maybe(j, "decoder_feature_channels", t.model.decoder_feature_channels);
        maybe(j, "attention_heads", t.model.attention_heads);
    }
    if (doc.contains("boundary_map")) {
        maybe(doc.at("boundary_map"), "kernel_size", t.boundary_spec.kernel_size);
        maybe(doc.at("boundary_map"), "sigma", t.boundary_spec.sigma);
    }
    if (doc.contains("aux")) {
        maybe(doc.at("aux"), "reduction_ratio", t.aux.reduction_ratio);
        maybe(doc.at("aux"), "spatial_kernel", t.aux.spatial_kernel);
    }

    // datasets mirror the training setup
    rc.source.resize_h = rc.target.resize_h = t.model.input_h;
    rc.source.resize_w = rc.target.resize_w = t.model.input_w;
    rc.source.seed = rc.target.seed = t.seed;
    rc.source.boundary_spec = rc.target.boundary_spec = t.boundary_spec;
    return rc;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig rc = parse_run_config(ss.str(), overrides);

    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&base](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    resolve(rc.source.root);
    resolve(rc.target.root);
    resolve(rc.output_dir);
    return rc;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["train"] = {{"lr", cfg.lr},
                  {"weight_decay", cfg.weight_decay},
                  {"batch_size", cfg.batch_size},
                  {"epochs", cfg.epochs},
                  {"alpha", cfg.weights.alpha},
                  {"beta", cfg.weights.beta},
                  {"gamma", cfg.weights.gamma},
                  {"lambda", cfg.weights.lambda},
                  {"seed", cfg.seed},
                  {"checkpoint_every", cfg.checkpoint_every},
                  {"augment", cfg.augment},
                  {"joint_step", cfg.joint_step},
                  {"grad_clip", cfg.grad_clip},
                  {"boundary_reduction",
                   cfg.boundary_reduction == losses::Reduction::mean ? "mean" : "sum"},
                  {"ablation",
                   {{"haam", cfg.ablation.haam},
                    {"consistency", cfg.ablation.consistency},
                    {"boundary", cfg.ablation.boundary}}}};
    j["model"] = {{"backbone", backbone_name(cfg.model.backbone)},
                  {"in_channels", cfg.model.in_channels},
                  {"num_stages", cfg.model.num_stages},
                  {"stage_channels", cfg.model.stage_channels},
                  {"input_size", {cfg.model.input_h, cfg.model.input_w}},
                  {"decoder_feature_channels", cfg.model.decoder_feature_channels},
                  {"attention_heads", cfg.model.attention_heads}};
    j["boundary_map"] = {{"kernel_size", cfg.boundary_spec.kernel_size},
                         {"sigma", cfg.boundary_spec.sigma}};
    j["aux"] = {{"reduction_ratio", cfg.aux.reduction_ratio},
                {"spatial_kernel", cfg.aux.spatial_kernel}};
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    RunConfig rc = parse_run_config(text, {});
    return rc.train;
}

std::string print_schema() {
    return R"(Run configuration schema (JSON). All keys optional; defaults shown.
Relative paths resolve against the config file location.

{
  "output_dir": "run_output",        // artifacts: train_log.jsonl, checkpoints/, metrics.json
  "source": {                        // source-domain dataset (images/ + masks/ of 8-bit PNG)
    "root": "",                      //   masks hold {0,255}; other values over 1% of pixels rejected
    "train_count": -1,               //   images assigned to the train split; -1 = use fraction
    "train_fraction": 0.8            //   seeded random split of the flat directory
  },
  "target": { "root": "", "train_count": -1, "train_fraction": 0.8 },
  "train": {
    "lr": 1e-4,                      // AdamW learning rate
    "weight_decay": 0.05,
    "batch_size": 4,                 // per domain
    "epochs": 200,
    "alpha": 0.5,                    // segmentation term weight
    "beta": 0.5,                     // distillation term weight
    "gamma": 1.0,                    // boundary emphasis coefficient
    "lambda": 0.9,                   // EMA decay
    "seed": 0,
    "checkpoint_every": 50,          // epochs between periodic checkpoints; <=0 disables
    "augment": true,
    "joint_step": false,             // combine both objectives into one optimizer phase
    "grad_clip": 5.0,                // global-norm clip per optimizer; <=0 disables
    "boundary_reduction": "mean",    // pixel reduction of the boundary loss: mean | sum
    "ablation": { "haam": true, "consistency": true, "boundary": true }
  },
  "model": {
    "backbone": "conv_unet",         // conv_unet | hierarchical_attention
    "in_channels": 3,
    "num_stages": 4,
    "stage_channels": [32, 64, 128, 256],
    "input_size": [256, 256],        // must be divisible by 2^num_stages
    "decoder_feature_channels": 64,  // width of the decoder tap consumed by the aux branches
    "attention_heads": 4
  },
  "boundary_map": { "kernel_size": 5, "sigma": 1.0 },
  "aux": { "reduction_ratio": 8, "spatial_kernel": 7 },
  "eval": { "threshold": 0.5, "spacing": 1.0 }
}
)";
}

} // namespace cots::config
