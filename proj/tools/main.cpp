// cotsnet: cross-organ two-domain segmentation training and evaluation CLI.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cotsnet/checkpoint.hpp"
#include "cotsnet/image_io.hpp"
#include "cotsnet/metrics.hpp"
#include "cotsnet/run_config.hpp"
#include "cotsnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace cots;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;   // usage / config errors
constexpr int kExitRuntime = 2; // runtime / data errors

void require_writable(const fs::path& file, bool force) {
    if (fs::exists(file) && !force)
        throw std::invalid_argument("refusing to overwrite " + file.string() +
                                    " (pass --force to allow)");
}

std::vector<data::ImageSample> load_all_images(const std::string& root, Domain domain,
                                               const TrainConfig& cfg) {
    data::DatasetSpec spec;
    spec.root = root;
    spec.split = data::Split::test;
    spec.train_count = 0; // test split receives every image
    spec.resize_h = cfg.model.input_h;
    spec.resize_w = cfg.model.input_w;
    spec.seed = cfg.seed;
    spec.boundary_spec = cfg.boundary_spec;
    return data::load_dataset(spec, domain);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (text.empty() || text.back() != '\n') out << "\n";
}

void write_overlays(const fs::path& dir, UniversalNet& model,
                    const std::vector<data::ImageSample>& samples, Domain domain,
                    double threshold) {
    fs::create_directories(dir);
    const int h = model.config().input_h, w = model.config().input_w;
    for (const auto& s : samples) {
        Tensor batch({1, 3, h, w});
        std::copy_n(s.image.data(), s.image.numel(), batch.data());
        nn::Graph g(false);
        const auto out = model.forward(g, batch, domain);
        const Mask pred = metrics::binarize(out.prediction->value, threshold);

        ImageU8 img(h, w, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = static_cast<uint8_t>(
                        std::lround(std::clamp(s.image.data()[(static_cast<int64_t>(c) * h + y) * w + x],
                                               0.0f, 1.0f) * 255.0f));
        for (const auto& p : geometry::surface_points(s.mask)) { // ground truth in green
            img.at(p.row, p.col, 0) = 0;
            img.at(p.row, p.col, 1) = 255;
            img.at(p.row, p.col, 2) = 0;
        }
        for (const auto& p : geometry::surface_points(pred)) { // prediction in red
            img.at(p.row, p.col, 0) = 255;
            img.at(p.row, p.col, 1) = 0;
            img.at(p.row, p.col, 2) = 0;
        }
        png::write((dir / (s.id + ".png")).string(), img);
    }
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_override, bool has_seed, uint64_t seed_override,
              bool force) {
    config::RunConfig rc = config::load_run_config(config_path, overrides);
    if (!out_override.empty()) rc.output_dir = out_override;
    if (has_seed) rc.train.seed = seed_override;
    rc.train.validate();
    if (rc.source.root.empty() || rc.target.root.empty())
        throw std::invalid_argument("config: source.root and target.root are required for train");

    require_writable(fs::path(rc.output_dir) / "train_log.jsonl", force);
    require_writable(fs::path(rc.output_dir) / "metrics.json", force);

    auto load_split = [&rc](const data::DatasetSpec& base, data::Split split, Domain domain) {
        data::DatasetSpec spec = base;
        spec.split = split;
        spec.augmentation = split == data::Split::train && rc.train.augment;
        return data::load_dataset(spec, domain);
    };
    const auto source_train = load_split(rc.source, data::Split::train, Domain::source);
    const auto target_train = load_split(rc.target, data::Split::train, Domain::target);
    const auto source_eval = load_split(rc.source, data::Split::test, Domain::source);
    const auto target_eval = load_split(rc.target, data::Split::test, Domain::target);
    std::fprintf(stderr, "train: %zu source / %zu target training images, %zu/%zu eval\n",
                 source_train.size(), target_train.size(), source_eval.size(),
                 target_eval.size());

    Trainer trainer(rc.train);
    FitResult result =
        trainer.fit(source_train, target_train, source_eval, target_eval, rc.output_dir);

    const metrics::MetricReport& report =
        !result.target_report.per_image.empty() ? result.target_report : result.source_report;
    write_text(fs::path(rc.output_dir) / "metrics.json", report.to_json());
    if (!result.source_report.per_image.empty() && !result.target_report.per_image.empty())
        write_text(fs::path(rc.output_dir) / "metrics_source.json",
                   result.source_report.to_json());
    std::fprintf(stderr, "train: finished %d epochs, %zu steps; final checkpoint %s\n",
                 rc.train.epochs, result.log.size(), result.final_checkpoint.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_dir,
             double threshold, double spacing, const std::string& out_dir,
             const std::string& domain_name_arg, bool overlays, bool force) {
    const std::string manifest_path = checkpoint_path + ".json";
    if (!fs::exists(checkpoint_path))
        throw std::runtime_error("checkpoint not found: " + checkpoint_path);
    if (!fs::exists(manifest_path))
        throw std::runtime_error("checkpoint manifest not found: " + manifest_path);

    std::ifstream mf(manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    TrainConfig cfg = config::train_config_from_json(manifest.at("config").dump());
    cfg.validate();

    const Domain domain = domain_from_string(domain_name_arg);
    Trainer trainer(cfg);
    trainer.load_checkpoint(checkpoint_path);

    const auto samples = load_all_images(dataset_dir, domain, cfg);
    std::fprintf(stderr, "eval: %zu images from %s as %s domain\n", samples.size(),
                 dataset_dir.c_str(), domain_name(domain));

    const fs::path out = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(out);
    require_writable(out / "metrics.json", force);

    const metrics::MetricReport report =
        metrics::evaluate(trainer.universal(), samples, domain, threshold, spacing);
    write_text(out / "metrics.json", report.to_json());
    if (overlays) write_overlays(out / "overlays", trainer.universal(), samples, domain, threshold);
    std::fprintf(stderr, "eval: dice %.3f iou %.3f asd %.4f hd95 %.4f (%d distance-excluded)\n",
                 report.aggregate.dice, report.aggregate.iou, report.aggregate.asd,
                 report.aggregate.hd95, report.distance_excluded);
    return kExitOk;
}

int cmd_gen_synth(const std::string& style_name, int n, uint64_t seed, int size,
                  const std::string& out_dir, bool force) {
    const auto style = data::synth_style_from_string(style_name);
    const fs::path images = fs::path(out_dir) / "images";
    if (fs::exists(images) && !fs::is_empty(images) && !force)
        throw std::invalid_argument("refusing to overwrite non-empty " + images.string() +
                                    " (pass --force to allow)");
    const auto samples = data::generate_synthetic(style, n, seed, size, Domain::target);
    data::write_dataset(out_dir, samples);
    std::fprintf(stderr, "gen-synth: wrote %d %s pairs under %s\n", n, style_name.c_str(),
                 out_dir.c_str());
    return kExitOk;
}

int cmd_boundary(const std::string& input, int kernel, double sigma,
                 const std::string& out_dir, bool force) {
    GaussianSpec spec{kernel, sigma};
    geometry::validate_spec(spec);

    std::vector<fs::path> inputs;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
    } else if (fs::exists(input)) {
        inputs.push_back(input);
    } else {
        throw std::runtime_error("boundary: input not found: " + input);
    }
    if (inputs.empty()) throw std::runtime_error("boundary: no .png inputs under " + input);

    fs::create_directories(out_dir);
    for (const auto& path : inputs) {
        const fs::path out_path = fs::path(out_dir) / path.filename();
        require_writable(out_path, force);
        const ImageU8 img = png::read(path.string());
        Mask mask(img.height, img.width);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) mask.at(y, x) = img.at(y, x, 0) > 127 ? 1 : 0;
        const BoundaryMap bm = geometry::boundary_map(mask, spec);
        ImageU8 out_img(img.height, img.width, 1);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out_img.at(y, x, 0) =
                    static_cast<uint8_t>(std::lround(bm.values.at(y, x) * 255.0));
        png::write(out_path.string(), out_img);
    }
    std::fprintf(stderr, "boundary: wrote %zu maps under %s\n", inputs.size(), out_dir.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cotsnet: cross-organ two-domain segmentation framework"};
    app.require_subcommand(0, 1);
    bool print_schema = false;
    app.add_flag("--print-schema", print_schema, "print the run configuration schema and exit");

    // train
    auto* train = app.add_subcommand("train", "run the training protocol from a config file");
    std::string config_path, train_out;
    std::vector<std::string> overrides;
    uint64_t seed_override = 0;
    bool train_force = false;
    train->add_option("--config", config_path, "run configuration (JSON)")->required();
    train->add_option("--override", overrides, "config override KEY=VALUE (repeatable)");
    train->add_option("--out", train_out, "output directory (overrides config output_dir)");
    auto* seed_opt = train->add_option("--seed", seed_override, "seed override");
    train->add_flag("--force", train_force, "allow overwriting existing outputs");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
    std::string ckpt_path, dataset_dir, eval_out, eval_domain = "target";
    double threshold = 0.5, spacing = 1.0;
    bool overlays = false, eval_force = false;
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file (.ckpt)")->required();
    eval->add_option("--dataset", dataset_dir, "dataset root with images/ and masks/")->required();
    eval->add_option("--threshold", threshold, "binarization threshold (default 0.5)");
    eval->add_option("--spacing", spacing, "pixel spacing multiplier for ASD/HD95 (default 1.0)");
    eval->add_option("--out", eval_out, "output directory (default .)");
    eval->add_option("--domain", eval_domain, "adapter domain: source | target (default target)");
    eval->add_flag("--overlays", overlays, "write contour overlays (ground truth green, prediction red)");
    eval->add_flag("--force", eval_force, "allow overwriting existing outputs");

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic two-phantom dataset");
    std::string style = "ellipse_speckle", gen_out;
    int n = 16, size = 64;
    uint64_t gen_seed = 0;
    bool gen_force = false;
    gen->add_option("--style", style, "ellipse_speckle | blob_texture");
    gen->add_option("--n", n, "number of image/mask pairs (default 16)");
    gen->add_option("--seed", gen_seed, "generator seed (default 0)");
    gen->add_option("--size", size, "square image size in pixels (default 64)");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_flag("--force", gen_force, "allow overwriting existing outputs");

    // boundary
    auto* boundary = app.add_subcommand("boundary", "export boundary maps for mask PNGs");
    std::string bnd_input, bnd_out;
    int kernel = 5;
    double sigma = 1.0;
    bool bnd_force = false;
    boundary->add_option("--input", bnd_input, "mask PNG or directory of masks")->required();
    boundary->add_option("--kernel", kernel, "Gaussian kernel size, odd (default 5)");
    boundary->add_option("--sigma", sigma, "Gaussian sigma in pixels (default 1.0)");
    boundary->add_option("--out", bnd_out, "output directory")->required();
    boundary->add_flag("--force", bnd_force, "allow overwriting existing outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (print_schema) {
            std::cout << config::print_schema();
            return kExitOk;
        }
        if (train->parsed())
            return cmd_train(config_path, overrides, train_out, seed_opt->count() > 0,
                             seed_override, train_force);
        if (eval->parsed())
            return cmd_eval(ckpt_path, dataset_dir, threshold, spacing, eval_out, eval_domain,
                            overlays, eval_force);
        if (gen->parsed()) return cmd_gen_synth(style, n, gen_seed, size, gen_out, gen_force);
        if (boundary->parsed()) return cmd_boundary(bnd_input, kernel, sigma, bnd_out, bnd_force);
        std::cout << app.help();
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
