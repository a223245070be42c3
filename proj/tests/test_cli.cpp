#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cotsnet/data.hpp"
#include "cotsnet/image_io.hpp"
#include "cotsnet/metrics.hpp"
#include "cotsnet/run_config.hpp"

namespace fs = std::filesystem;
using namespace cots;

namespace {

std::string cli_binary() {
    const char* env = std::getenv("COTSNET_BIN");
    REQUIRE_MESSAGE(env != nullptr, "COTSNET_BIN must point at the cotsnet binary");
    return env;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_binary() + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("cotsnet_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config: unknown keys and ambiguous overrides are rejected") {
    CHECK_THROWS_WITH_AS(config::parse_run_config("{\"trian\": {}}", {}),
                         "config: unknown key: trian", std::invalid_argument);
    CHECK_THROWS_AS(config::parse_run_config("{\"train\": {\"epoch\": 1}}", {}),
                    std::invalid_argument);
    // a unique bare key resolves to its dotted path
    const auto sig = config::parse_run_config("{}", {"sigma=2.0"});
    CHECK(sig.train.boundary_spec.sigma == 2.0);
    // root appears under both source and target, so the bare key is ambiguous
    CHECK_THROWS_AS(config::parse_run_config("{}", {"root=/tmp/x"}), std::invalid_argument);

    const auto rc = config::parse_run_config("{}", {"epochs=3", "train.lr=0.01"});
    CHECK(rc.train.epochs == 3);
    CHECK(rc.train.lr == 0.01);
}

TEST_CASE("config: defaults mirror the training protocol") {
    const auto rc = config::parse_run_config("{}", {});
    CHECK(rc.train.lr == 1e-4);
    CHECK(rc.train.weight_decay == 0.05);
    CHECK(rc.train.batch_size == 4);
    CHECK(rc.train.epochs == 200);
    CHECK(rc.train.weights.alpha == 0.5);
    CHECK(rc.train.weights.beta == 0.5);
    CHECK(rc.train.weights.gamma == 1.0);
    CHECK(rc.train.weights.lambda == 0.9);
    CHECK(rc.train.model.input_h == 256);
    CHECK(rc.train.model.stage_channels == std::vector<int>{32, 64, 128, 256});
    CHECK(rc.train.ablation.haam);
    CHECK(rc.train.ablation.consistency);
    CHECK(rc.train.ablation.boundary);
}

TEST_CASE("config: round trip through the manifest serialization") {
    TrainConfig cfg;
    cfg.lr = 0.002;
    cfg.model.input_h = cfg.model.input_w = 64;
    cfg.model.stage_channels = {8, 16, 32, 64};
    cfg.ablation.consistency = false;
    cfg.boundary_reduction = losses::Reduction::sum;
    const TrainConfig back = config::train_config_from_json(config::train_config_to_json(cfg));
    CHECK(back.lr == cfg.lr);
    CHECK(back.model.input_h == 64);
    CHECK(back.model.stage_channels == cfg.model.stage_channels);
    CHECK_FALSE(back.ablation.consistency);
    CHECK(back.boundary_reduction == losses::Reduction::sum);
}

TEST_CASE("cli: usage and missing-file errors exit with code 1") {
    CHECK(run_cli("train") == 1);                                   // missing required --config
    CHECK(run_cli("train --config /nonexistent/config.json") == 1); // named missing file
    CHECK(run_cli("definitely-not-a-command") == 1);
    CHECK(run_cli("--print-schema") == 0);
}

TEST_CASE("cli: gen-synth writes the layout deterministically and guards overwrites") {
    const fs::path a = fresh_dir("gen_a");
    const fs::path b = fresh_dir("gen_b");
    REQUIRE(run_cli("gen-synth --style blob_texture --n 3 --seed 5 --size 32 --out " +
                    a.string() + " --force") == 0);
    REQUIRE(run_cli("gen-synth --style blob_texture --n 3 --seed 5 --size 32 --out " +
                    b.string() + " --force") == 0);
    for (const char* sub : {"images", "masks"}) {
        for (const auto& e : fs::directory_iterator(a / sub)) {
            const fs::path other = b / sub / e.path().filename();
            REQUIRE(fs::exists(other));
            CHECK(slurp(e.path()) == slurp(other));
        }
    }
    CHECK(run_cli("gen-synth --style blob_texture --n 3 --seed 5 --size 32 --out " +
                  a.string()) == 1); // refuses without --force
    CHECK(run_cli("gen-synth --style nonsense --n 3 --out " + a.string() + " --force") == 1);
}

TEST_CASE("cli: boundary command degenerate and normalization fixtures") {
    const fs::path dir = fresh_dir("bnd");
    fs::create_directories(dir / "masks");
    ImageU8 constant(16, 16, 1);
    png::write((dir / "masks" / "flat.png").string(), constant);
    ImageU8 square(16, 16, 1);
    for (int y = 5; y < 11; ++y)
        for (int x = 5; x < 11; ++x) square.at(y, x, 0) = 255;
    png::write((dir / "masks" / "square.png").string(), square);

    const fs::path out = dir / "maps";
    REQUIRE(run_cli("boundary --input " + (dir / "masks").string() + " --kernel 5 --sigma 1.0 --out " +
                    out.string() + " --force") == 0);

    const ImageU8 flat = png::read((out / "flat.png").string());
    for (uint8_t v : flat.pixels) CHECK(v == 0);

    const ImageU8 sq = png::read((out / "square.png").string());
    uint8_t mx = 0;
    for (uint8_t v : sq.pixels) mx = std::max(mx, v);
    CHECK(mx == 255);

    // quantization bound: re-read map matches the in-memory map within 1/255
    Mask m(16, 16);
    for (int y = 5; y < 11; ++y)
        for (int x = 5; x < 11; ++x) m.at(y, x) = 1;
    const BoundaryMap bm = geometry::boundary_map(m, {5, 1.0});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            CHECK(std::abs(sq.at(y, x, 0) / 255.0 - bm.values.at(y, x)) <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("cli: train/eval round trip with spacing linearity") {
    const fs::path root = fresh_dir("roundtrip");
    const fs::path src_dir = root / "src_data";
    const fs::path tgt_dir = root / "tgt_data";
    data::write_dataset(src_dir.string(),
                        data::generate_synthetic(data::SynthStyle::blob_texture, 6, 11, 32,
                                                 Domain::source));
    data::write_dataset(tgt_dir.string(),
                        data::generate_synthetic(data::SynthStyle::ellipse_speckle, 6, 12, 32,
                                                 Domain::target));

    nlohmann::json cfg;
    cfg["source"] = {{"root", "src_data"}, {"train_fraction", 0.67}};
    cfg["target"] = {{"root", "tgt_data"}, {"train_fraction", 0.67}};
    cfg["train"] = {{"epochs", 2},  {"batch_size", 2}, {"seed", 3},
                    {"augment", false}, {"checkpoint_every", 0}, {"lr", 1e-3}};
    cfg["model"] = {{"num_stages", 2}, {"stage_channels", {8, 16}},
                    {"input_size", {32, 32}}, {"decoder_feature_channels", 8}};
    cfg["output_dir"] = "run";
    const fs::path cfg_path = root / "config.json";
    std::ofstream(cfg_path) << cfg.dump(2);

    // override trims it to one epoch
    REQUIRE(run_cli("train --config " + cfg_path.string() + " --override epochs=1") == 0);
    const fs::path run = root / "run";
    CHECK(fs::exists(run / "train_log.jsonl"));
    CHECK(fs::exists(run / "metrics.json"));

    std::ifstream log(run / "train_log.jsonl");
    std::string line;
    int steps = 0;
    int max_epoch = -1;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        ++steps;
        const auto rec = nlohmann::json::parse(line);
        max_epoch = std::max(max_epoch, rec.at("epoch").get<int>());
        for (const char* k : {"step", "seg", "distill", "boundary", "consistency", "aux", "lr"})
            CHECK(rec.contains(k));
    }
    CHECK(steps == 2); // 4 train images, batch 2, one epoch
    CHECK(max_epoch == 0);

    // rerunning without --force refuses to clobber the log
    CHECK(run_cli("train --config " + cfg_path.string() + " --override epochs=1") == 1);

    const metrics::MetricReport report =
        metrics::MetricReport::from_json(slurp(run / "metrics.json"));
    CHECK(report.per_image.size() == 2);

    // eval at two spacings: distances scale exactly
    const std::string ckpt = (run / "checkpoints" / "epoch_1.ckpt").string();
    REQUIRE(fs::exists(ckpt));
    const fs::path e1 = root / "eval1";
    const fs::path e05 = root / "eval05";
    REQUIRE(run_cli("eval --checkpoint " + ckpt + " --dataset " + tgt_dir.string() +
                    " --spacing 1.0 --out " + e1.string() + " --overlays") == 0);
    REQUIRE(run_cli("eval --checkpoint " + ckpt + " --dataset " + tgt_dir.string() +
                    " --spacing 0.5 --out " + e05.string()) == 0);
    const auto r1 = metrics::MetricReport::from_json(slurp(e1 / "metrics.json"));
    const auto r05 = metrics::MetricReport::from_json(slurp(e05 / "metrics.json"));
    REQUIRE(r1.per_image.size() == 6);
    REQUIRE(r05.per_image.size() == 6);
    for (size_t i = 0; i < r1.per_image.size(); ++i) {
        REQUIRE(r1.per_image[i].asd.has_value() == r05.per_image[i].asd.has_value());
        if (r1.per_image[i].asd) {
            CHECK(*r05.per_image[i].asd == 0.5 * *r1.per_image[i].asd);
            CHECK(*r05.per_image[i].hd95 == 0.5 * *r1.per_image[i].hd95);
        }
    }
    CHECK(r05.aggregate.asd == 0.5 * r1.aggregate.asd);
    CHECK(r05.aggregate.hd95 == 0.5 * r1.aggregate.hd95);
    CHECK(fs::exists(e1 / "overlays"));

    // a manifest that disagrees with the stored tensors is rejected
    const std::string manifest_path = ckpt + ".json";
    auto manifest = nlohmann::json::parse(slurp(manifest_path));
    manifest["config"]["model"]["stage_channels"] = {16, 32};
    std::ofstream(manifest_path) << manifest.dump(2);
    CHECK(run_cli("eval --checkpoint " + ckpt + " --dataset " + tgt_dir.string() + " --out " +
                  (root / "eval_bad").string()) == 2);
}
