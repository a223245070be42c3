#include "cotsnet/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cots::metrics {

using nlohmann::json;

namespace {
void require_same_shape(const Mask& a, const Mask& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument(std::string(what) + ": mask shape mismatch");
}
} // namespace

double dice_score(const Mask& pred, const Mask& gt) {
    require_same_shape(pred, gt, "dice_score");
    int64_t inter = 0, p = 0, g = 0;
    for (size_t i = 0; i < pred.grid.size(); ++i) {
        inter += pred.grid[i] & gt.grid[i];
        p += pred.grid[i];
        g += gt.grid[i];
    }
    if (p + g == 0) return 100.0; // both empty: perfect overlap by definition
    return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

double iou_score(const Mask& pred, const Mask& gt) {
    require_same_shape(pred, gt, "iou_score");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.grid.size(); ++i) {
        inter += pred.grid[i] & gt.grid[i];
        uni += pred.grid[i] | gt.grid[i];
    }
    if (uni == 0) return 100.0;
    return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

double asd(const Mask& pred, const Mask& gt, double spacing) {
    const auto d1 = geometry::directed_surface_distances(pred, gt);
    const auto d2 = geometry::directed_surface_distances(gt, pred);
    double sum = 0.0;
    for (double v : d1) sum += v;
    for (double v : d2) sum += v;
    return spacing * sum / static_cast<double>(d1.size() + d2.size());
}

double percentile_linear(const std::vector<double>& sorted_values, double q) {
    if (sorted_values.empty())
        throw std::invalid_argument("percentile of an empty sequence");
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

double hd95(const Mask& pred, const Mask& gt, double spacing) {
    auto d = geometry::directed_surface_distances(pred, gt);
    const auto d2 = geometry::directed_surface_distances(gt, pred);
    d.insert(d.end(), d2.begin(), d2.end());
    std::sort(d.begin(), d.end());
    return spacing * percentile_linear(d, 0.95);
}

Mask binarize(const Tensor& probs, double threshold) {
    if (probs.ndim() < 2) throw std::invalid_argument("binarize: expects a spatial tensor");
    const int h = probs.dim(probs.ndim() - 2);
    const int w = probs.dim(probs.ndim() - 1);
    if (probs.numel() != static_cast<int64_t>(h) * w)
        throw std::invalid_argument("binarize: expects a single-channel map");
    Mask m(h, w);
    for (int64_t i = 0; i < probs.numel(); ++i)
        m.grid[static_cast<size_t>(i)] = probs[i] >= static_cast<float>(threshold) ? 1 : 0;
    return m;
}

void MetricReport::finalize() {
    aggregate = Aggregate{};
    distance_excluded = 0;
    if (per_image.empty()) return;
    int with_distance = 0;
    for (const auto& m : per_image) {
        aggregate.dice += m.dice;
        aggregate.iou += m.iou;
        if (m.asd && m.hd95) {
            aggregate.asd += *m.asd;
            aggregate.hd95 += *m.hd95;
            ++with_distance;
        } else {
            ++distance_excluded;
        }
    }
    aggregate.dice /= static_cast<double>(per_image.size());
    aggregate.iou /= static_cast<double>(per_image.size());
    if (with_distance > 0) {
        aggregate.asd /= with_distance;
        aggregate.hd95 /= with_distance;
    }
}

std::string MetricReport::to_json() const {
    json j;
    j["spacing"] = spacing;
    j["threshold"] = threshold;
    j["per_image"] = json::array();
    for (const auto& m : per_image) {
        json e;
        e["id"] = m.id;
        e["dice"] = m.dice;
        e["iou"] = m.iou;
        e["asd"] = m.asd ? json(*m.asd) : json(nullptr);
        e["hd95"] = m.hd95 ? json(*m.hd95) : json(nullptr);
        j["per_image"].push_back(std::move(e));
    }
    j["aggregate"] = {{"dice", aggregate.dice},
                      {"iou", aggregate.iou},
                      {"asd", aggregate.asd},
                      {"hd95", aggregate.hd95}};
    j["distance_excluded"] = distance_excluded;
    return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricReport r;
    r.spacing = j.at("spacing").get<double>();
    r.threshold = j.at("threshold").get<double>();
    for (const auto& e : j.at("per_image")) {
        PerImageMetrics m;
        m.id = e.at("id").get<std::string>();
        m.dice = e.at("dice").get<double>();
        m.iou = e.at("iou").get<double>();
        if (!e.at("asd").is_null()) m.asd = e.at("asd").get<double>();
        if (!e.at("hd95").is_null()) m.hd95 = e.at("hd95").get<double>();
        r.per_image.push_back(std::move(m));
    }
    r.aggregate.dice = j.at("aggregate").at("dice").get<double>();
    r.aggregate.iou = j.at("aggregate").at("iou").get<double>();
    r.aggregate.asd = j.at("aggregate").at("asd").get<double>();
    r.aggregate.hd95 = j.at("aggregate").at("hd95").get<double>();
    r.distance_excluded = j.at("distance_excluded").get<int>();
    return r;
}

MetricReport evaluate(UniversalNet& model, const std::vector<data::ImageSample>& samples,
                      Domain domain, double threshold, double spacing) {
    MetricReport report;
    report.spacing = spacing;
    report.threshold = threshold;

    const int h = model.config().input_h, w = model.config().input_w;
    for (const auto& s : samples) {
        if (s.image.dim(1) != h || s.image.dim(2) != w)
            throw std::invalid_argument("evaluate: sample " + s.id +
                                        " does not match the model input size");
        Tensor batch({1, 3, h, w});
        std::copy_n(s.image.data(), s.image.numel(), batch.data());

        nn::Graph g(false);
        const auto out = model.forward(g, batch, domain);
        const Mask pred = binarize(out.prediction->value, threshold);

        PerImageMetrics m;
        m.id = s.id;
        m.dice = dice_score(pred, s.mask);
        m.iou = iou_score(pred, s.mask);
        if (pred.foreground_count() > 0 && s.mask.foreground_count() > 0) {
            m.asd = asd(pred, s.mask, spacing);
            m.hd95 = hd95(pred, s.mask, spacing);
        } else if (pred.foreground_count() == 0 && s.mask.foreground_count() == 0) {
            // both empty: perfect overlap, distances undefined
        }
        report.per_image.push_back(std::move(m));
    }
    report.finalize();
    return report;
}

} // namespace cots::metrics
