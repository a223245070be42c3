#ifndef COTSNET_METRICS_HPP
#define COTSNET_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "cotsnet/data.hpp"
#include "cotsnet/geometry.hpp"
#include "cotsnet/model_universal.hpp"

namespace cots::metrics {

struct PerImageMetrics {
    std::string id;
    double dice = 0.0; // percent
    double iou = 0.0;  // percent
    std::optional<double> asd;  // pixels * spacing; absent when undefined
    std::optional<double> hd95; // pixels * spacing; absent when undefined
};

struct Aggregate {
    double dice = 0.0;
    double iou = 0.0;
    double asd = 0.0;
    double hd95 = 0.0;
};

struct MetricReport {
    double spacing = 1.0;
    double threshold = 0.5;
    std::vector<PerImageMetrics> per_image;
    Aggregate aggregate;
    int distance_excluded = 0; // images lacking a defined surface distance

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);

    void finalize(); // recompute aggregate means and the excluded count
};

// overlap metrics in percent; an empty-empty pair scores 100
double dice_score(const Mask& pred, const Mask& gt);
double iou_score(const Mask& pred, const Mask& gt);

// symmetric surface distances; both masks must have non-empty foreground
double asd(const Mask& pred, const Mask& gt, double spacing = 1.0);
double hd95(const Mask& pred, const Mask& gt, double spacing = 1.0);

// linear interpolation between order statistics; values must be sorted
double percentile_linear(const std::vector<double>& sorted_values, double q);

Mask binarize(const Tensor& probs, double threshold);

MetricReport evaluate(UniversalNet& model, const std::vector<data::ImageSample>& samples,
                      Domain domain, double threshold = 0.5, double spacing = 1.0);

} // namespace cots::metrics

#endif
