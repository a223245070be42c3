#ifndef COTSNET_RUN_CONFIG_HPP
#define COTSNET_RUN_CONFIG_HPP

#include <string>
#include <vector>

#include "cotsnet/data.hpp"
#include "cotsnet/trainer.hpp"

namespace cots::config {

struct RunConfig {
    TrainConfig train;
    data::DatasetSpec source;
    data::DatasetSpec target;
    std::string output_dir = "run_output";
    double eval_threshold = 0.5;
    double eval_spacing = 1.0;
};

// Parses the JSON run configuration. Unknown keys are rejected; relative
// paths resolve against the config file's directory. Overrides are
// KEY=VALUE pairs where KEY is a dotted path (train.epochs=1) or a unique
// bare field name (epochs=1); VALUE is parsed as JSON when possible.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

// Parses config text without path resolution (paths stay as written).
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides);

std::string print_schema();

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

} // namespace cots::config

#endif
