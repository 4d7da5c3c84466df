#ifndef LAPLAB_TOOLS_CONFIG_HPP
#define LAPLAB_TOOLS_CONFIG_HPP

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "laplab/attacks.hpp"
#include "laplab/data.hpp"
#include "laplab/diagnostics.hpp"
#include "laplab/network.hpp"
#include "laplab/perturb.hpp"
#include "laplab/trainer.hpp"

namespace laplab::cli {

using Json = nlohmann::ordered_json;

// Malformed or inconsistent configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string kind;  // bars-vs-checkers, gaussian-blobs, idx, csv
    SyntheticOptions synthetic;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::string train_csv, test_csv;                                   // csv
    std::size_t channels = 1;
    std::optional<std::size_t> classes;
};

struct ModelConfig {
    std::string kind;  // desk-cnn, mlp, layers
    std::vector<std::size_t> hidden;
    std::vector<LayerSpec> layers;
};

struct ProbeConfig {
    std::size_t examples = 200;
    LandscapeOptions landscape;
    PruneSpec prune{1, 2, PruneSelection::Largest, 0.15, 0};
    double bound_delta = 0.05;
    std::size_t bound_tries = 8;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    AttackConfig attack;
    PerturbMode perturb_mode = PerturbMode::None;
    double beta = 0.0;
    double gamma = 0.0;
    ProbeConfig probe;
    std::string out_dir = "runs";
    std::string run_name = "run";

    // Every field, defaults filled in; parses back to the same config.
    Json resolved() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// "a/b" or a number.
double parse_fraction(const std::string& s);

struct Splits {
    Dataset train;
    Dataset test;
};

Splits load_splits(const DatasetConfig& d);
NetSpec model_spec(const ModelConfig& m, const Dataset& sample);
Json netspec_json(const NetSpec& spec);

}  // namespace laplab::cli

#endif  // LAPLAB_TOOLS_CONFIG_HPP
