#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difflens/bundle.hpp"

namespace difflens::synth {

// Generator parameters. Every class gets an isotropic Gaussian cluster per
// probe space; planted test instances deviate from their class cluster in
// controlled ways so their difficulty is known in advance.
struct SynthSpec {
    std::string dataset_name = "synthetic";
    std::size_t classes = 10;
    std::vector<std::string> layer_names = {"layer_1", "layer_2", "layer_3"};
    std::size_t input_dim = 32;
    std::vector<std::size_t> layer_dims = {64, 32, 16};
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    double separation = 4.0;  // std-dev of cluster-center coordinates
    double noise = 1.0;       // std-dev of per-instance offsets

    // Overlap with a decoy class before probe `late_separate_probe`, own
    // cluster from that probe on; predicted correctly.
    std::size_t late_separators = 0;
    std::size_t late_separate_probe = 0;  // 0 means "last probe" (L)
    double overlap_weight = 0.75;         // weight of the decoy center while overlapping

    // Sit in another class's cluster at every probe but carry this label;
    // the model predicts the cluster's class.
    std::size_t mislabeled = 0;

    // Own class in pixel space, another class from the first hidden layer
    // on; the model predicts that other class.
    std::size_t spurious = 0;

    // Clean embeddings, but annotators disagree often.
    std::size_t ambiguous = 0;

    bool has_annotations = true;
    std::size_t annotators = 11;
    double annotator_noise = 0.05;
    double ambiguous_agreement = 0.3;

    bool train_predictions = false;
    bool images = false;
    std::uint64_t seed = 7;
};

SynthSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SynthSpec& spec);

struct PlantedGroup {
    std::string role;
    std::vector<std::size_t> test_indices;
};

struct SynthResult {
    BundleData data;
    // Ground-truth expectations about planted instances.
    nlohmann::json expectations;
};

// Pure function of the spec (including seed). Throws Error(invalid_argument)
// for infeasible specs.
SynthResult generate(const SynthSpec& spec);

// Writes the bundle plus `expected.json` (the expectations sidecar).
SynthResult generate_to(const SynthSpec& spec, const std::filesystem::path& dir);

inline constexpr const char* kSidecarName = "expected.json";

}  // namespace difflens::synth
