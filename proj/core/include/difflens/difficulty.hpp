#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "difflens/bundle.hpp"
#include "difflens/knn.hpp"
#include "difflens/probes.hpp"

namespace difflens {

// Instance-difficulty taxonomy codes (human, data, model, correct).
enum class Pattern { p1a, p1b, p2a, p2b, p3a, p3b, p4a, p4b, p5a, p5b, p6, unclassified };

inline constexpr std::array<Pattern, 11> kTaxonomyCodes = {Pattern::p1a, Pattern::p1b, Pattern::p2a, Pattern::p2b,
                                                           Pattern::p3a, Pattern::p3b, Pattern::p4a, Pattern::p4b,
                                                           Pattern::p5a, Pattern::p5b, Pattern::p6};

std::string_view to_string(Pattern p);
std::optional<Pattern> parse_pattern(std::string_view code);

enum class ReferenceLabel { ground_truth, final_prediction };
enum class ThresholdMode { fixed, quantile };

std::string_view to_string(ReferenceLabel r);
std::string_view to_string(ThresholdMode m);

struct Thresholds {
    double data = 0.5;
    double model = 0.5;
    double human = 0.5;

    friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct DifficultyConfig {
    std::size_t k = knn::kDefaultK;
    ReferenceLabel data_reference = ReferenceLabel::ground_truth;
    ReferenceLabel layer_reference = ReferenceLabel::final_prediction;
    ThresholdMode threshold_mode = ThresholdMode::fixed;
    Thresholds fixed;
    double quantile = 0.7;
    bool profile_train = false;
    ProbeOptions probes;

    friend bool operator==(const DifficultyConfig&, const DifficultyConfig&) = default;
};

// Throws Error(invalid_argument) with a field path in where().
void validate_config(const DifficultyConfig& config);
nlohmann::json config_to_json(const DifficultyConfig& config);
// Missing keys keep defaults; unknown keys and bad values are rejected.
DifficultyConfig config_from_json(const nlohmann::json& j);
// Stable hash of the canonical JSON form.
std::uint32_t config_hash(const DifficultyConfig& config);

struct ProbeTrace {
    InstanceRef ref;
    std::vector<std::uint32_t> predictions;  // input probe, then each hidden layer
    std::uint32_t final_prediction = 0;
};

struct DepthResult {
    std::size_t depth = 0;
    bool never_aligned = false;

    friend bool operator==(const DepthResult&, const DepthResult&) = default;
};

struct DifficultyProfile {
    InstanceRef ref;
    std::uint32_t label = 0;
    std::uint32_t predicted = 0;
    double data_kdn = 0.0;
    std::vector<double> layer_kdn;  // one per probe
    std::size_t prediction_depth = 0;
    double model_difficulty = 0.0;
    std::optional<double> human_difficulty;
    bool correct = false;
    bool never_aligned = false;
    Pattern pattern = Pattern::unclassified;
};

// Low/high cut points actually applied; a value is high iff it exceeds its cut.
struct ResolvedThresholds {
    double data = 0.5;
    double model = 0.5;
    double human = 0.5;
};

struct ProfileTable {
    std::vector<DifficultyProfile> profiles;
    std::vector<ProbeTrace> traces;  // parallel to profiles
    ResolvedThresholds thresholds;
    std::size_t num_probes = 0;
    std::size_t k = 0;

    // Row of an instance, if profiled.
    std::optional<std::size_t> find(InstanceRef ref) const;
};

// Fraction of neighbor labels that differ from `reference_label`.
double kdn_score(std::span<const knn::Neighbor> neighbors, std::uint32_t reference_label);

// Earliest probe index from which every probe agrees with the final
// prediction. When no probe agrees: depth = last index, never_aligned set.
// Throws Error(invalid_argument) on an empty trace.
DepthResult prediction_depth(std::span<const std::uint32_t> trace, std::uint32_t final_prediction);

// Fraction of annotations differing from the ground truth; nullopt when there are none.
std::optional<double> human_difficulty(std::span<const std::uint32_t> annotations, std::uint32_t ground_truth);

struct Levels {
    std::optional<bool> human_high;  // nullopt: no annotations
    bool data_high = false;
    bool model_high = false;
};

Pattern assign_pattern(const Levels& levels, bool correct);

// Resolves the cut points for the configured mode. Quantile mode takes the
// q-quantile (linear interpolation) of each perspective over `profiles`.
ResolvedThresholds resolve_thresholds(const DifficultyConfig& config, std::span<const DifficultyProfile> profiles);

Levels levels_of(const DifficultyProfile& p, const ResolvedThresholds& t);

// Profiles every test instance (and training instances when configured).
// Instances are processed in parallel; output order is test then train.
ProfileTable compute_profiles(const Bundle& bundle, const ProbeSet& probes, const DifficultyConfig& config);

double quantile(std::vector<double> values, double q);

// instance_id,data_kdn,kdn_L0..kdn_L<n>,pd,model_difficulty,human_difficulty,correct,pattern,never_aligned
std::string profiles_csv(const ProfileTable& table);

}  // namespace difflens
