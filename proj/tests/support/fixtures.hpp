#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "difflens/bundle.hpp"
#include "difflens/difficulty.hpp"

namespace testing {

std::filesystem::path source_dir();

class TempDir {
public:
    explicit TempDir(const std::string& tag = "t");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

struct RandomBundleShape {
    std::size_t n_train = 200;
    std::size_t n_test = 60;
    std::size_t dim = 8;
    std::size_t classes = 4;
    std::size_t layers = 2;
    bool annotations = true;
    bool train_predictions = false;
    double spread = 1.5;  // cluster-center std-dev; small values mix classes
};

// Gaussian-mixture embeddings with random (noisy) predictions.
difflens::BundleData random_bundle_data(std::mt19937_64& rng, const RandomBundleShape& shape);

difflens::DifficultyConfig exact_config(std::size_t k = 10);

// Profile table built directly from per-instance traces, bypassing k-NN.
// kDN columns are filled from `kdn` when given, else zero.
struct TraceSpec {
    std::uint32_t label = 0;
    std::vector<std::uint32_t> trace;
    std::uint32_t final_prediction = 0;
};
difflens::ProfileTable table_from_traces(const std::vector<TraceSpec>& specs);

// Random trace over `classes` with `probes` entries; biased toward
// stabilizing so every depth shows up.
TraceSpec random_trace(std::mt19937_64& rng, std::size_t classes, std::size_t probes);

}  // namespace testing
