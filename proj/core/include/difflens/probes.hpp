#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "difflens/bundle.hpp"
#include "difflens/knn.hpp"
#include "difflens/pca.hpp"

namespace difflens {

struct ProbeOptions {
    knn::Mode mode = knn::Mode::approximate;
    knn::ForestParams forest;
    std::size_t pca_max_dims = 128;  // compress a probe space when cols exceed this
    bool zscore = false;             // standardize with training mean/std before anything else
    std::optional<std::filesystem::path> cache_dir;

    friend bool operator==(const ProbeOptions&, const ProbeOptions&) = default;
};

// One k-NN classifier probe: preprocessing fitted on the training split plus
// an index over the preprocessed training rows.
class ProbeSpace {
public:
    ProbeSpace(std::size_t probe, std::optional<std::pair<std::vector<double>, std::vector<double>>> zscore,
               std::optional<pca::PcaModel> pca, knn::ProbeIndex index)
        : probe_(probe), zscore_(std::move(zscore)), pca_(std::move(pca)), index_(std::move(index)) {}

    std::size_t probe() const noexcept { return probe_; }
    const knn::ProbeIndex& index() const noexcept { return index_; }
    const std::optional<pca::PcaModel>& pca() const noexcept { return pca_; }
    bool standardized() const noexcept { return zscore_.has_value(); }

    // Maps a raw embedding row into the indexed space.
    std::vector<float> prepare(std::span<const float> raw) const;

private:
    std::size_t probe_;
    std::optional<std::pair<std::vector<double>, std::vector<double>>> zscore_;  // (mean, std)
    std::optional<pca::PcaModel> pca_;
    knn::ProbeIndex index_;
};

class ProbeSet {
public:
    // Builds input + every layer probe; layers are built in parallel.
    static ProbeSet build(const BundlePtr& bundle, const ProbeOptions& options);

    const ProbeSpace& space(std::size_t probe) const { return spaces_.at(probe); }
    std::size_t size() const noexcept { return spaces_.size(); }
    const ProbeOptions& options() const noexcept { return options_; }

    // Neighbors of a profiled instance at one probe (leave-one-out for train).
    std::vector<knn::Neighbor> neighbors(const Bundle& bundle, InstanceRef ref, std::size_t probe, std::size_t k) const;

private:
    std::vector<ProbeSpace> spaces_;
    ProbeOptions options_;
};

}  // namespace difflens
