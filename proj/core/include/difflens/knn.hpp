#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflens/matrix.hpp"

namespace difflens::knn {

enum class Mode { exact, approximate };

std::string_view to_string(Mode mode);

inline constexpr std::size_t kDefaultK = 10;

struct ForestParams {
    std::size_t trees = 16;      // T
    std::size_t leaf_size = 32;  // M
    std::uint64_t seed = 1;

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct Neighbor {
    std::size_t row = 0;
    double distance = 0.0;  // Euclidean
    std::uint32_t label = 0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct NeighborSet {
    std::string query_id;
    std::size_t probe = 0;
    std::size_t k = 0;
    std::vector<Neighbor> neighbors;  // length k, distances nondecreasing
};

// Nearest-neighbor index over one probe space's training matrix.
// Immutable once built; concurrent queries are safe.
class ProbeIndex {
public:
    // `train` and `labels` are shared, not copied.
    static ProbeIndex build(std::shared_ptr<const Matrix> train, std::shared_ptr<const std::vector<std::uint32_t>> labels,
                            std::size_t probe, Mode mode, const ForestParams& params = {});

    // Returns exactly k neighbors ordered by (distance, row). `exclude_row`
    // drops one training row (leave-one-out for training-split queries).
    // Throws Error(invalid_argument) on dimension mismatch or k out of range.
    std::vector<Neighbor> query(std::span<const float> vector, std::size_t k,
                                std::optional<std::size_t> exclude_row = std::nullopt) const;

    NeighborSet query_set(std::span<const float> vector, std::size_t k, std::string query_id,
                          std::optional<std::size_t> exclude_row = std::nullopt) const;

    std::size_t probe() const noexcept { return probe_; }
    Mode mode() const noexcept { return mode_; }
    const ForestParams& params() const noexcept { return params_; }
    std::size_t rows() const noexcept { return train_->rows(); }
    std::size_t cols() const noexcept { return train_->cols(); }
    const Matrix& train() const noexcept { return *train_; }
    std::span<const std::uint32_t> labels() const noexcept { return *labels_; }

    // Leaf visits allowed per approximate query.
    std::size_t search_budget(std::size_t k) const noexcept;

    // Forest cache (approximate mode only). `tag` identifies the source data
    // (bundle checksum combined with preprocessing); load returns nullopt
    // when the file is absent, stale, or does not match.
    void save_cache(const std::filesystem::path& path, std::uint32_t tag) const;
    static std::optional<ProbeIndex> load_cache(const std::filesystem::path& path, std::uint32_t tag,
                                                std::shared_ptr<const Matrix> train,
                                                std::shared_ptr<const std::vector<std::uint32_t>> labels,
                                                std::size_t probe, const ForestParams& params);

    bool same_structure(const ProbeIndex& other) const;

private:
    struct Node {
        std::uint32_t left = 0;
        std::uint32_t right = 0;
        std::uint32_t item_begin = 0;  // leaves only
        std::uint32_t item_end = 0;
        std::uint32_t plane = 0;  // index into planes_ (cols floats each); internal only
        double bias = 0.0;
        bool leaf = false;

        friend bool operator==(const Node&, const Node&) = default;
    };

    ProbeIndex() = default;

    std::vector<Neighbor> exact_query(std::span<const float> v, std::size_t k, std::optional<std::size_t> exclude) const;
    std::vector<Neighbor> approx_query(std::span<const float> v, std::size_t k, std::optional<std::size_t> exclude) const;
    double margin(const Node& node, std::span<const float> v) const;

    std::shared_ptr<const Matrix> train_;
    std::shared_ptr<const std::vector<std::uint32_t>> labels_;
    std::size_t probe_ = 0;
    Mode mode_ = Mode::exact;
    ForestParams params_;

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> roots_;
    std::vector<std::uint32_t> items_;
    std::vector<float> planes_;
};

double squared_distance(std::span<const float> a, std::span<const float> b);

// Plurality label; ties go to the smallest class index.
std::uint32_t plurality_label(std::span<const Neighbor> neighbors);

std::uint32_t knn_predict(const ProbeIndex& index, std::span<const float> vector, std::size_t k);

// Mean over query rows of |approx ∩ exact| / k, membership by row id.
double recall_eval(const ProbeIndex& exact, const ProbeIndex& approx, const Matrix& queries, std::size_t k);

}  // namespace difflens::knn
