#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "difflens/bundle.hpp"
#include "difflens/difficulty.hpp"
#include "difflens/flow.hpp"
#include "difflens/probes.hpp"
#include "difflens/projection.hpp"
#include "difflens/subsets.hpp"

namespace difflens {

// Transport-independent request/response. The HTTP server is a thin adapter.
struct ApiRequest {
    std::string method = "GET";
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::map<std::string, std::string> headers;
};

struct ApiOptions {
    // Where POST /api/subsets {"action": "save"} writes; loaded at startup if present.
    std::optional<std::filesystem::path> subsets_path;
    std::optional<std::filesystem::path> cache_dir;
    std::string cors_origin = "*";
};

enum class ComputeState { idle, running, ready, failed };
std::string_view to_string(ComputeState s);

// Everything derived from one compute run. Immutable once published, apart
// from lazily filled caches that are themselves deterministic.
class Snapshot {
public:
    Snapshot(BundlePtr bundle, DifficultyConfig config, std::shared_ptr<const ProbeSet> probes, ProfileTable table);

    const Bundle& bundle() const noexcept { return *bundle_; }
    const DifficultyConfig& config() const noexcept { return config_; }
    std::uint32_t config_hash() const noexcept { return hash_; }
    const ProbeSet& probes() const noexcept { return *probes_; }
    const ProfileTable& table() const noexcept { return table_; }

    const Projection2D& projection(const ProjectionSource& source) const;
    // Distance to the k-th neighbor of every profile row at a probe.
    const std::vector<double>& kth_distances(std::size_t probe, std::size_t k) const;

private:
    BundlePtr bundle_;
    DifficultyConfig config_;
    std::uint32_t hash_;
    std::shared_ptr<const ProbeSet> probes_;
    ProfileTable table_;

    mutable std::mutex cache_mutex_;
    mutable std::map<std::pair<int, std::size_t>, std::unique_ptr<Projection2D>> projections_;
    mutable std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<std::vector<double>>> kth_;
};

// Single-bundle session behind the JSON API.
//
// GET endpoints are pure functions of (revision, query): the revision is
// bumped whenever a compute publishes a different result or the subset store
// changes, and is echoed in the X-Difflens-Revision header.
class ApiService {
public:
    ApiService(BundlePtr bundle, ApiOptions options = {});
    ~ApiService();

    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    ApiResponse handle(const ApiRequest& request);

    // Starts (or reuses) a compute; blocks until done when `wait` is set.
    // Returns true if the result was already cached.
    bool compute(const DifficultyConfig& config, bool wait);
    void wait_idle();

    std::uint64_t revision() const;
    ComputeState state() const;
    std::shared_ptr<const Snapshot> snapshot() const;
    SubsetStore& subsets() { return *store_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    const Bundle& bundle() const noexcept { return *bundle_; }

private:
    ApiResponse dispatch(const ApiRequest& request);

    nlohmann::json get_status() const;
    nlohmann::json get_summary(const ApiRequest& r) const;
    nlohmann::json get_confusion(const ApiRequest& r) const;
    nlohmann::json get_flow(const ApiRequest& r) const;
    nlohmann::json get_pcp(const ApiRequest& r) const;
    nlohmann::json get_projection(const ApiRequest& r) const;
    nlohmann::json get_patterns(const ApiRequest& r) const;
    nlohmann::json get_instances(const ApiRequest& r) const;
    nlohmann::json get_neighbors(const ApiRequest& r) const;
    nlohmann::json get_subsets() const;
    nlohmann::json get_subset(std::string_view id) const;
    ApiResponse post_compute(const ApiRequest& r);
    ApiResponse post_subsets(const ApiRequest& r);

    std::shared_ptr<const Snapshot> require_snapshot() const;
    std::vector<std::size_t> subset_rows(const Snapshot& snap, const ApiRequest& r) const;
    void run_compute(DifficultyConfig config, std::uint32_t hash);
    void publish(std::shared_ptr<const Snapshot> snap);

    BundlePtr bundle_;
    ApiOptions options_;
    std::unique_ptr<SubsetStore> store_;
    std::vector<std::string> warnings_;

    mutable std::mutex state_mutex_;
    std::condition_variable idle_cv_;
    ComputeState state_ = ComputeState::idle;
    std::string phase_;
    std::optional<std::string> error_;
    std::optional<std::uint32_t> pending_hash_;
    std::shared_ptr<const Snapshot> current_;
    std::map<std::uint32_t, std::shared_ptr<const Snapshot>> computed_;
    std::vector<std::pair<ProbeOptions, std::shared_ptr<const ProbeSet>>> probe_cache_;
    std::atomic<std::uint64_t> revision_{0};

    std::mutex write_mutex_;  // serializes compute runs and subset mutations
    std::jthread worker_;
};

}  // namespace difflens
