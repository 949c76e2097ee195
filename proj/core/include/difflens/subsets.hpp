#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difflens/bundle.hpp"
#include "difflens/difficulty.hpp"
#include "difflens/projection.hpp"

namespace difflens {

using Members = std::vector<InstanceRef>;  // sorted, deduplicated

enum class SetOp { union_, intersection, difference };

std::string_view to_string(SetOp op);
std::optional<SetOp> parse_set_op(std::string_view s);

struct Subset {
    std::string id;
    std::string name;
    Members members;
    nlohmann::json provenance;  // {"select": descriptor} or {"op", "left", "right"}
    std::string created_at;     // UTC, ISO-8601
    std::uint32_t bundle_checksum = 0;

    friend bool operator==(const Subset&, const Subset&) = default;
};

Members normalize(Members m);
Members apply(SetOp op, const Members& a, const Members& b);
Members complement(const Members& a, const Members& universe);

// Everything a selection descriptor can refer to.
struct SelectionContext {
    const Bundle& bundle;
    const ProfileTable& profiles;
    std::size_t bins = 10;
    // Cached projection lookup; when empty, projections are computed on demand.
    std::function<const Projection2D&(const ProjectionSource&)> projection;
};

// Descriptor kinds: all, ids, brush, heatmap, confusion, projection_rect,
// lasso, flow, patterns. Throws Error(invalid_argument) naming the offending
// field for unknown kinds, axes, cells or sources.
Members evaluate_selection(const nlohmann::json& descriptor, const SelectionContext& ctx);

// Re-evaluates a provenance tree.
Members replay(const nlohmann::json& provenance, const SelectionContext& ctx);

Members universe(const ProfileTable& profiles);

nlohmann::json subset_to_json(const Subset& s);
Subset subset_from_json(const nlohmann::json& j);

// Plain id list, one per line, header "instance_id".
std::string subset_csv(const Subset& s);
Members members_from_csv(std::string_view text);

std::string utc_timestamp();

// Thread-safe collection of subsets for one bundle: mutations go through a
// single writer lock, reads return copies.
class SubsetStore {
public:
    using Clock = std::function<std::string()>;

    explicit SubsetStore(std::uint32_t bundle_checksum, Clock clock = utc_timestamp);

    Subset create(std::string name, Members members, nlohmann::json provenance);
    Subset combine(std::string_view a, std::string_view b, SetOp op, std::string name);
    std::optional<Subset> get(std::string_view id) const;
    std::vector<Subset> list() const;
    bool remove(std::string_view id);

    std::uint32_t bundle_checksum() const noexcept { return bundle_checksum_; }
    std::uint64_t revision() const;

    std::string to_json_text() const;

    // Writes atomically. Concurrent saves to the same path are serialized;
    // the revision written is one past the larger of this store's revision
    // and the one already on disk, so revisions on disk only grow.
    std::uint64_t save(const std::filesystem::path& path);

    struct Loaded;
    // Throws Error(conflict) on a format version mismatch.
    static Loaded load(const std::filesystem::path& path, std::uint32_t current_checksum, Clock clock = utc_timestamp);
    static Loaded from_json_text(std::string_view text, std::uint32_t current_checksum, Clock clock = utc_timestamp);

private:
    mutable std::shared_mutex mutex_;
    std::uint32_t bundle_checksum_;
    Clock clock_;
    std::uint64_t revision_ = 0;
    std::uint64_t next_id_ = 1;
    std::map<std::string, Subset> subsets_;
    std::vector<std::string> order_;
};

struct SubsetStore::Loaded {
    std::unique_ptr<SubsetStore> store;
    std::vector<std::string> warnings;  // e.g. stale provenance after a bundle change
};

inline constexpr std::uint32_t kSubsetFormatVersion = 1;

}  // namespace difflens
