#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difflens/matrix.hpp"

namespace difflens {

enum class Split { train, test };

std::string_view to_string(Split split);

struct InstanceRef {
    Split split = Split::test;
    std::size_t index = 0;

    friend auto operator<=>(const InstanceRef&, const InstanceRef&) = default;
};

// "train/<index>" / "test/<index>"
std::string instance_id(InstanceRef ref);
std::optional<InstanceRef> parse_instance_id(std::string_view id);

// Probe 0 is pixel space ("input"), probe j >= 1 is hidden layer j-1.
inline constexpr std::string_view kInputSentinel = "input";

struct FileEntry {
    std::string path;  // relative to bundle root
    std::uint32_t crc32 = 0;

    friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

struct Manifest {
    std::string dataset_name;
    std::vector<std::string> class_names;
    std::vector<std::string> layer_names;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    bool has_annotations = false;
    std::map<std::string, FileEntry> files;

    std::size_t num_classes() const noexcept { return class_names.size(); }
    std::size_t num_layers() const noexcept { return layer_names.size(); }
    std::size_t num_probes() const noexcept { return layer_names.size() + 1; }
    std::size_t split_size(Split s) const noexcept { return s == Split::train ? n_train : n_test; }

    std::string probe_name(std::size_t probe) const;
    // Probe index for "input" or a layer name.
    std::optional<std::size_t> probe_index(std::string_view name) const;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Logical file names used in Manifest::files.
std::string matrix_key(Split split, std::string_view probe_name);
inline constexpr std::string_view kLabelsKey = "labels";
inline constexpr std::string_view kPredictionsKey = "predictions";
inline constexpr std::string_view kAnnotationsKey = "annotations";
inline constexpr std::string_view kImagesKey = "images";

// Plain, mutable bundle contents. Used to write bundles and by tests.
struct BundleData {
    std::string dataset_name;
    std::vector<std::string> class_names;
    std::vector<std::string> layer_names;
    // [probe] -> matrix, probe 0 is input
    std::vector<Matrix> train_embeddings;
    std::vector<Matrix> test_embeddings;
    std::vector<std::uint32_t> train_labels;
    std::vector<std::uint32_t> test_labels;
    std::vector<std::uint32_t> test_predictions;
    // Optional final predictions for training rows (needed only when the
    // training split is profiled). Empty or one entry per train row.
    std::vector<std::optional<std::uint32_t>> train_predictions;
    bool has_annotations = false;
    // [test index] -> (annotator id, label)
    std::vector<std::vector<std::pair<std::string, std::uint32_t>>> annotations;
    // instance id -> relative path
    std::map<std::string, std::string> images;
    // extra files to copy verbatim (relative path -> bytes), e.g. thumbnails
    std::map<std::string, std::vector<std::uint8_t>> extra_files;
};

enum class ViolationKind {
    io,
    missing_file,
    checksum_mismatch,
    malformed,
    dimension_mismatch,
    non_finite,
    class_out_of_range,
    dangling_reference,
    duplicate,
    missing_entry,
    path_escape,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string file;      // logical name and/or relative path
    std::string location;  // "byte <n>", "line <n>", "row r, col c"; may be empty
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

// Immutable, loaded bundle. Shared across threads read-only.
class Bundle {
public:
    const Manifest& manifest() const noexcept { return manifest_; }
    const std::filesystem::path& root() const noexcept { return root_; }
    // CRC-32 of the canonical manifest; changes whenever any file changes.
    std::uint32_t checksum() const noexcept { return checksum_; }

    const Matrix& embeddings(Split split, std::size_t probe) const;
    std::span<const std::uint32_t> labels(Split split) const;
    std::uint32_t label(InstanceRef ref) const { return labels(ref.split)[ref.index]; }
    std::optional<std::uint32_t> prediction(InstanceRef ref) const;
    // Annotation labels of a test instance; empty when none.
    std::span<const std::uint32_t> annotations(std::size_t test_index) const;
    std::optional<std::string> image(InstanceRef ref) const;

    const BundleData& data() const noexcept { return data_; }

    // Validates in-memory contents with the same rules as load_bundle.
    static std::shared_ptr<const Bundle> from_data(BundleData data, std::filesystem::path root = {});

private:
    friend class BundleLoader;
    Bundle() = default;

    Manifest manifest_;
    std::filesystem::path root_;
    std::uint32_t checksum_ = 0;
    BundleData data_;
    std::vector<std::vector<std::uint32_t>> annotation_labels_;
};

using BundlePtr = std::shared_ptr<const Bundle>;

// Validates and loads; throws Error(validation) with the first violation
// (file and offset in `where`), Error(io) if the directory is unreadable.
BundlePtr load_bundle(const std::filesystem::path& dir);

// Never throws on content errors; only on I/O failure of the directory itself.
ValidationReport validate_bundle(const std::filesystem::path& dir);

// Writes all files plus manifest.json; returns the manifest written.
Manifest write_bundle(const std::filesystem::path& dir, const BundleData& data);

std::string manifest_to_json(const Manifest& manifest);

}  // namespace difflens
