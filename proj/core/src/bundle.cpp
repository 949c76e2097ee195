#include "difflens/bundle.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "difflens/checksum.hpp"
#include "difflens/error.hpp"
#include "difflens/text.hpp"

namespace difflens {

using nlohmann::json;

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::string instance_id(InstanceRef ref) {
    return std::string(to_string(ref.split)) + "/" + std::to_string(ref.index);
}

std::optional<InstanceRef> parse_instance_id(std::string_view id) {
    const auto slash = id.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    const auto prefix = id.substr(0, slash);
    InstanceRef ref;
    if (prefix == "train") {
        ref.split = Split::train;
    } else if (prefix == "test") {
        ref.split = Split::test;
    } else {
        return std::nullopt;
    }
    const auto digits = id.substr(slash + 1);
    if (digits.empty() || (digits.size() > 1 && digits[0] == '0')) return std::nullopt;
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), ref.index);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) return std::nullopt;
    return ref;
}

std::string Manifest::probe_name(std::size_t probe) const {
    return probe == 0 ? std::string(kInputSentinel) : layer_names.at(probe - 1);
}

std::optional<std::size_t> Manifest::probe_index(std::string_view name) const {
    if (name == kInputSentinel) return 0;
    for (std::size_t i = 0; i < layer_names.size(); ++i) {
        if (layer_names[i] == name) return i + 1;
    }
    return std::nullopt;
}

std::string matrix_key(Split split, std::string_view probe_name) {
    return std::string(to_string(split)) + "/" + std::string(probe_name);
}

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::io: return "io";
        case ViolationKind::missing_file: return "missing_file";
        case ViolationKind::checksum_mismatch: return "checksum_mismatch";
        case ViolationKind::malformed: return "malformed";
        case ViolationKind::dimension_mismatch: return "dimension_mismatch";
        case ViolationKind::non_finite: return "non_finite";
        case ViolationKind::class_out_of_range: return "class_out_of_range";
        case ViolationKind::dangling_reference: return "dangling_reference";
        case ViolationKind::duplicate: return "duplicate";
        case ViolationKind::missing_entry: return "missing_entry";
        case ViolationKind::path_escape: return "path_escape";
    }
    return "unknown";
}

const Matrix& Bundle::embeddings(Split split, std::size_t probe) const {
    const auto& v = split == Split::train ? data_.train_embeddings : data_.test_embeddings;
    if (probe >= v.size()) throw Error(ErrorKind::not_found, "probe index out of range: " + std::to_string(probe));
    return v[probe];
}

std::span<const std::uint32_t> Bundle::labels(Split split) const {
    return split == Split::train ? data_.train_labels : data_.test_labels;
}

std::optional<std::uint32_t> Bundle::prediction(InstanceRef ref) const {
    if (ref.split == Split::test) return data_.test_predictions.at(ref.index);
    if (data_.train_predictions.empty()) return std::nullopt;
    return data_.train_predictions.at(ref.index);
}

std::span<const std::uint32_t> Bundle::annotations(std::size_t test_index) const {
    if (annotation_labels_.empty()) return {};
    return annotation_labels_.at(test_index);
}

std::optional<std::string> Bundle::image(InstanceRef ref) const {
    auto it = data_.images.find(instance_id(ref));
    if (it == data_.images.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string matrix_path(Split split, std::size_t probe) {
    return "embeddings/" + std::string(to_string(split)) + "_" + std::to_string(probe) + ".emb1";
}

json manifest_json(const Manifest& m) {
    json files = json::object();
    for (const auto& [name, entry] : m.files) files[name] = {{"path", entry.path}, {"crc32", entry.crc32}};
    return json{{"dataset_name", m.dataset_name}, {"class_names", m.class_names}, {"layers", m.layer_names},
                {"n_train", m.n_train},           {"n_test", m.n_test},           {"has_annotations", m.has_annotations},
                {"files", files}};
}

std::vector<std::uint8_t> to_bytes(const std::string& s) { return {s.begin(), s.end()}; }

struct EncodedBundle {
    Manifest manifest;
    std::map<std::string, std::vector<std::uint8_t>> files;  // relative path -> bytes
};

EncodedBundle encode_bundle(const BundleData& d) {
    EncodedBundle out;
    Manifest& m = out.manifest;
    m.dataset_name = d.dataset_name;
    m.class_names = d.class_names;
    m.layer_names = d.layer_names;
    m.n_train = d.train_labels.size();
    m.n_test = d.test_labels.size();
    m.has_annotations = d.has_annotations;

    auto add = [&](std::string key, std::string path, std::vector<std::uint8_t> bytes) {
        m.files[std::move(key)] = FileEntry{path, crc32(bytes)};
        out.files[std::move(path)] = std::move(bytes);
    };

    for (std::size_t p = 0; p < d.train_embeddings.size(); ++p) {
        const std::string name = p == 0 ? std::string(kInputSentinel) : d.layer_names.at(p - 1);
        add(matrix_key(Split::train, name), matrix_path(Split::train, p), encode_emb1(d.train_embeddings[p]));
    }
    for (std::size_t p = 0; p < d.test_embeddings.size(); ++p) {
        const std::string name = p == 0 ? std::string(kInputSentinel) : d.layer_names.at(p - 1);
        add(matrix_key(Split::test, name), matrix_path(Split::test, p), encode_emb1(d.test_embeddings[p]));
    }

    std::string labels = "instance_id,split,label\n";
    for (std::size_t i = 0; i < d.train_labels.size(); ++i) {
        labels += instance_id({Split::train, i}) + ",train," + std::to_string(d.train_labels[i]) + "\n";
    }
    for (std::size_t i = 0; i < d.test_labels.size(); ++i) {
        labels += instance_id({Split::test, i}) + ",test," + std::to_string(d.test_labels[i]) + "\n";
    }
    add(std::string(kLabelsKey), "labels.csv", to_bytes(labels));

    std::string preds = "instance_id,predicted_label\n";
    for (std::size_t i = 0; i < d.test_predictions.size(); ++i) {
        preds += instance_id({Split::test, i}) + "," + std::to_string(d.test_predictions[i]) + "\n";
    }
    for (std::size_t i = 0; i < d.train_predictions.size(); ++i) {
        if (d.train_predictions[i]) {
            preds += instance_id({Split::train, i}) + "," + std::to_string(*d.train_predictions[i]) + "\n";
        }
    }
    add(std::string(kPredictionsKey), "predictions.csv", to_bytes(preds));

    if (d.has_annotations) {
        std::string ann = "instance_id,annotator_id,label\n";
        for (std::size_t i = 0; i < d.annotations.size(); ++i) {
            for (const auto& [annotator, label] : d.annotations[i]) {
                ann += csv_line({instance_id({Split::test, i}), annotator, std::to_string(label)});
            }
        }
        add(std::string(kAnnotationsKey), "annotations.csv", to_bytes(ann));
    }

    if (!d.images.empty()) {
        std::string img = "instance_id,path\n";
        for (const auto& [id, path] : d.images) img += csv_line({id, path});
        add(std::string(kImagesKey), "images.csv", to_bytes(img));
    }
    for (const auto& [path, bytes] : d.extra_files) out.files[path] = bytes;
    return out;
}

// Resolves relative paths to bytes; nullopt when the file does not exist.
using FileSource = std::function<std::optional<std::vector<std::uint8_t>>(const std::string&)>;

bool escapes_root(const std::string& rel) {
    const std::filesystem::path p(rel);
    if (p.is_absolute() || p.has_root_name() || rel.empty()) return true;
    const auto norm = p.lexically_normal();
    return !norm.empty() && *norm.begin() == "..";
}

}  // namespace

class BundleLoader {
public:
    BundleLoader(FileSource source, std::filesystem::path root) : source_(std::move(source)), root_(std::move(root)) {}

    // Returns the bundle when no violation was found.
    std::shared_ptr<Bundle> run(ValidationReport& report, const std::optional<std::vector<std::uint8_t>>& manifest_bytes);

private:
    void add(ViolationKind kind, std::string file, std::string location, std::string message) {
        report_->violations.push_back({kind, std::move(file), std::move(location), std::move(message)});
    }

    std::optional<std::vector<std::uint8_t>> fetch(const std::string& key, bool required);
    bool parse_manifest(const std::vector<std::uint8_t>& bytes);
    void load_matrices();
    void load_labels();
    void load_predictions();
    void load_annotations();
    void load_images();
    std::optional<CsvTable> fetch_csv(const std::string& key, std::initializer_list<std::string_view> columns,
                                      bool required);
    std::optional<std::uint32_t> parse_label(const std::string& file, std::size_t line, const std::string& text);

    FileSource source_;
    std::filesystem::path root_;
    ValidationReport* report_ = nullptr;
    std::shared_ptr<Bundle> bundle_;
    Manifest m_;
    BundleData d_;
};

std::optional<std::vector<std::uint8_t>> BundleLoader::fetch(const std::string& key, bool required) {
    auto it = m_.files.find(key);
    if (it == m_.files.end()) {
        if (required) add(ViolationKind::missing_entry, key, "", "manifest has no file entry for '" + key + "'");
        return std::nullopt;
    }
    const auto& entry = it->second;
    const std::string label = key + " (" + entry.path + ")";
    if (escapes_root(entry.path)) {
        add(ViolationKind::path_escape, label, "", "path resolves outside the bundle directory");
        return std::nullopt;
    }
    auto bytes = source_(entry.path);
    if (!bytes) {
        add(ViolationKind::missing_file, label, "", "file not found");
        return std::nullopt;
    }
    const auto crc = crc32(*bytes);
    if (crc != entry.crc32) {
        add(ViolationKind::checksum_mismatch, label, "",
            "crc32 " + std::to_string(crc) + " does not match manifest " + std::to_string(entry.crc32));
    }
    return bytes;
}

bool BundleLoader::parse_manifest(const std::vector<std::uint8_t>& bytes) {
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        add(ViolationKind::malformed, "manifest.json", "byte " + std::to_string(e.byte), e.what());
        return false;
    }
    const std::size_t before = report_->violations.size();
    auto need = [&](const char* key, json::value_t type) -> const json* {
        auto it = j.find(key);
        if (it == j.end()) {
            add(ViolationKind::malformed, "manifest.json", key, std::string("missing key '") + key + "'");
            return nullptr;
        }
        const bool ok = it->type() == type ||
                        (type == json::value_t::number_unsigned && it->type() == json::value_t::number_integer &&
                         it->get<long long>() >= 0);
        if (!ok) {
            add(ViolationKind::malformed, "manifest.json", key, std::string("wrong type for '") + key + "'");
            return nullptr;
        }
        return &*it;
    };
    if (!j.is_object()) {
        add(ViolationKind::malformed, "manifest.json", "", "manifest must be a JSON object");
        return false;
    }
    if (auto v = need("dataset_name", json::value_t::string)) m_.dataset_name = v->get<std::string>();
    auto string_list = [&](const char* key, std::vector<std::string>& out) {
        if (auto v = need(key, json::value_t::array)) {
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_string()) {
                    add(ViolationKind::malformed, "manifest.json", std::string(key) + "[" + std::to_string(i) + "]",
                        "expected string");
                    continue;
                }
                out.push_back((*v)[i].get<std::string>());
            }
        }
    };
    string_list("class_names", m_.class_names);
    string_list("layers", m_.layer_names);
    if (auto v = need("n_train", json::value_t::number_unsigned)) m_.n_train = v->get<std::size_t>();
    if (auto v = need("n_test", json::value_t::number_unsigned)) m_.n_test = v->get<std::size_t>();
    if (auto v = need("has_annotations", json::value_t::boolean)) m_.has_annotations = v->get<bool>();
    if (auto v = need("files", json::value_t::object)) {
        for (const auto& [name, entry] : v->items()) {
            if (!entry.is_object() || !entry.contains("path") || !entry["path"].is_string() ||
                !entry.contains("crc32") || !entry["crc32"].is_number_unsigned() ||
                entry["crc32"].get<std::uint64_t>() > 0xffffffffull) {
                add(ViolationKind::malformed, "manifest.json", "files." + name, "expected {path: string, crc32: u32}");
                continue;
            }
            m_.files[name] = FileEntry{entry["path"].get<std::string>(), entry["crc32"].get<std::uint32_t>()};
        }
    }
    if (report_->violations.size() != before) return false;

    if (m_.class_names.size() < 2) add(ViolationKind::malformed, "manifest.json", "class_names", "need at least 2 classes");
    if (m_.layer_names.empty()) add(ViolationKind::malformed, "manifest.json", "layers", "need at least 1 layer");
    std::set<std::string> seen;
    for (const auto& name : m_.layer_names) {
        if (name == kInputSentinel) {
            add(ViolationKind::malformed, "manifest.json", "layers", "layer name 'input' is reserved");
        }
        if (!seen.insert(name).second) add(ViolationKind::duplicate, "manifest.json", "layers", "duplicate layer '" + name + "'");
    }
    return report_->violations.size() == before;
}

void BundleLoader::load_matrices() {
    const std::size_t probes = m_.num_probes();
    d_.train_embeddings.resize(probes);
    d_.test_embeddings.resize(probes);
    for (std::size_t p = 0; p < probes; ++p) {
        std::optional<std::size_t> cols[2];
        for (Split split : {Split::train, Split::test}) {
            const std::string key = matrix_key(split, m_.probe_name(p));
            auto bytes = fetch(key, true);
            if (!bytes) continue;
            const std::string label = key + " (" + m_.files[key].path + ")";
            std::vector<Emb1Issue> issues;
            auto mat = try_decode_emb1(*bytes, issues);
            for (const auto& issue : issues) {
                const bool cell = issue.row >= 0;
                add(cell ? ViolationKind::non_finite : ViolationKind::dimension_mismatch, label,
                    cell ? "row " + std::to_string(issue.row) + ", col " + std::to_string(issue.col) + " (byte " +
                               std::to_string(issue.offset) + ")"
                         : "byte " + std::to_string(issue.offset),
                    issue.message);
            }
            if (!mat) continue;
            const std::size_t expected = m_.split_size(split);
            if (mat->rows() != expected) {
                add(ViolationKind::dimension_mismatch, label, "byte 4",
                    "matrix has " + std::to_string(mat->rows()) + " rows, manifest declares " +
                        std::to_string(expected));
            }
            cols[split == Split::train ? 0 : 1] = mat->cols();
            (split == Split::train ? d_.train_embeddings : d_.test_embeddings)[p] = std::move(*mat);
        }
        if (cols[0] && cols[1] && *cols[0] != *cols[1]) {
            add(ViolationKind::dimension_mismatch, m_.probe_name(p), "byte 8",
                "train has " + std::to_string(*cols[0]) + " cols, test has " + std::to_string(*cols[1]));
        }
    }
}

std::optional<CsvTable> BundleLoader::fetch_csv(const std::string& key, std::initializer_list<std::string_view> columns,
                                                bool required) {
    auto bytes = fetch(key, required);
    if (!bytes) return std::nullopt;
    auto table = parse_csv(std::string_view(reinterpret_cast<const char*>(bytes->data()), bytes->size()));
    bool ok = true;
    for (auto col : columns) {
        if (std::find(table.header.begin(), table.header.end(), col) == table.header.end()) {
            add(ViolationKind::malformed, key, "line 1", "missing column '" + std::string(col) + "'");
            ok = false;
        }
    }
    if (!ok) return std::nullopt;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (table.rows[r].size() != table.header.size()) {
            add(ViolationKind::malformed, key, "line " + std::to_string(table.line_numbers[r]),
                "expected " + std::to_string(table.header.size()) + " fields");
            ok = false;
        }
    }
    if (!ok) return std::nullopt;
    return table;
}

std::optional<std::uint32_t> BundleLoader::parse_label(const std::string& file, std::size_t line,
                                                       const std::string& text) {
    long long v = 0;
    if (!parse_index(text, v)) {
        add(ViolationKind::malformed, file, "line " + std::to_string(line), "not an integer class index: '" + text + "'");
        return std::nullopt;
    }
    if (v < 0 || static_cast<std::size_t>(v) >= m_.num_classes()) {
        add(ViolationKind::class_out_of_range, file, "line " + std::to_string(line),
            "class index " + text + " outside [0, " + std::to_string(m_.num_classes()) + ")");
        return std::nullopt;
    }
    return static_cast<std::uint32_t>(v);
}

void BundleLoader::load_labels() {
    const std::string key(kLabelsKey);
    auto table = fetch_csv(key, {"instance_id", "split", "label"}, true);
    if (!table) return;
    const auto c_id = table->column("instance_id", key);
    const auto c_split = table->column("split", key);
    const auto c_label = table->column("label", key);
    std::vector<std::optional<std::uint32_t>> train(m_.n_train), test(m_.n_test);
    for (std::size_t r = 0; r < table->rows.size(); ++r) {
        const auto& row = table->rows[r];
        const auto line = table->line_numbers[r];
        const std::string loc = "line " + std::to_string(line);
        auto ref = parse_instance_id(row[c_id]);
        if (!ref) {
            add(ViolationKind::malformed, key, loc, "bad instance id '" + row[c_id] + "'");
            continue;
        }
        if (row[c_split] != to_string(ref->split)) {
            add(ViolationKind::malformed, key, loc, "split column '" + row[c_split] + "' disagrees with id");
            continue;
        }
        auto& slots = ref->split == Split::train ? train : test;
        if (ref->index >= slots.size()) {
            add(ViolationKind::dangling_reference, key, loc, "instance " + row[c_id] + " beyond split size");
            continue;
        }
        auto label = parse_label(key, line, row[c_label]);
        if (!label) continue;
        if (slots[ref->index]) {
            add(ViolationKind::duplicate, key, loc, "duplicate label for " + row[c_id]);
            continue;
        }
        slots[ref->index] = label;
    }
    for (Split split : {Split::train, Split::test}) {
        auto& slots = split == Split::train ? train : test;
        auto& out = split == Split::train ? d_.train_labels : d_.test_labels;
        out.resize(slots.size());
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (!slots[i]) {
                add(ViolationKind::missing_entry, key, "", "no label for " + instance_id({split, i}));
                continue;
            }
            out[i] = *slots[i];
        }
    }
}

void BundleLoader::load_predictions() {
    const std::string key(kPredictionsKey);
    auto table = fetch_csv(key, {"instance_id", "predicted_label"}, true);
    if (!table) return;
    const auto c_id = table->column("instance_id", key);
    const auto c_label = table->column("predicted_label", key);
    std::vector<std::optional<std::uint32_t>> test(m_.n_test);
    std::vector<std::optional<std::uint32_t>> train(m_.n_train);
    bool any_train = false;
    for (std::size_t r = 0; r < table->rows.size(); ++r) {
        const auto& row = table->rows[r];
        const auto line = table->line_numbers[r];
        const std::string loc = "line " + std::to_string(line);
        auto ref = parse_instance_id(row[c_id]);
        if (!ref) {
            add(ViolationKind::malformed, key, loc, "bad instance id '" + row[c_id] + "'");
            continue;
        }
        auto& slots = ref->split == Split::train ? train : test;
        if (ref->index >= slots.size()) {
            add(ViolationKind::dangling_reference, key, loc, "unknown instance " + row[c_id]);
            continue;
        }
        auto label = parse_label(key, line, row[c_label]);
        if (!label) continue;
        if (slots[ref->index]) {
            add(ViolationKind::duplicate, key, loc, "duplicate prediction for " + row[c_id]);
            continue;
        }
        slots[ref->index] = label;
        any_train = any_train || ref->split == Split::train;
    }
    d_.test_predictions.resize(m_.n_test);
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (!test[i]) {
            add(ViolationKind::missing_entry, key, "", "no prediction for " + instance_id({Split::test, i}));
            continue;
        }
        d_.test_predictions[i] = *test[i];
    }
    if (any_train) d_.train_predictions = std::move(train);
}

void BundleLoader::load_annotations() {
    d_.has_annotations = m_.has_annotations;
    if (!m_.has_annotations) return;
    const std::string key(kAnnotationsKey);
    auto table = fetch_csv(key, {"instance_id", "annotator_id", "label"}, true);
    if (!table) return;
    const auto c_id = table->column("instance_id", key);
    const auto c_ann = table->column("annotator_id", key);
    const auto c_label = table->column("label", key);
    d_.annotations.assign(m_.n_test, {});
    std::set<std::pair<std::size_t, std::string>> seen;
    for (std::size_t r = 0; r < table->rows.size(); ++r) {
        const auto& row = table->rows[r];
        const auto line = table->line_numbers[r];
        const std::string loc = "line " + std::to_string(line);
        auto ref = parse_instance_id(row[c_id]);
        if (!ref || ref->split != Split::test || ref->index >= m_.n_test) {
            add(ViolationKind::dangling_reference, key, loc,
                "annotation references unknown test instance '" + row[c_id] + "'");
            continue;
        }
        auto label = parse_label(key, line, row[c_label]);
        if (!label) continue;
        if (!seen.emplace(ref->index, row[c_ann]).second) {
            add(ViolationKind::duplicate, key, loc, "duplicate annotation by '" + row[c_ann] + "' for " + row[c_id]);
            continue;
        }
        d_.annotations[ref->index].emplace_back(row[c_ann], *label);
    }
}

void BundleLoader::load_images() {
    const std::string key(kImagesKey);
    if (!m_.files.contains(key)) return;
    auto table = fetch_csv(key, {"instance_id", "path"}, false);
    if (!table) return;
    const auto c_id = table->column("instance_id", key);
    const auto c_path = table->column("path", key);
    for (std::size_t r = 0; r < table->rows.size(); ++r) {
        const auto& row = table->rows[r];
        const std::string loc = "line " + std::to_string(table->line_numbers[r]);
        auto ref = parse_instance_id(row[c_id]);
        if (!ref || ref->index >= m_.split_size(ref->split)) {
            add(ViolationKind::dangling_reference, key, loc, "image for unknown instance '" + row[c_id] + "'");
            continue;
        }
        if (escapes_root(row[c_path])) {
            add(ViolationKind::path_escape, key, loc, "image path '" + row[c_path] + "' leaves the bundle directory");
            continue;
        }
        if (!source_(row[c_path])) {
            add(ViolationKind::missing_file, key, loc, "image file '" + row[c_path] + "' not found");
            continue;
        }
        d_.images[row[c_id]] = row[c_path];
    }
}

std::shared_ptr<Bundle> BundleLoader::run(ValidationReport& report,
                                          const std::optional<std::vector<std::uint8_t>>& manifest_bytes) {
    report_ = &report;
    if (!manifest_bytes) {
        add(ViolationKind::missing_file, "manifest.json", "", "manifest.json not found");
        return nullptr;
    }
    if (!parse_manifest(*manifest_bytes)) return nullptr;
    d_.dataset_name = m_.dataset_name;
    d_.class_names = m_.class_names;
    d_.layer_names = m_.layer_names;
    load_matrices();
    load_labels();
    load_predictions();
    load_annotations();
    load_images();
    if (!report.ok()) return nullptr;

    std::shared_ptr<Bundle> b(new Bundle());
    b->root_ = root_;
    b->checksum_ = crc32(to_bytes(manifest_to_json(m_)));
    b->manifest_ = std::move(m_);
    if (d_.has_annotations) {
        b->annotation_labels_.resize(d_.annotations.size());
        for (std::size_t i = 0; i < d_.annotations.size(); ++i) {
            for (const auto& a : d_.annotations[i]) b->annotation_labels_[i].push_back(a.second);
        }
    }
    b->data_ = std::move(d_);
    return b;
}

std::string manifest_to_json(const Manifest& manifest) { return manifest_json(manifest).dump(2) + "\n"; }

namespace {

FileSource disk_source(const std::filesystem::path& dir) {
    return [dir](const std::string& rel) -> std::optional<std::vector<std::uint8_t>> {
        const auto p = dir / rel;
        std::error_code ec;
        if (!std::filesystem::is_regular_file(p, ec)) return std::nullopt;
        try {
            return read_file_bytes(p);
        } catch (const Error&) {
            return std::nullopt;
        }
    };
}

std::shared_ptr<Bundle> inspect_dir(const std::filesystem::path& dir, ValidationReport& report) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw Error(ErrorKind::io, "bundle directory not found", dir.string());
    }
    auto source = disk_source(dir);
    BundleLoader loader(source, dir);
    return loader.run(report, source("manifest.json"));
}

Error violation_error(const Violation& v) {
    std::string where = v.file;
    if (!v.location.empty()) where += ": " + v.location;
    return Error(ErrorKind::validation, std::string(to_string(v.kind)) + ": " + v.message, where);
}

}  // namespace

BundlePtr load_bundle(const std::filesystem::path& dir) {
    ValidationReport report;
    auto b = inspect_dir(dir, report);
    if (!b) throw violation_error(report.violations.front());
    return b;
}

ValidationReport validate_bundle(const std::filesystem::path& dir) {
    ValidationReport report;
    inspect_dir(dir, report);
    return report;
}

std::shared_ptr<const Bundle> Bundle::from_data(BundleData data, std::filesystem::path root) {
    auto encoded = encode_bundle(data);
    auto files = std::make_shared<std::map<std::string, std::vector<std::uint8_t>>>(std::move(encoded.files));
    FileSource source = [files, root](const std::string& rel) -> std::optional<std::vector<std::uint8_t>> {
        auto it = files->find(std::filesystem::path(rel).lexically_normal().generic_string());
        if (it != files->end()) return it->second;
        if (!root.empty()) return disk_source(root)(rel);
        return std::nullopt;
    };
    ValidationReport report;
    BundleLoader loader(source, root);
    auto b = loader.run(report, to_bytes(manifest_to_json(encoded.manifest)));
    if (!b) throw violation_error(report.violations.front());
    return b;
}

Manifest write_bundle(const std::filesystem::path& dir, const BundleData& data) {
    auto encoded = encode_bundle(data);
    std::filesystem::create_directories(dir);
    for (const auto& [rel, bytes] : encoded.files) {
        const auto p = dir / rel;
        std::filesystem::create_directories(p.parent_path());
        write_file_bytes(p, bytes);
    }
    write_file_bytes(dir / "manifest.json", to_bytes(manifest_to_json(encoded.manifest)));
    return encoded.manifest;
}

}  // namespace difflens
