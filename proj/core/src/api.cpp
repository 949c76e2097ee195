#include "difflens/api.hpp"

#include <algorithm>
#include <cmath>

#include "difflens/analytics.hpp"
#include "difflens/error.hpp"
#include "difflens/text.hpp"

namespace difflens {

using nlohmann::json;

std::string_view to_string(ComputeState s) {
    switch (s) {
        case ComputeState::idle: return "idle";
        case ComputeState::running: return "running";
        case ComputeState::ready: return "ready";
        case ComputeState::failed: return "failed";
    }
    return "idle";
}

// ---- snapshot ------------------------------------------------------------

Snapshot::Snapshot(BundlePtr bundle, DifficultyConfig config, std::shared_ptr<const ProbeSet> probes, ProfileTable table)
    : bundle_(std::move(bundle)),
      config_(std::move(config)),
      hash_(difflens::config_hash(config_)),
      probes_(std::move(probes)),
      table_(std::move(table)) {}

const Projection2D& Snapshot::projection(const ProjectionSource& source) const {
    std::lock_guard lock(cache_mutex_);
    const std::pair<int, std::size_t> key{static_cast<int>(source.kind), source.probe};
    auto& slot = projections_[key];
    if (!slot) slot = std::make_unique<Projection2D>(project_2d(*bundle_, table_, source));
    return *slot;
}

const std::vector<double>& Snapshot::kth_distances(std::size_t probe, std::size_t k) const {
    std::lock_guard lock(cache_mutex_);
    auto& slot = kth_[{probe, k}];
    if (!slot) {
        std::vector<double> out(table_.profiles.size());
        for (std::size_t r = 0; r < out.size(); ++r) {
            out[r] = probes_->neighbors(*bundle_, table_.profiles[r].ref, probe, k).back().distance;
        }
        slot = std::make_unique<std::vector<double>>(std::move(out));
    }
    return *slot;
}

// ---- helpers -------------------------------------------------------------

namespace {

int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return 400;
        case ErrorKind::validation: return 422;
        case ErrorKind::not_found: return 404;
        case ErrorKind::not_computed: return 409;
        case ErrorKind::conflict: return 409;
        case ErrorKind::io: return 500;
    }
    return 500;
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

ApiResponse json_response(int status, const json& body) { return {status, dump(body), "application/json", {}}; }

ApiResponse error_response(int status, std::string_view code, std::string_view message, json details = json::object()) {
    return json_response(status, json{{"code", code}, {"message", message}, {"details", std::move(details)}});
}

std::optional<std::string> param(const ApiRequest& r, const std::string& key) {
    auto it = r.query.find(key);
    if (it == r.query.end()) return std::nullopt;
    return it->second;
}

std::size_t uint_param(const ApiRequest& r, const std::string& key, std::size_t fallback, std::size_t lo, std::size_t hi) {
    auto v = param(r, key);
    if (!v) return fallback;
    long long n = 0;
    if (!parse_index(*v, n) || n < static_cast<long long>(lo) || n > static_cast<long long>(hi)) {
        throw Error(ErrorKind::invalid_argument,
                    "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]", key);
    }
    return static_cast<std::size_t>(n);
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> image_ref(const Bundle& bundle, InstanceRef ref) {
    if (!bundle.image(ref)) return std::nullopt;
    return "/api/image?id=" + instance_id(ref);
}

json profile_json(const Snapshot& s, std::size_t row) {
    const auto& p = s.table().profiles[row];
    const auto image = image_ref(s.bundle(), p.ref);
    return json{{"id", instance_id(p.ref)},
                {"label", p.label},
                {"predicted", p.predicted},
                {"correct", p.correct},
                {"data_kdn", p.data_kdn},
                {"layer_kdn", p.layer_kdn},
                {"prediction_depth", p.prediction_depth},
                {"model_difficulty", p.model_difficulty},
                {"human_difficulty", optional_number(p.human_difficulty)},
                {"pattern", to_string(p.pattern)},
                {"never_aligned", p.never_aligned},
                {"image", image ? json(*image) : json(nullptr)}};
}

json summary_json(const RunSummary& s) {
    return json{{"instances", s.instances},         {"correct", s.correct},
                {"accuracy", s.accuracy},           {"mean_data", s.mean_data},
                {"mean_model", s.mean_model},       {"mean_human", optional_number(s.mean_human)},
                {"human_present", s.human_present}, {"never_aligned", s.never_aligned}};
}

const std::vector<std::string>& probe_names(const Manifest& m) {
    static thread_local std::vector<std::string> names;
    names.clear();
    for (std::size_t j = 0; j < m.num_probes(); ++j) names.push_back(m.probe_name(j));
    return names;
}

}  // namespace

// ---- service -------------------------------------------------------------

ApiService::ApiService(BundlePtr bundle, ApiOptions options) : bundle_(std::move(bundle)), options_(std::move(options)) {
    std::error_code ec;
    if (options_.subsets_path && std::filesystem::is_regular_file(*options_.subsets_path, ec)) {
        auto loaded = SubsetStore::load(*options_.subsets_path, bundle_->checksum());
        store_ = std::move(loaded.store);
        warnings_ = std::move(loaded.warnings);
    } else {
        store_ = std::make_unique<SubsetStore>(bundle_->checksum());
    }
}

ApiService::~ApiService() = default;

std::uint64_t ApiService::revision() const { return revision_.load(); }

ComputeState ApiService::state() const {
    std::lock_guard lock(state_mutex_);
    return state_;
}

std::shared_ptr<const Snapshot> ApiService::snapshot() const {
    std::lock_guard lock(state_mutex_);
    return current_;
}

void ApiService::publish(std::shared_ptr<const Snapshot> snap) {
    // caller holds state_mutex_
    if (current_ == snap) return;
    current_ = std::move(snap);
    ++revision_;
}

bool ApiService::compute(const DifficultyConfig& requested, bool wait) {
    validate_config(requested);
    const auto& m = bundle_->manifest();
    const std::size_t max_k = requested.profile_train ? m.n_train - 1 : m.n_train;
    if (requested.k > max_k) {
        throw Error(ErrorKind::invalid_argument, "k exceeds the available training neighbors (" + std::to_string(max_k) + ")",
                    "k");
    }
    DifficultyConfig config = requested;
    if (!config.probes.cache_dir && options_.cache_dir) config.probes.cache_dir = options_.cache_dir;
    const auto hash = config_hash(config);
    {
        std::lock_guard write(write_mutex_);
        {
            std::lock_guard lock(state_mutex_);
            if (auto it = computed_.find(hash); it != computed_.end()) {
                publish(it->second);
                state_ = ComputeState::ready;
                error_.reset();
                return true;
            }
        }
        if (worker_.joinable()) worker_.join();
        {
            std::lock_guard lock(state_mutex_);
            if (auto it = computed_.find(hash); it != computed_.end()) {
                publish(it->second);
                state_ = ComputeState::ready;
                return true;
            }
            state_ = ComputeState::running;
            phase_ = "queued";
            error_.reset();
            pending_hash_ = hash;
        }
        worker_ = std::jthread([this, config, hash] { run_compute(config, hash); });
    }
    if (wait) wait_idle();
    return false;
}

void ApiService::wait_idle() {
    std::unique_lock lock(state_mutex_);
    idle_cv_.wait(lock, [&] { return state_ != ComputeState::running; });
}

void ApiService::run_compute(DifficultyConfig config, std::uint32_t hash) {
    auto set_phase = [&](std::string phase) {
        std::lock_guard lock(state_mutex_);
        phase_ = std::move(phase);
    };
    try {
        std::shared_ptr<const ProbeSet> probes;
        {
            std::lock_guard lock(state_mutex_);
            for (const auto& [opts, set] : probe_cache_) {
                if (opts == config.probes) probes = set;
            }
        }
        if (!probes) {
            set_phase("indexing");
            probes = std::make_shared<const ProbeSet>(ProbeSet::build(bundle_, config.probes));
            std::lock_guard lock(state_mutex_);
            probe_cache_.emplace_back(config.probes, probes);
        }
        set_phase("profiling");
        auto table = compute_profiles(*bundle_, *probes, config);
        auto snap = std::make_shared<const Snapshot>(bundle_, config, probes, std::move(table));
        std::lock_guard lock(state_mutex_);
        computed_[hash] = snap;
        publish(std::move(snap));
        state_ = ComputeState::ready;
        phase_ = "done";
    } catch (const std::exception& e) {
        std::lock_guard lock(state_mutex_);
        state_ = ComputeState::failed;
        phase_ = "failed";
        error_ = e.what();
    }
    {
        std::lock_guard lock(state_mutex_);
        pending_hash_.reset();
    }
    idle_cv_.notify_all();
}

std::shared_ptr<const Snapshot> ApiService::require_snapshot() const {
    auto snap = snapshot();
    if (!snap) throw Error(ErrorKind::not_computed, "profiles have not been computed; POST /api/compute first");
    return snap;
}

std::vector<std::size_t> ApiService::subset_rows(const Snapshot& snap, const ApiRequest& r) const {
    auto id = param(r, "subset");
    if (!id || id->empty() || *id == "all") return all_rows(snap.table());
    auto subset = store_->get(*id);
    if (!subset) throw Error(ErrorKind::not_found, "unknown subset '" + *id + "'", "subset");
    std::vector<std::size_t> rows;
    for (const auto& ref : subset->members) {
        if (auto row = snap.table().find(ref)) rows.push_back(*row);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

// ---- GET -----------------------------------------------------------------

json ApiService::get_status() const {
    const auto& m = bundle_->manifest();
    json out;
    {
        std::lock_guard lock(state_mutex_);
        out["state"] = to_string(state_);
        out["phase"] = phase_;
        out["error"] = error_ ? json(*error_) : json(nullptr);
        out["config"] = current_ ? config_to_json(current_->config()) : json(nullptr);
        out["config_hash"] = current_ ? json(current_->config_hash()) : json(nullptr);
    }
    out["revision"] = revision();
    out["bundle"] = {{"dataset_name", m.dataset_name}, {"checksum", bundle_->checksum()},
                     {"class_names", m.class_names},   {"probes", probe_names(m)},
                     {"n_train", m.n_train},           {"n_test", m.n_test},
                     {"has_annotations", m.has_annotations}};
    out["warnings"] = warnings_;
    return out;
}

json ApiService::get_summary(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto& t = snap->table();
    const auto rows = subset_rows(*snap, r);
    const auto pair = PerspectivePair::parse(param(r, "pair").value_or("data/model"));
    const auto bins = uint_param(r, "bins", kDefaultBins, 1, 1000);
    const auto layers = snap->bundle().manifest().num_layers();
    const auto h = difficulty_heatmap(t, rows, pair, bins);

    json histograms = json::object();
    std::size_t human_absent = 0;
    for (auto p : {Perspective::data, Perspective::model, Perspective::human}) {
        std::vector<std::size_t> counts(axis_bins(p, bins, layers), 0);
        for (auto row : rows) {
            if (auto b = axis_bin(p, t.profiles[row], bins, layers)) {
                ++counts[*b];
            } else if (p == Perspective::human) {
                ++human_absent;
            }
        }
        histograms[std::string(to_string(p))] = counts;
    }
    return json{{"pair", pair.to_string()},
                {"bins", bins},
                {"subset_size", rows.size()},
                {"x", {{"axis", to_string(pair.x)}, {"bins", h.x_bins}}},
                {"y", {{"axis", to_string(pair.y)}, {"bins", h.y_bins}}},
                {"counts", h.counts},
                {"x_marginal", h.x_marginal},
                {"y_marginal", h.y_marginal},
                {"total", h.total},
                {"excluded_absent", h.excluded_absent},
                {"histograms", histograms},
                {"human_absent", human_absent},
                {"summary", summary_json(summarize(t, rows))}};
}

json ApiService::get_confusion(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto rows = subset_rows(*snap, r);
    const auto& m = snap->bundle().manifest();
    const auto counts = confusion_matrix(snap->table(), rows, m.num_classes());
    std::size_t correct = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) correct += counts[c][c];
    return json{{"class_names", m.class_names}, {"counts", counts}, {"total", rows.size()}, {"correct", correct}};
}

json ApiService::get_flow(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto rows = subset_rows(*snap, r);
    const auto& t = snap->table();
    const auto C = snap->bundle().manifest().num_classes();
    auto id_of = [&](std::size_t row) { return instance_id(t.profiles[row].ref); };
    if (rows.empty()) {
        FlowGraph empty;
        empty.num_classes = C;
        return flow_to_json(empty, id_of);
    }
    return flow_to_json(build_flow(t, rows, C), id_of);
}

json ApiService::get_pcp(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto rows = subset_rows(*snap, r);
    const auto& t = snap->table();
    const auto& names = probe_names(snap->bundle().manifest());
    json lines = json::array();
    std::vector<std::string> axes{"data"};
    axes.insert(axes.end(), names.begin(), names.end());
    if (!rows.empty()) {
        const auto pcp = pcp_data(t, rows, names);
        axes = pcp.axes;
        for (std::size_t i = 0; i < pcp.rows.size(); ++i) {
            const auto& p = t.profiles[pcp.rows[i]];
            lines.push_back({{"id", instance_id(p.ref)},
                             {"label", p.label},
                             {"predicted", p.predicted},
                             {"prediction_depth", p.prediction_depth},
                             {"values", pcp.polylines[i]}});
        }
    }
    return json{{"axes", axes}, {"polylines", lines}};
}

json ApiService::get_projection(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto rows = subset_rows(*snap, r);
    const auto& m = snap->bundle().manifest();
    const auto source = ProjectionSource::parse(param(r, "source").value_or("pattern"), m);
    const auto& proj = snap->projection(source);
    const auto& t = snap->table();
    json points = json::array();
    for (auto row : rows) {
        const auto& p = t.profiles[row];
        points.push_back({{"id", instance_id(p.ref)},
                          {"x", proj.coords[row][0]},
                          {"y", proj.coords[row][1]},
                          {"label", p.label},
                          {"predicted", p.predicted},
                          {"pattern", to_string(p.pattern)}});
    }
    return json{{"source", source.to_string(m)},
                {"explained_variance", proj.model.explained_variance},
                {"points", points}};
}

json ApiService::get_patterns(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto rows = subset_rows(*snap, r);
    const auto& th = snap->table().thresholds;
    return json{{"counts", pattern_counts(snap->table(), rows)},
                {"total", rows.size()},
                {"thresholds", {{"data", th.data}, {"model", th.model}, {"human", th.human}}}};
}

json ApiService::get_instances(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    auto rows = subset_rows(*snap, r);
    const auto& t = snap->table();
    const auto& m = snap->bundle().manifest();
    const std::string sort = param(r, "sort").value_or("id");
    const std::string order = param(r, "order").value_or("asc");
    if (order != "asc" && order != "desc") throw Error(ErrorKind::invalid_argument, "expected asc or desc", "order");
    const bool desc = order == "desc";

    std::function<std::optional<double>(const DifficultyProfile&)> key;
    if (sort == "id") {
        key = [](const DifficultyProfile&) { return std::optional<double>(0.0); };
    } else if (sort == "data") {
        key = [](const DifficultyProfile& p) { return std::optional(p.data_kdn); };
    } else if (sort == "model" || sort == "pd") {
        key = [](const DifficultyProfile& p) { return std::optional(p.model_difficulty); };
    } else if (sort == "human") {
        key = [](const DifficultyProfile& p) { return p.human_difficulty; };
    } else if (sort == "pattern") {
        key = [](const DifficultyProfile& p) { return std::optional(static_cast<double>(p.pattern)); };
    } else if (sort == "correct") {
        key = [](const DifficultyProfile& p) { return std::optional(p.correct ? 1.0 : 0.0); };
    } else if (sort.rfind("kdn:", 0) == 0) {
        auto probe = m.probe_index(sort.substr(4));
        if (!probe) throw Error(ErrorKind::not_found, "unknown probe in sort key '" + sort + "'", "sort");
        key = [probe = *probe](const DifficultyProfile& p) { return std::optional(p.layer_kdn[probe]); };
    } else {
        throw Error(ErrorKind::invalid_argument, "unknown sort key '" + sort + "'", "sort");
    }
    // Absent values last; ties by instance id.
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        const auto ka = key(t.profiles[a]);
        const auto kb = key(t.profiles[b]);
        if (ka.has_value() != kb.has_value()) return ka.has_value();
        if (ka && *ka != *kb) return desc ? *ka > *kb : *ka < *kb;
        return t.profiles[a].ref < t.profiles[b].ref;
    });

    const auto page_size = uint_param(r, "page_size", 50, 1, 10000);
    const auto page = uint_param(r, "page", 0, 0, 1'000'000'000);
    json out_rows = json::array();
    for (std::size_t i = page * page_size; i < rows.size() && i < (page + 1) * page_size; ++i) {
        out_rows.push_back(profile_json(*snap, rows[i]));
    }
    return json{{"total", rows.size()}, {"page", page},   {"page_size", page_size},
                {"sort", sort},         {"order", order}, {"rows", out_rows}};
}

json ApiService::get_neighbors(const ApiRequest& r) const {
    const auto snap = require_snapshot();
    const auto& t = snap->table();
    const auto& bundle = snap->bundle();
    const auto& m = bundle.manifest();

    const auto id = param(r, "instance");
    if (!id) throw Error(ErrorKind::invalid_argument, "missing instance id", "instance");
    const auto ref = parse_instance_id(*id);
    const auto row = ref ? t.find(*ref) : std::nullopt;
    if (!row) throw Error(ErrorKind::not_found, "unknown or unprofiled instance '" + *id + "'", "instance");

    const std::string layer = param(r, "layer").value_or(m.probe_name(m.num_layers()));
    const auto probe = m.probe_index(layer);
    if (!probe) throw Error(ErrorKind::not_found, "unknown layer '" + layer + "'", "layer");

    const bool any_train = std::any_of(t.profiles.begin(), t.profiles.end(),
                                       [](const DifficultyProfile& p) { return p.ref.split == Split::train; });
    const std::size_t max_k = any_train ? m.n_train - 1 : m.n_train;
    const auto k = uint_param(r, "k", t.k, 1, max_k);

    const auto neighbors = snap->probes().neighbors(bundle, *ref, *probe, k);
    const auto& p = t.profiles[*row];
    const std::uint32_t reference =
        snap->config().layer_reference == ReferenceLabel::final_prediction ? p.predicted : p.label;

    std::vector<std::size_t> classes(m.num_classes(), 0);
    for (const auto& n : neighbors) ++classes[n.label];

    const auto rows = subset_rows(*snap, r);
    const auto& kth = snap->kth_distances(*probe, k);
    double max_distance = neighbors.back().distance;
    if (!rows.empty()) {
        max_distance = 0.0;
        for (auto rr : rows) max_distance = std::max(max_distance, kth[rr]);
    }
    constexpr std::size_t kBins = 10;
    std::vector<std::vector<std::size_t>> stacked(kBins, std::vector<std::size_t>(m.num_classes(), 0));
    std::vector<double> edges;
    for (std::size_t b = 0; b <= kBins; ++b) edges.push_back(max_distance * static_cast<double>(b) / kBins);
    json items = json::array();
    for (const auto& n : neighbors) {
        std::size_t b = 0;
        if (max_distance > 0.0) {
            b = std::min(kBins - 1, static_cast<std::size_t>(std::floor(n.distance / max_distance * kBins)));
        }
        ++stacked[b][n.label];
        const InstanceRef nref{Split::train, n.row};
        const auto image = image_ref(bundle, nref);
        items.push_back({{"id", instance_id(nref)},
                         {"label", n.label},
                         {"distance", n.distance},
                         {"bin", b},
                         {"image", image ? json(*image) : json(nullptr)}});
    }
    const auto image = image_ref(bundle, *ref);
    return json{{"instance", instance_id(*ref)},
                {"layer", layer},
                {"probe", *probe},
                {"k", k},
                {"reference_label", reference},
                {"score", kdn_score(neighbors, reference)},
                {"image", image ? json(*image) : json(nullptr)},
                {"class_distribution", classes},
                {"neighbors", items},
                {"histogram", {{"max_distance", max_distance}, {"edges", edges}, {"counts", stacked}}}};
}

json ApiService::get_subsets() const {
    json items = json::array();
    for (const auto& s : store_->list()) {
        items.push_back({{"id", s.id},
                         {"name", s.name},
                         {"size", s.members.size()},
                         {"provenance", s.provenance},
                         {"created_at", s.created_at},
                         {"bundle_checksum", s.bundle_checksum}});
    }
    return json{{"subsets", items}, {"warnings", warnings_}};
}

json ApiService::get_subset(std::string_view id) const {
    auto s = store_->get(id);
    if (!s) throw Error(ErrorKind::not_found, "unknown subset '" + std::string(id) + "'", "id");
    auto out = subset_to_json(*s);
    out["size"] = s->members.size();
    return out;
}

// ---- POST ----------------------------------------------------------------

namespace {

json parse_body(const ApiRequest& r) {
    if (r.body.empty()) return json::object();
    try {
        auto j = json::parse(r.body);
        if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "request body must be a JSON object", "body");
        return j;
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::invalid_argument, std::string("request body is not valid JSON: ") + e.what(), "body");
    }
}

std::string string_field(const json& body, const char* key, std::optional<std::string> fallback = std::nullopt) {
    auto it = body.find(key);
    if (it == body.end()) {
        if (fallback) return *fallback;
        throw Error(ErrorKind::invalid_argument, "missing field", key);
    }
    if (!it->is_string()) throw Error(ErrorKind::invalid_argument, "expected a string", key);
    return it->get<std::string>();
}

}  // namespace

ApiResponse ApiService::post_compute(const ApiRequest& r) {
    const auto body = parse_body(r);
    DifficultyConfig config;
    if (auto it = body.find("config"); it != body.end()) {
        try {
            config = config_from_json(*it);
        } catch (const Error& e) {
            throw Error(e.kind(), e.what(), e.where().empty() ? "config" : "config." + e.where());
        }
    }
    bool wait = false;
    if (auto it = body.find("wait"); it != body.end()) {
        if (!it->is_boolean()) throw Error(ErrorKind::invalid_argument, "expected a boolean", "wait");
        wait = it->get<bool>();
    }
    for (const auto& [key, _] : body.items()) {
        if (key != "config" && key != "wait") throw Error(ErrorKind::invalid_argument, "unknown field", key);
    }
    bool cached = false;
    try {
        cached = compute(config, wait);
    } catch (const Error& e) {
        throw Error(e.kind(), e.what(), e.where().empty() ? "config" : "config." + e.where());
    }
    auto status = get_status();
    status["cached"] = cached;
    const auto state = this->state();
    if (state == ComputeState::failed) return error_response(500, "compute_failed", status["error"].get<std::string>(), status);
    return json_response(state == ComputeState::running ? 202 : 200, status);
}

ApiResponse ApiService::post_subsets(const ApiRequest& r) {
    const auto body = parse_body(r);
    const auto action = string_field(body, "action", "create");
    if (action == "save") {
        std::filesystem::path path;
        if (body.contains("path")) {
            path = string_field(body, "path");
        } else if (options_.subsets_path) {
            path = *options_.subsets_path;
        } else {
            throw Error(ErrorKind::invalid_argument, "no subsets path configured", "path");
        }
        std::lock_guard write(write_mutex_);
        const auto rev = store_->save(path);
        return json_response(200, json{{"path", path.string()}, {"store_revision", rev}});
    }
    if (action == "delete") {
        const auto id = string_field(body, "id");
        std::lock_guard write(write_mutex_);
        if (!store_->remove(id)) throw Error(ErrorKind::not_found, "unknown subset '" + id + "'", "id");
        ++revision_;
        return json_response(200, json{{"deleted", id}});
    }
    Subset created;
    if (action == "create") {
        const auto snap = require_snapshot();
        auto it = body.find("selection");
        if (it == body.end()) throw Error(ErrorKind::invalid_argument, "missing field", "selection");
        SelectionContext ctx{snap->bundle(), snap->table(), kDefaultBins,
                             [&](const ProjectionSource& s) -> const Projection2D& { return snap->projection(s); }};
        Members members;
        try {
            members = evaluate_selection(*it, ctx);
        } catch (const Error& e) {
            throw Error(e.kind(), e.what(), e.where().empty() ? "selection" : "selection." + e.where());
        }
        std::lock_guard write(write_mutex_);
        created = store_->create(string_field(body, "name", ""), std::move(members), json{{"select", *it}});
    } else if (action == "combine") {
        const auto op_text = string_field(body, "op");
        const auto op = parse_set_op(op_text);
        if (!op) throw Error(ErrorKind::invalid_argument, "unknown set operation '" + op_text + "'", "op");
        std::lock_guard write(write_mutex_);
        created = store_->combine(string_field(body, "a"), string_field(body, "b"), *op, string_field(body, "name", ""));
    } else {
        throw Error(ErrorKind::invalid_argument, "unknown action '" + action + "'", "action");
    }
    ++revision_;
    auto out = subset_to_json(created);
    out["size"] = created.members.size();
    return json_response(201, out);
}

// ---- routing -------------------------------------------------------------

ApiResponse ApiService::dispatch(const ApiRequest& r) {
    const auto& path = r.path;
    if (r.method == "GET") {
        if (path == "/api/status") return json_response(200, get_status());
        if (path == "/api/summary") return json_response(200, get_summary(r));
        if (path == "/api/confusion") return json_response(200, get_confusion(r));
        if (path == "/api/flow") return json_response(200, get_flow(r));
        if (path == "/api/pcp") return json_response(200, get_pcp(r));
        if (path == "/api/projection") return json_response(200, get_projection(r));
        if (path == "/api/patterns") return json_response(200, get_patterns(r));
        if (path == "/api/instances") return json_response(200, get_instances(r));
        if (path == "/api/neighbors") return json_response(200, get_neighbors(r));
        if (path == "/api/subsets") return json_response(200, get_subsets());
        if (path.rfind("/api/subsets/", 0) == 0) {
            const auto rest = path.substr(13);
            if (rest.size() > 4 && rest.ends_with(".csv")) {
                auto s = store_->get(rest.substr(0, rest.size() - 4));
                if (!s) throw Error(ErrorKind::not_found, "unknown subset '" + rest + "'", "id");
                return {200, subset_csv(*s), "text/csv", {}};
            }
            return json_response(200, get_subset(rest));
        }
        if (path == "/api/image") {
            const auto id = param(r, "id").value_or("");
            const auto ref = parse_instance_id(id);
            const auto rel = ref && ref->index < bundle_->manifest().split_size(ref->split) ? bundle_->image(*ref)
                                                                                           : std::nullopt;
            if (!rel) throw Error(ErrorKind::not_found, "no image for '" + id + "'", "id");
            const auto bytes = read_file_bytes(bundle_->root() / *rel);
            const auto ext = std::filesystem::path(*rel).extension().string();
            const std::string type = ext == ".png" ? "image/png" : (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg"
                                                                                                     : "application/octet-stream";
            return {200, std::string(bytes.begin(), bytes.end()), type, {}};
        }
    } else if (r.method == "POST") {
        if (path == "/api/compute") return post_compute(r);
        if (path == "/api/subsets") return post_subsets(r);
    }
    static const std::vector<std::string> known = {"/api/status",   "/api/summary",   "/api/confusion", "/api/flow",
                                                   "/api/pcp",      "/api/projection", "/api/patterns",  "/api/instances",
                                                   "/api/neighbors", "/api/subsets",   "/api/compute",   "/api/image"};
    if (std::find(known.begin(), known.end(), path) != known.end()) {
        return error_response(405, "method_not_allowed", r.method + " is not supported on " + path);
    }
    return error_response(404, "not_found", "no such endpoint: " + path, json{{"path", path}});
}

ApiResponse ApiService::handle(const ApiRequest& r) {
    ApiResponse response;
    if (r.method == "OPTIONS") {
        response = {204, "", "text/plain", {}};
        response.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
        response.headers["Access-Control-Allow-Headers"] = "Content-Type";
    } else {
        try {
            response = dispatch(r);
        } catch (const Error& e) {
            json details = json::object();
            if (!e.where().empty()) details["field"] = e.where();
            response = error_response(http_status(e.kind()), to_string(e.kind()), e.what(), details);
        } catch (const std::exception& e) {
            response = error_response(500, "internal", e.what());
        }
    }
    response.headers["Access-Control-Allow-Origin"] = options_.cors_origin;
    response.headers["X-Difflens-Revision"] = std::to_string(revision());
    return response;
}

}  // namespace difflens
