#include "difflens/difficulty.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "difflens/checksum.hpp"
#include "difflens/error.hpp"
#include "difflens/text.hpp"

namespace difflens {

using nlohmann::json;

std::string_view to_string(Pattern p) {
    switch (p) {
        case Pattern::p1a: return "1a";
        case Pattern::p1b: return "1b";
        case Pattern::p2a: return "2a";
        case Pattern::p2b: return "2b";
        case Pattern::p3a: return "3a";
        case Pattern::p3b: return "3b";
        case Pattern::p4a: return "4a";
        case Pattern::p4b: return "4b";
        case Pattern::p5a: return "5a";
        case Pattern::p5b: return "5b";
        case Pattern::p6: return "6";
        case Pattern::unclassified: return "unclassified";
    }
    return "unclassified";
}

std::optional<Pattern> parse_pattern(std::string_view code) {
    for (auto p : kTaxonomyCodes) {
        if (to_string(p) == code) return p;
    }
    if (code == "unclassified") return Pattern::unclassified;
    return std::nullopt;
}

std::string_view to_string(ReferenceLabel r) {
    return r == ReferenceLabel::ground_truth ? "ground_truth" : "final_prediction";
}

std::string_view to_string(ThresholdMode m) { return m == ThresholdMode::fixed ? "fixed" : "quantile"; }

// ---- config --------------------------------------------------------------

void validate_config(const DifficultyConfig& c) {
    auto bad = [](const char* path, const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg, path); };
    if (c.k < 1) bad("k", "k must be >= 1");
    auto in_open_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_open_unit(c.fixed.data)) bad("thresholds.data", "threshold must be in (0, 1)");
    if (!in_open_unit(c.fixed.model)) bad("thresholds.model", "threshold must be in (0, 1)");
    if (!in_open_unit(c.fixed.human)) bad("thresholds.human", "threshold must be in (0, 1)");
    if (!in_open_unit(c.quantile)) bad("quantile", "quantile must be in (0, 1)");
    if (c.probes.forest.trees < 1) bad("index.trees", "need at least one tree");
    if (c.probes.forest.leaf_size < 1) bad("index.leaf_size", "leaf size must be >= 1");
    if (c.probes.pca_max_dims < 1) bad("index.pca_max_dims", "must be >= 1");
}

json config_to_json(const DifficultyConfig& c) {
    return json{{"k", c.k},
                {"data_reference", std::string(to_string(c.data_reference))},
                {"layer_reference", std::string(to_string(c.layer_reference))},
                {"threshold_mode", std::string(to_string(c.threshold_mode))},
                {"thresholds", {{"data", c.fixed.data}, {"model", c.fixed.model}, {"human", c.fixed.human}}},
                {"quantile", c.quantile},
                {"profile_train", c.profile_train},
                {"index",
                 {{"mode", std::string(knn::to_string(c.probes.mode))},
                  {"trees", c.probes.forest.trees},
                  {"leaf_size", c.probes.forest.leaf_size},
                  {"seed", c.probes.forest.seed},
                  {"pca_max_dims", c.probes.pca_max_dims},
                  {"zscore", c.probes.zscore}}}};
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& prefix) {
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw Error(ErrorKind::invalid_argument, "unknown field", prefix + key);
        }
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& prefix) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            if (!it->is_number_unsigned()) throw Error(ErrorKind::invalid_argument, "expected a nonnegative integer", prefix + key);
        } else if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw Error(ErrorKind::invalid_argument, "expected a number", prefix + key);
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw Error(ErrorKind::invalid_argument, "expected a boolean", prefix + key);
        }
        it->get_to(out);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, e.what(), prefix + key);
    }
}

template <typename E>
void read_enum(const json& j, const char* key, E& out, std::initializer_list<std::pair<const char*, E>> options,
               const std::string& prefix) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (it->is_string()) {
        for (const auto& [name, value] : options) {
            if (it->get<std::string>() == name) {
                out = value;
                return;
            }
        }
    }
    std::string allowed;
    for (const auto& [name, _] : options) allowed += (allowed.empty() ? "" : "|") + std::string(name);
    throw Error(ErrorKind::invalid_argument, "expected one of " + allowed, prefix + key);
}

}  // namespace

DifficultyConfig config_from_json(const json& j) {
    DifficultyConfig c;
    if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "config must be a JSON object", "");
    reject_unknown(j, {"k", "data_reference", "layer_reference", "threshold_mode", "thresholds", "quantile",
                       "profile_train", "index"},
                   "");
    read_field(j, "k", c.k, "");
    const std::initializer_list<std::pair<const char*, ReferenceLabel>> refs = {
        {"ground_truth", ReferenceLabel::ground_truth}, {"final_prediction", ReferenceLabel::final_prediction}};
    read_enum(j, "data_reference", c.data_reference, refs, "");
    read_enum(j, "layer_reference", c.layer_reference, refs, "");
    read_enum(j, "threshold_mode", c.threshold_mode,
              {{"fixed", ThresholdMode::fixed}, {"quantile", ThresholdMode::quantile}}, "");
    if (auto it = j.find("thresholds"); it != j.end()) {
        if (!it->is_object()) throw Error(ErrorKind::invalid_argument, "expected an object", "thresholds");
        reject_unknown(*it, {"data", "model", "human"}, "thresholds.");
        read_field(*it, "data", c.fixed.data, "thresholds.");
        read_field(*it, "model", c.fixed.model, "thresholds.");
        read_field(*it, "human", c.fixed.human, "thresholds.");
    }
    read_field(j, "quantile", c.quantile, "");
    read_field(j, "profile_train", c.profile_train, "");
    if (auto it = j.find("index"); it != j.end()) {
        if (!it->is_object()) throw Error(ErrorKind::invalid_argument, "expected an object", "index");
        reject_unknown(*it, {"mode", "trees", "leaf_size", "seed", "pca_max_dims", "zscore"}, "index.");
        read_enum(*it, "mode", c.probes.mode, {{"exact", knn::Mode::exact}, {"approximate", knn::Mode::approximate}},
                  "index.");
        read_field(*it, "trees", c.probes.forest.trees, "index.");
        read_field(*it, "leaf_size", c.probes.forest.leaf_size, "index.");
        read_field(*it, "seed", c.probes.forest.seed, "index.");
        read_field(*it, "pca_max_dims", c.probes.pca_max_dims, "index.");
        read_field(*it, "zscore", c.probes.zscore, "index.");
    }
    validate_config(c);
    return c;
}

std::uint32_t config_hash(const DifficultyConfig& config) {
    const std::string s = config_to_json(config).dump();
    return crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

// ---- measures ------------------------------------------------------------

double kdn_score(std::span<const knn::Neighbor> neighbors, std::uint32_t reference_label) {
    if (neighbors.empty()) throw Error(ErrorKind::invalid_argument, "kDN of an empty neighbor set");
    const auto disagree = std::count_if(neighbors.begin(), neighbors.end(),
                                        [&](const knn::Neighbor& n) { return n.label != reference_label; });
    return static_cast<double>(disagree) / static_cast<double>(neighbors.size());
}

DepthResult prediction_depth(std::span<const std::uint32_t> trace, std::uint32_t final_prediction) {
    if (trace.empty()) throw Error(ErrorKind::invalid_argument, "empty probe trace");
    const std::size_t last = trace.size() - 1;
    if (trace[last] != final_prediction) return {last, true};
    std::size_t depth = last;
    while (depth > 0 && trace[depth - 1] == final_prediction) --depth;
    return {depth, false};
}

std::optional<double> human_difficulty(std::span<const std::uint32_t> annotations, std::uint32_t ground_truth) {
    if (annotations.empty()) return std::nullopt;
    const auto disagree = std::count_if(annotations.begin(), annotations.end(),
                                        [&](std::uint32_t a) { return a != ground_truth; });
    return static_cast<double>(disagree) / static_cast<double>(annotations.size());
}

Pattern assign_pattern(const Levels& levels, bool correct) {
    if (!levels.human_high) return Pattern::unclassified;
    if (*levels.human_high) {
        if (!levels.data_high) return Pattern::p6;
        return correct ? Pattern::p5a : Pattern::p5b;
    }
    if (!levels.data_high && !levels.model_high) return correct ? Pattern::p1a : Pattern::p1b;
    if (levels.data_high && !levels.model_high) return correct ? Pattern::p2a : Pattern::p2b;
    if (!levels.data_high && levels.model_high) return correct ? Pattern::p3a : Pattern::p3b;
    return correct ? Pattern::p4a : Pattern::p4b;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw Error(ErrorKind::invalid_argument, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

ResolvedThresholds resolve_thresholds(const DifficultyConfig& config, std::span<const DifficultyProfile> profiles) {
    ResolvedThresholds t{config.fixed.data, config.fixed.model, config.fixed.human};
    if (config.threshold_mode == ThresholdMode::fixed || profiles.empty()) return t;
    std::vector<double> data, model, human;
    for (const auto& p : profiles) {
        data.push_back(p.data_kdn);
        model.push_back(p.model_difficulty);
        if (p.human_difficulty) human.push_back(*p.human_difficulty);
    }
    t.data = quantile(data, config.quantile);
    t.model = quantile(model, config.quantile);
    if (!human.empty()) t.human = quantile(human, config.quantile);
    return t;
}

Levels levels_of(const DifficultyProfile& p, const ResolvedThresholds& t) {
    Levels l;
    if (p.human_difficulty) l.human_high = *p.human_difficulty > t.human;
    l.data_high = p.data_kdn > t.data;
    l.model_high = p.model_difficulty > t.model;
    return l;
}

std::optional<std::size_t> ProfileTable::find(InstanceRef ref) const {
    // test rows come first in index order, then train rows
    auto it = std::lower_bound(profiles.begin(), profiles.end(), ref, [](const DifficultyProfile& p, InstanceRef r) {
        auto key = [](InstanceRef x) { return std::pair(x.split == Split::test ? 0 : 1, x.index); };
        return key(p.ref) < key(r);
    });
    if (it == profiles.end() || it->ref != ref) return std::nullopt;
    return static_cast<std::size_t>(it - profiles.begin());
}

ProfileTable compute_profiles(const Bundle& bundle, const ProbeSet& probes, const DifficultyConfig& config) {
    validate_config(config);
    const auto& m = bundle.manifest();
    const std::size_t num_probes = m.num_probes();
    const std::size_t layers = m.num_layers();
    if (probes.size() != num_probes) throw Error(ErrorKind::invalid_argument, "probe set does not match bundle layers");
    const std::size_t max_k = config.profile_train ? m.n_train - 1 : m.n_train;
    if (config.k > max_k) {
        throw Error(ErrorKind::invalid_argument,
                    "k=" + std::to_string(config.k) + " exceeds available training rows (" + std::to_string(max_k) + ")", "k");
    }

    std::vector<InstanceRef> refs;
    for (std::size_t i = 0; i < m.n_test; ++i) refs.push_back({Split::test, i});
    if (config.profile_train) {
        for (std::size_t i = 0; i < m.n_train; ++i) refs.push_back({Split::train, i});
    }
    for (const auto& ref : refs) {
        if (!bundle.prediction(ref)) {
            throw Error(ErrorKind::validation, "missing final prediction for profiled instance", instance_id(ref));
        }
    }

    ProfileTable table;
    table.num_probes = num_probes;
    table.k = config.k;
    table.profiles.resize(refs.size());
    table.traces.resize(refs.size());

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const InstanceRef ref = refs[i];
            DifficultyProfile& p = table.profiles[i];
            ProbeTrace& t = table.traces[i];
            p.ref = ref;
            p.label = bundle.label(ref);
            p.predicted = *bundle.prediction(ref);
            p.correct = p.label == p.predicted;
            t.ref = ref;
            t.final_prediction = p.predicted;
            t.predictions.resize(num_probes);
            p.layer_kdn.resize(num_probes);
            const std::uint32_t layer_ref = config.layer_reference == ReferenceLabel::ground_truth ? p.label : p.predicted;
            const std::uint32_t data_ref = config.data_reference == ReferenceLabel::ground_truth ? p.label : p.predicted;
            for (std::size_t probe = 0; probe < num_probes; ++probe) {
                const auto neighbors = probes.neighbors(bundle, ref, probe, config.k);
                t.predictions[probe] = knn::plurality_label(neighbors);
                p.layer_kdn[probe] = kdn_score(neighbors, layer_ref);
                if (probe == 0) p.data_kdn = kdn_score(neighbors, data_ref);
            }
            const auto depth = prediction_depth(t.predictions, t.final_prediction);
            p.prediction_depth = depth.depth;
            p.never_aligned = depth.never_aligned;
            p.model_difficulty = static_cast<double>(depth.depth) / static_cast<double>(layers);
            if (ref.split == Split::test) p.human_difficulty = human_difficulty(bundle.annotations(ref.index), p.label);
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), refs.size() / 64 + 1));
    if (workers == 1) {
        work(0, refs.size());
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (refs.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk;
            const std::size_t e = std::min(refs.size(), b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }

    table.thresholds = resolve_thresholds(config, table.profiles);
    for (auto& p : table.profiles) p.pattern = assign_pattern(levels_of(p, table.thresholds), p.correct);
    return table;
}

std::string profiles_csv(const ProfileTable& table) {
    CsvRow header = {"instance_id", "data_kdn"};
    for (std::size_t j = 0; j < table.num_probes; ++j) header.push_back("kdn_L" + std::to_string(j));
    for (const char* col : {"pd", "model_difficulty", "human_difficulty", "correct", "pattern", "never_aligned"}) {
        header.emplace_back(col);
    }
    std::string out = csv_line(header);
    for (const auto& p : table.profiles) {
        CsvRow row = {instance_id(p.ref), format_real(p.data_kdn)};
        for (double v : p.layer_kdn) row.push_back(format_real(v));
        row.push_back(std::to_string(p.prediction_depth));
        row.push_back(format_real(p.model_difficulty));
        row.push_back(p.human_difficulty ? format_real(*p.human_difficulty) : "");
        row.push_back(p.correct ? "1" : "0");
        row.emplace_back(to_string(p.pattern));
        row.push_back(p.never_aligned ? "1" : "0");
        out += csv_line(row);
    }
    return out;
}

}  // namespace difflens
