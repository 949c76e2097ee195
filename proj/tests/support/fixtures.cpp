#include "fixtures.hpp"

#include <atomic>

#include "difflens/error.hpp"

using namespace difflens;

namespace testing {

std::filesystem::path source_dir() { return DIFFLENS_SOURCE_DIR; }

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("difflens-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

BundleData random_bundle_data(std::mt19937_64& rng, const RandomBundleShape& s) {
    BundleData d;
    d.dataset_name = "random";
    for (std::size_t c = 0; c < s.classes; ++c) d.class_names.push_back("c" + std::to_string(c));
    for (std::size_t l = 0; l < s.layers; ++l) d.layer_names.push_back("h" + std::to_string(l + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::uint32_t> cls(0, static_cast<std::uint32_t>(s.classes - 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    d.train_labels.resize(s.n_train);
    d.test_labels.resize(s.n_test);
    for (auto& l : d.train_labels) l = cls(rng);
    for (auto& l : d.test_labels) l = cls(rng);

    for (std::size_t probe = 0; probe <= s.layers; ++probe) {
        // later probes separate classes better
        const double spread = s.spread * (1.0 + static_cast<double>(probe));
        std::vector<std::vector<double>> centers(s.classes, std::vector<double>(s.dim));
        for (auto& c : centers)
            for (auto& v : c) v = gauss(rng) * spread;
        auto fill = [&](const std::vector<std::uint32_t>& labels) {
            Matrix m(labels.size(), s.dim);
            for (std::size_t r = 0; r < labels.size(); ++r)
                for (std::size_t c = 0; c < s.dim; ++c) m(r, c) = static_cast<float>(centers[labels[r]][c] + gauss(rng));
            return m;
        };
        d.train_embeddings.push_back(fill(d.train_labels));
        d.test_embeddings.push_back(fill(d.test_labels));
    }
    for (auto l : d.test_labels) d.test_predictions.push_back(unit(rng) < 0.8 ? l : cls(rng));
    if (s.train_predictions) {
        for (auto l : d.train_labels) d.train_predictions.push_back(unit(rng) < 0.8 ? l : cls(rng));
    }
    d.has_annotations = s.annotations;
    if (s.annotations) {
        d.annotations.resize(s.n_test);
        for (std::size_t i = 0; i < s.n_test; ++i) {
            // some instances carry no annotations at all
            const std::size_t n = unit(rng) < 0.1 ? 0 : 1 + rng() % 5;
            for (std::size_t a = 0; a < n; ++a) {
                d.annotations[i].push_back({"a" + std::to_string(a), unit(rng) < 0.7 ? d.test_labels[i] : cls(rng)});
            }
        }
    }
    return d;
}

DifficultyConfig exact_config(std::size_t k) {
    DifficultyConfig c;
    c.k = k;
    c.probes.mode = knn::Mode::exact;
    return c;
}

ProfileTable table_from_traces(const std::vector<TraceSpec>& specs) {
    ProfileTable t;
    t.k = 1;
    t.num_probes = specs.empty() ? 0 : specs.front().trace.size();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        DifficultyProfile p;
        p.ref = {Split::test, i};
        p.label = s.label;
        p.predicted = s.final_prediction;
        p.correct = s.label == s.final_prediction;
        const auto depth = prediction_depth(s.trace, s.final_prediction);
        p.prediction_depth = depth.depth;
        p.never_aligned = depth.never_aligned;
        p.model_difficulty = t.num_probes > 1 ? static_cast<double>(depth.depth) / static_cast<double>(t.num_probes - 1) : 0.0;
        p.layer_kdn.assign(t.num_probes, 0.0);
        t.profiles.push_back(p);
        t.traces.push_back({p.ref, s.trace, s.final_prediction});
    }
    return t;
}

TraceSpec random_trace(std::mt19937_64& rng, std::size_t classes, std::size_t probes) {
    std::uniform_int_distribution<std::uint32_t> cls(0, static_cast<std::uint32_t>(classes - 1));
    TraceSpec s;
    s.label = cls(rng);
    s.final_prediction = rng() % 3 == 0 ? cls(rng) : s.label;
    const std::size_t settle = rng() % (probes + 1);  // probes means never settles
    for (std::size_t j = 0; j < probes; ++j) s.trace.push_back(j >= settle ? s.final_prediction : cls(rng));
    return s;
}

}  // namespace testing
