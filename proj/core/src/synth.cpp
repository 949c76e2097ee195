#include "difflens/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <zlib.h>

#include "difflens/checksum.hpp"
#include "difflens/error.hpp"

namespace difflens::synth {

using nlohmann::json;

SynthSpec spec_from_json(const json& j) {
    SynthSpec s;
    auto get = [&](const char* key, auto& field) {
        if (auto it = j.find(key); it != j.end()) {
            try {
                it->get_to(field);
            } catch (const json::exception& e) {
                throw Error(ErrorKind::invalid_argument, std::string("bad value for '") + key + "': " + e.what(), key);
            }
        }
    };
    if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "synth spec must be a JSON object");
    static const std::set<std::string> known = {
        "dataset_name", "classes", "layers", "input_dim", "layer_dims", "n_train", "n_test", "separation", "noise",
        "late_separators", "late_separate_probe", "overlap_weight", "mislabeled", "spurious", "ambiguous",
        "has_annotations", "annotators", "annotator_noise", "ambiguous_agreement", "train_predictions", "images", "seed"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw Error(ErrorKind::invalid_argument, "unknown synth spec field '" + key + "'", key);
    }
    get("dataset_name", s.dataset_name);
    get("classes", s.classes);
    get("layers", s.layer_names);
    get("input_dim", s.input_dim);
    get("layer_dims", s.layer_dims);
    get("n_train", s.n_train);
    get("n_test", s.n_test);
    get("separation", s.separation);
    get("noise", s.noise);
    get("late_separators", s.late_separators);
    get("late_separate_probe", s.late_separate_probe);
    get("overlap_weight", s.overlap_weight);
    get("mislabeled", s.mislabeled);
    get("spurious", s.spurious);
    get("ambiguous", s.ambiguous);
    get("has_annotations", s.has_annotations);
    get("annotators", s.annotators);
    get("annotator_noise", s.annotator_noise);
    get("ambiguous_agreement", s.ambiguous_agreement);
    get("train_predictions", s.train_predictions);
    get("images", s.images);
    get("seed", s.seed);
    if (j.contains("layers") && !j.contains("layer_dims")) s.layer_dims.assign(s.layer_names.size(), 16);
    return s;
}

json spec_to_json(const SynthSpec& s) {
    return json{{"dataset_name", s.dataset_name},
                {"classes", s.classes},
                {"layers", s.layer_names},
                {"input_dim", s.input_dim},
                {"layer_dims", s.layer_dims},
                {"n_train", s.n_train},
                {"n_test", s.n_test},
                {"separation", s.separation},
                {"noise", s.noise},
                {"late_separators", s.late_separators},
                {"late_separate_probe", s.late_separate_probe},
                {"overlap_weight", s.overlap_weight},
                {"mislabeled", s.mislabeled},
                {"spurious", s.spurious},
                {"ambiguous", s.ambiguous},
                {"has_annotations", s.has_annotations},
                {"annotators", s.annotators},
                {"annotator_noise", s.annotator_noise},
                {"ambiguous_agreement", s.ambiguous_agreement},
                {"train_predictions", s.train_predictions},
                {"images", s.images},
                {"seed", s.seed}};
}

namespace {

void check_feasible(const SynthSpec& s) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, "infeasible synth spec: " + msg); };
    if (s.classes < 2) fail("need at least 2 classes");
    if (s.layer_names.empty()) fail("need at least 1 layer");
    if (s.layer_dims.size() != s.layer_names.size()) fail("layer_dims must match layers");
    if (s.input_dim == 0 || std::find(s.layer_dims.begin(), s.layer_dims.end(), 0u) != s.layer_dims.end()) {
        fail("dimensions must be positive");
    }
    if (s.classes > s.n_train) fail("more classes than training instances");
    if (s.classes > s.n_test) fail("more classes than test instances");
    if (s.late_separators + s.mislabeled + s.spurious + s.ambiguous > s.n_test) {
        fail("planted instances exceed n_test");
    }
    if (s.late_separate_probe > s.layer_names.size()) fail("late_separate_probe beyond last layer");
    if (s.late_separators > 0 && s.late_separate_probe == 0 && s.layer_names.empty()) fail("no probe to separate at");
    if (s.noise < 0 || s.separation < 0) fail("noise and separation must be nonnegative");
    if (s.overlap_weight <= 0.5 || s.overlap_weight > 1.0) fail("overlap_weight must be in (0.5, 1]");
    if (s.has_annotations && s.annotators == 0) fail("annotations requested with zero annotators");
    if (s.annotator_noise < 0 || s.annotator_noise > 1) fail("annotator_noise must be in [0, 1]");
    if (s.ambiguous_agreement < 0 || s.ambiguous_agreement > 1) fail("ambiguous_agreement must be in [0, 1]");
}

// 8x8 RGB PNG filled with one color; deterministic bytes.
std::vector<std::uint8_t> solid_png(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    constexpr std::uint32_t side = 8;
    std::vector<std::uint8_t> raw;
    for (std::uint32_t y = 0; y < side; ++y) {
        raw.push_back(0);
        for (std::uint32_t x = 0; x < side; ++x) {
            raw.push_back(r);
            raw.push_back(g);
            raw.push_back(b);
        }
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(zlen);
    compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9);
    z.resize(zlen);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    auto be32 = [](std::vector<std::uint8_t>& v, std::uint32_t x) {
        for (int i = 3; i >= 0; --i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    };
    auto chunk = [&](const char* type, const std::vector<std::uint8_t>& data) {
        be32(out, static_cast<std::uint32_t>(data.size()));
        std::vector<std::uint8_t> body(type, type + 4);
        body.insert(body.end(), data.begin(), data.end());
        out.insert(out.end(), body.begin(), body.end());
        be32(out, crc32(body));
    };
    std::vector<std::uint8_t> ihdr;
    be32(ihdr, side);
    be32(ihdr, side);
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
    chunk("IHDR", ihdr);
    chunk("IDAT", z);
    chunk("IEND", {});
    return out;
}

}  // namespace

SynthResult generate(const SynthSpec& spec) {
    check_feasible(spec);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t C = spec.classes;
    const std::size_t L = spec.layer_names.size();
    const std::size_t probes = L + 1;
    const std::size_t separate_probe = spec.late_separate_probe == 0 ? L : spec.late_separate_probe;

    std::vector<std::size_t> dims{spec.input_dim};
    dims.insert(dims.end(), spec.layer_dims.begin(), spec.layer_dims.end());

    // centers[probe][class] -> coordinates
    std::vector<std::vector<std::vector<double>>> centers(probes);
    for (std::size_t p = 0; p < probes; ++p) {
        centers[p].resize(C);
        for (std::size_t c = 0; c < C; ++c) {
            centers[p][c].resize(dims[p]);
            for (auto& v : centers[p][c]) v = spec.separation * normal(rng);
        }
    }

    auto other_class = [&](std::size_t c) {
        std::uniform_int_distribution<std::size_t> pick(1, C - 1);
        return (c + pick(rng)) % C;
    };

    // Placement of one point: weight `w` on class `a`, (1 - w) on class `b`.
    auto emit = [&](Matrix& m, std::size_t row, std::size_t p, std::size_t a, std::size_t b, double w) {
        auto out = m.row(row);
        for (std::size_t d = 0; d < dims[p]; ++d) {
            const double base = w * centers[p][a][d] + (1.0 - w) * centers[p][b][d];
            out[d] = static_cast<float>(base + spec.noise * normal(rng));
        }
    };

    SynthResult result;
    BundleData& data = result.data;
    data.dataset_name = spec.dataset_name;
    for (std::size_t c = 0; c < C; ++c) data.class_names.push_back("class_" + std::to_string(c));
    data.layer_names = spec.layer_names;

    data.train_labels.resize(spec.n_train);
    for (std::size_t i = 0; i < spec.n_train; ++i) data.train_labels[i] = static_cast<std::uint32_t>(i % C);
    std::shuffle(data.train_labels.begin(), data.train_labels.end(), rng);
    for (std::size_t p = 0; p < probes; ++p) {
        Matrix m(spec.n_train, dims[p]);
        for (std::size_t i = 0; i < spec.n_train; ++i) emit(m, i, p, data.train_labels[i], data.train_labels[i], 1.0);
        data.train_embeddings.push_back(std::move(m));
    }
    if (spec.train_predictions) {
        for (auto y : data.train_labels) data.train_predictions.emplace_back(y);
    }

    // Test roles
    enum class Role { clean, late, mislabeled, spurious, ambiguous };
    std::vector<Role> roles(spec.n_test, Role::clean);
    {
        std::vector<std::size_t> order(spec.n_test);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t at = 0;
        auto assign = [&](std::size_t count, Role role) {
            for (std::size_t i = 0; i < count; ++i) roles[order[at++]] = role;
        };
        assign(spec.late_separators, Role::late);
        assign(spec.mislabeled, Role::mislabeled);
        assign(spec.spurious, Role::spurious);
        assign(spec.ambiguous, Role::ambiguous);
    }

    data.test_labels.resize(spec.n_test);
    data.test_predictions.resize(spec.n_test);
    std::vector<std::size_t> partner(spec.n_test);  // decoy / true appearance / confused class
    for (std::size_t i = 0; i < spec.n_test; ++i) {
        data.test_labels[i] = static_cast<std::uint32_t>(i % C);
        partner[i] = roles[i] == Role::clean || roles[i] == Role::ambiguous ? data.test_labels[i]
                                                                             : other_class(data.test_labels[i]);
    }
    for (std::size_t p = 0; p < probes; ++p) data.test_embeddings.emplace_back(spec.n_test, dims[p]);
    for (std::size_t i = 0; i < spec.n_test; ++i) {
        const std::size_t y = data.test_labels[i];
        const std::size_t z = partner[i];
        for (std::size_t p = 0; p < probes; ++p) {
            Matrix& m = data.test_embeddings[p];
            switch (roles[i]) {
                case Role::clean:
                case Role::ambiguous: emit(m, i, p, y, y, 1.0); break;
                case Role::late:
                    if (p < separate_probe) {
                        emit(m, i, p, z, y, spec.overlap_weight);
                    } else {
                        emit(m, i, p, y, y, 1.0);
                    }
                    break;
                case Role::mislabeled: emit(m, i, p, z, z, 1.0); break;
                case Role::spurious: emit(m, i, p, p == 0 ? y : z, p == 0 ? y : z, 1.0); break;
            }
        }
        const bool fooled = roles[i] == Role::mislabeled || roles[i] == Role::spurious;
        data.test_predictions[i] = static_cast<std::uint32_t>(fooled ? z : y);
    }

    data.has_annotations = spec.has_annotations;
    if (spec.has_annotations) {
        data.annotations.resize(spec.n_test);
        for (std::size_t i = 0; i < spec.n_test; ++i) {
            const std::size_t y = data.test_labels[i];
            // what a human sees: the cluster of the pixel-space appearance
            const std::size_t seen = roles[i] == Role::mislabeled ? partner[i] : y;
            const double agree = roles[i] == Role::ambiguous ? spec.ambiguous_agreement : 1.0 - spec.annotator_noise;
            for (std::size_t a = 0; a < spec.annotators; ++a) {
                const std::size_t label = unit(rng) < agree ? seen : other_class(seen);
                data.annotations[i].emplace_back("a" + std::to_string(a), static_cast<std::uint32_t>(label));
            }
        }
    }

    if (spec.images) {
        std::vector<std::vector<std::uint8_t>> swatches;
        for (std::size_t c = 0; c < C; ++c) {
            const auto hue = static_cast<std::uint8_t>((c * 255) / C);
            swatches.push_back(solid_png(hue, static_cast<std::uint8_t>(255 - hue), static_cast<std::uint8_t>(128)));
        }
        auto add_image = [&](InstanceRef ref, std::size_t appearance) {
            const std::string rel = "images/" + std::string(to_string(ref.split)) + "_" + std::to_string(ref.index) + ".png";
            data.images[instance_id(ref)] = rel;
            data.extra_files[rel] = swatches[appearance];
        };
        for (std::size_t i = 0; i < spec.n_train; ++i) add_image({Split::train, i}, data.train_labels[i]);
        for (std::size_t i = 0; i < spec.n_test; ++i) {
            add_image({Split::test, i}, roles[i] == Role::mislabeled ? partner[i] : data.test_labels[i]);
        }
    }

    // Expectations sidecar
    json groups = json::object();
    auto ids_of = [&](Role role) {
        json ids = json::array();
        for (std::size_t i = 0; i < spec.n_test; ++i) {
            if (roles[i] == role) ids.push_back(instance_id({Split::test, i}));
        }
        return ids;
    };
    groups["clean"] = {{"ids", ids_of(Role::clean)}, {"expected_pd", 0}, {"expected_correct", true}};
    groups["late_separator"] = {{"ids", ids_of(Role::late)},
                                {"expected_pd", separate_probe},
                                {"expected_correct", true}};
    groups["mislabeled"] = {{"ids", ids_of(Role::mislabeled)},
                            {"expected_min_data_kdn", 0.8},
                            {"expected_correct", false}};
    json confused = json::object();
    for (std::size_t i = 0; i < spec.n_test; ++i) {
        if (roles[i] == Role::spurious) confused[instance_id({Split::test, i})] = partner[i];
    }
    groups["spurious"] = {{"ids", ids_of(Role::spurious)},
                          {"expected_pd", 1},
                          {"expected_correct", false},
                          {"predicted", confused}};
    groups["ambiguous"] = {{"ids", ids_of(Role::ambiguous)}, {"expected_pd", 0}, {"expected_correct", true}};

    std::size_t correct = 0;
    for (std::size_t i = 0; i < spec.n_test; ++i) correct += data.test_predictions[i] == data.test_labels[i];
    const bool degenerate = spec.noise == 0.0 && spec.late_separators + spec.mislabeled + spec.spurious == 0;
    result.expectations = json{{"spec", spec_to_json(spec)},
                               {"num_layers", L},
                               {"groups", groups},
                               {"accuracy", static_cast<double>(correct) / static_cast<double>(spec.n_test)},
                               {"clean_max_mean_data_kdn", 0.05},
                               {"all_zero_difficulty", degenerate}};
    return result;
}

SynthResult generate_to(const SynthSpec& spec, const std::filesystem::path& dir) {
    auto result = generate(spec);
    write_bundle(dir, result.data);
    const std::string text = result.expectations.dump(2) + "\n";
    write_file_bytes(dir / kSidecarName, std::vector<std::uint8_t>(text.begin(), text.end()));
    return result;
}

}  // namespace difflens::synth
