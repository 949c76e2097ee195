#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "difflens/bundle.hpp"
#include "difflens/checksum.hpp"
#include "difflens/error.hpp"
#include "difflens/matrix.hpp"
#include "difflens/synth.hpp"
#include "fixtures.hpp"

using namespace difflens;
using nlohmann::json;

namespace {

synth::SynthSpec small_spec() {
    synth::SynthSpec s;
    s.classes = 4;
    s.n_train = 120;
    s.n_test = 40;
    s.input_dim = 6;
    s.layer_dims = {5, 4, 3};
    return s;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

void write_json(const std::filesystem::path& p, const json& j) {
    std::ofstream out(p);
    out << j.dump(2);
}

// Rewrites a bundle file and refreshes its manifest checksum.
void replace_file(const std::filesystem::path& dir, const std::string& key, const std::vector<std::uint8_t>& bytes) {
    auto manifest = read_json(dir / "manifest.json");
    const auto rel = manifest["files"][key]["path"].get<std::string>();
    write_file_bytes(dir / rel, bytes);
    manifest["files"][key]["crc32"] = crc32(bytes);
    write_json(dir / "manifest.json", manifest);
}

bool has_kind(const ValidationReport& r, ViolationKind k) {
    for (const auto& v : r.violations)
        if (v.kind == k) return true;
    return false;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("emb1 round trip and strict decode errors") {
    Matrix m(3, 2, {1, 2, 3, 4, 5, 6});
    const auto bytes = encode_emb1(m);
    CHECK(bytes.size() == kEmb1HeaderSize + 6 * 4);
    CHECK(decode_emb1(bytes, "m") == m);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_emb1(bad, "m"), Error);

    auto short_payload = bytes;
    short_payload.pop_back();
    try {
        decode_emb1(short_payload, "m");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
        CHECK(e.where().find("m@") == 0);
    }

    Matrix nan_m(2, 2);
    nan_m(1, 0) = std::numeric_limits<float>::quiet_NaN();
    std::vector<Emb1Issue> issues;
    CHECK_FALSE(try_decode_emb1(encode_emb1(nan_m), issues));
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].row == 1);
    CHECK(issues[0].col == 0);
    CHECK(issues[0].offset == kEmb1HeaderSize + 2 * 4);
}

TEST_CASE("bundle write/load round trip is bit exact") {
    std::mt19937_64 rng(3);
    testing::RandomBundleShape shape;
    shape.train_predictions = true;
    auto data = testing::random_bundle_data(rng, shape);
    testing::TempDir dir("rt");
    write_bundle(dir.path(), data);
    CHECK(validate_bundle(dir.path()).ok());
    auto b = load_bundle(dir.path());
    const auto& m = b->manifest();
    CHECK(m.num_probes() == 3);
    for (std::size_t p = 0; p < m.num_probes(); ++p) {
        CHECK(b->embeddings(Split::train, p) == data.train_embeddings[p]);
        CHECK(b->embeddings(Split::test, p) == data.test_embeddings[p]);
    }
    CHECK(std::vector<std::uint32_t>(b->labels(Split::test).begin(), b->labels(Split::test).end()) == data.test_labels);
    CHECK(b->prediction({Split::train, 0}) == data.train_predictions[0]);
    // in-memory validation follows the same rules and yields the same checksum
    auto again = Bundle::from_data(data, dir.path());
    CHECK(again->checksum() == b->checksum());
}

TEST_CASE("synth bundle exposes one matrix per probe and split") {
    testing::TempDir dir("synth");
    synth::SynthSpec spec;  // 10 classes, 3 layers, 2000/500
    synth::generate_to(spec, dir.path());
    auto b = load_bundle(dir.path());
    const auto& m = b->manifest();
    CHECK(m.num_classes() == 10);
    CHECK(m.num_probes() == 4);
    for (std::size_t p = 0; p < 4; ++p) {
        CHECK(b->embeddings(Split::train, p).rows() == 2000);
        CHECK(b->embeddings(Split::test, p).rows() == 500);
    }
}

TEST_CASE("row-count mismatch names the matrix") {
    testing::TempDir dir("dim");
    auto spec = small_spec();
    auto result = synth::generate_to(spec, dir.path());
    const auto& full = result.data.train_embeddings[1];
    Matrix shorter(full.rows() - 1, full.cols(),
                   std::vector<float>(full.values().begin(), full.values().end() - static_cast<long>(full.cols())));
    replace_file(dir.path(), "train/layer_1", encode_emb1(shorter));
    const auto report = validate_bundle(dir.path());
    REQUIRE_FALSE(report.ok());
    CHECK(report.violations[0].kind == ViolationKind::dimension_mismatch);
    CHECK(report.violations[0].file.find("layer_1") != std::string::npos);
    try {
        load_bundle(dir.path());
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::validation);
        CHECK(e.where().find("train/layer_1") != std::string::npos);
    }
}

TEST_CASE("NaN cell is reported with its coordinate") {
    testing::TempDir dir("nan");
    auto result = synth::generate_to(small_spec(), dir.path());
    auto m = result.data.test_embeddings[2];
    m(7, 3) = std::numeric_limits<float>::quiet_NaN();
    replace_file(dir.path(), "test/layer_2", encode_emb1(m));
    const auto report = validate_bundle(dir.path());
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].kind == ViolationKind::non_finite);
    CHECK(report.violations[0].location.find("row 7, col 3") == 0);
}

TEST_CASE("checksum mismatch, missing file and dangling annotation are violations") {
    testing::TempDir dir("viol");
    synth::generate_to(small_spec(), dir.path());
    SUBCASE("checksum") {
        auto manifest = read_json(dir.path() / "manifest.json");
        manifest["files"]["labels"]["crc32"] = 1;
        write_json(dir.path() / "manifest.json", manifest);
        CHECK(has_kind(validate_bundle(dir.path()), ViolationKind::checksum_mismatch));
    }
    SUBCASE("missing") {
        std::filesystem::remove(dir.path() / "predictions.csv");
        CHECK(has_kind(validate_bundle(dir.path()), ViolationKind::missing_file));
    }
    SUBCASE("dangling") {
        const auto text = read_file_bytes(dir.path() / "annotations.csv");
        std::string s(text.begin(), text.end());
        s += "test/99999,ann_x,0\n";
        replace_file(dir.path(), "annotations", std::vector<std::uint8_t>(s.begin(), s.end()));
        CHECK(has_kind(validate_bundle(dir.path()), ViolationKind::dangling_reference));
    }
    SUBCASE("class out of range") {
        const auto text = read_file_bytes(dir.path() / "predictions.csv");
        std::string s(text.begin(), text.end());
        const auto pos = s.find("test/0,");
        s.replace(pos, s.find('\n', pos) - pos, "test/0,99");
        replace_file(dir.path(), "predictions", std::vector<std::uint8_t>(s.begin(), s.end()));
        CHECK(has_kind(validate_bundle(dir.path()), ViolationKind::class_out_of_range));
    }
    SUBCASE("escaping path") {
        auto manifest = read_json(dir.path() / "manifest.json");
        manifest["files"]["labels"]["path"] = "../labels.csv";
        write_json(dir.path() / "manifest.json", manifest);
        CHECK(has_kind(validate_bundle(dir.path()), ViolationKind::path_escape));
    }
    // validate is empty exactly when load succeeds
    const bool ok = validate_bundle(dir.path()).ok();
    bool loaded = true;
    try {
        load_bundle(dir.path());
    } catch (const Error&) {
        loaded = false;
    }
    CHECK(ok == loaded);
}

TEST_CASE("validate is empty iff load succeeds over random corruptions") {
    std::mt19937_64 rng(11);
    testing::TempDir base("corrupt");
    synth::generate_to(small_spec(), base.path());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(base.path()))
        if (e.is_regular_file() && e.path().filename() != "expected.json") files.push_back(e.path());
    for (int trial = 0; trial < 40; ++trial) {
        testing::TempDir dir("c");
        std::filesystem::copy(base.path(), dir.path(), std::filesystem::copy_options::recursive |
                                                           std::filesystem::copy_options::overwrite_existing);
        const auto victim = dir.path() / std::filesystem::relative(files[rng() % files.size()], base.path());
        auto bytes = read_file_bytes(victim);
        if (trial % 3 == 0 && !bytes.empty()) {
            bytes.resize(rng() % bytes.size());
        } else if (!bytes.empty()) {
            bytes[rng() % bytes.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
        }
        write_file_bytes(victim, bytes);
        const bool ok = validate_bundle(dir.path()).ok();
        bool loaded = true;
        try {
            load_bundle(dir.path());
        } catch (const Error&) {
            loaded = false;
        }
        CHECK(ok == loaded);
    }
}

TEST_CASE("bundle without annotations loads") {
    std::mt19937_64 rng(5);
    testing::RandomBundleShape shape;
    shape.annotations = false;
    auto b = Bundle::from_data(testing::random_bundle_data(rng, shape));
    CHECK_FALSE(b->manifest().has_annotations);
    CHECK(b->annotations(0).empty());
}

TEST_CASE("layer name 'input' is reserved") {
    std::mt19937_64 rng(5);
    auto data = testing::random_bundle_data(rng, {});
    data.layer_names[0] = "input";
    CHECK_THROWS_AS(Bundle::from_data(data), Error);
}

TEST_CASE("instance ids") {
    CHECK(instance_id({Split::test, 12}) == "test/12");
    CHECK(parse_instance_id("train/3") == InstanceRef{Split::train, 3});
    CHECK_FALSE(parse_instance_id("train/03"));
    CHECK_FALSE(parse_instance_id("valid/3"));
    CHECK_FALSE(parse_instance_id("test/"));
}

TEST_CASE("synth is deterministic per seed") {
    testing::TempDir a("a"), b("b");
    auto spec = small_spec();
    spec.mislabeled = 3;
    spec.images = true;
    synth::generate_to(spec, a.path());
    synth::generate_to(spec, b.path());
    for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), a.path());
        CHECK_MESSAGE(read_file_bytes(e.path()) == read_file_bytes(b.path() / rel), rel.string());
    }
    spec.seed = 8;
    CHECK(synth::generate(spec).data.test_embeddings[0] != synth::generate(small_spec()).data.test_embeddings[0]);
}

TEST_CASE("synth rejects infeasible specs") {
    auto spec = small_spec();
    spec.n_train = 3;  // fewer than classes
    CHECK_THROWS_AS(synth::generate(spec), Error);
    spec = small_spec();
    spec.mislabeled = 30;
    spec.late_separators = 30;
    CHECK_THROWS_AS(synth::generate(spec), Error);
}

TEST_CASE("synth spec json round trips and rejects unknown fields") {
    const auto spec = small_spec();
    CHECK(synth::spec_to_json(synth::spec_from_json(synth::spec_to_json(spec))) == synth::spec_to_json(spec));
    try {
        synth::spec_from_json({{"n_train", 50}, {"num_classes", 4}});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_argument);
        CHECK(e.where() == "num_classes");
    }
}

TEST_CASE("synth late separators are listed in the sidecar") {
    auto spec = small_spec();
    spec.late_separators = 10;
    spec.layer_names = {"l1", "l2"};
    spec.layer_dims = {5, 4};
    spec.late_separate_probe = 2;
    const auto r = synth::generate(spec);
    const auto& g = r.expectations["groups"]["late_separator"];
    CHECK(g["ids"].size() == 10);
    CHECK(g["expected_pd"] == 2);
}

}
