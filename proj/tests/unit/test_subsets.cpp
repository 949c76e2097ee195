#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "difflens/analytics.hpp"
#include "difflens/error.hpp"
#include "difflens/probes.hpp"
#include "difflens/subsets.hpp"
#include "difflens/synth.hpp"
#include "fixtures.hpp"

using namespace difflens;
using nlohmann::json;

namespace {

struct Fixture {
    BundlePtr bundle;
    ProfileTable table;
    SelectionContext ctx() const { return {*bundle, table, 10, {}}; }
};

const Fixture& synthetic() {
    static const Fixture f = [] {
        synth::SynthSpec spec;
        spec.n_train = 400;
        spec.n_test = 150;
        spec.mislabeled = 10;
        spec.late_separators = 10;
        spec.ambiguous = 10;
        Fixture out;
        out.bundle = Bundle::from_data(synth::generate(spec).data);
        const auto config = testing::exact_config(10);
        out.table = compute_profiles(*out.bundle, ProbeSet::build(out.bundle, config.probes), config);
        return out;
    }();
    return f;
}

Members random_members(std::mt19937_64& rng, const Members& universe) {
    std::bernoulli_distribution keep(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    Members out;
    for (const auto& r : universe) {
        if (keep(rng)) out.push_back(r);
    }
    return out;
}

bool subset_of(const Members& a, const Members& b) { return std::includes(b.begin(), b.end(), a.begin(), a.end()); }

std::string fixed_clock() { return "2026-01-01T00:00:00Z"; }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_where(const json& d, const SelectionContext& ctx) {
    try {
        evaluate_selection(d, ctx);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_argument);
        return e.where();
    }
    return "<no error>";
}

}  // namespace

TEST_SUITE("subsets") {

TEST_CASE("set algebra laws") {
    std::mt19937_64 rng(5);
    Members u;
    for (std::size_t i = 0; i < 120; ++i) u.push_back({i % 2 ? Split::test : Split::train, i});
    u = normalize(u);
    const Members empty;
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_members(rng, u), b = random_members(rng, u), c = random_members(rng, u);
        using enum SetOp;
        CHECK(apply(union_, a, a) == a);
        CHECK(apply(intersection, a, a) == a);
        CHECK(apply(union_, a, b) == apply(union_, b, a));
        CHECK(apply(intersection, a, b) == apply(intersection, b, a));
        CHECK(apply(union_, apply(union_, a, b), c) == apply(union_, a, apply(union_, b, c)));
        CHECK(apply(intersection, apply(intersection, a, b), c) == apply(intersection, a, apply(intersection, b, c)));
        CHECK(complement(apply(union_, a, b), u) == apply(intersection, complement(a, u), complement(b, u)));
        CHECK(complement(apply(intersection, a, b), u) == apply(union_, complement(a, u), complement(b, u)));
        CHECK(apply(intersection, a, empty).empty());
        CHECK(subset_of(apply(difference, apply(union_, a, b), b), a));
        CHECK(apply(difference, a, b) == apply(intersection, a, complement(b, u)));
    }
}

TEST_CASE("normalize sorts and dedups") {
    Members m{{Split::test, 3}, {Split::train, 9}, {Split::test, 3}, {Split::test, 1}};
    CHECK(normalize(m) == Members{{Split::train, 9}, {Split::test, 1}, {Split::test, 3}});
}

TEST_CASE("brush equals a scan of the profiles") {
    const auto& f = synthetic();
    const json d = {{"kind", "brush"},
                    {"ranges", {{"data", {0.0, 0.2}}, {"model", {0.0, 0.2}}, {"human", {0.0, 0.2}}}}};
    const auto got = evaluate_selection(d, f.ctx());
    Members want;
    for (const auto& p : f.table.profiles) {
        if (p.data_kdn <= 0.2 && p.model_difficulty <= 0.2 && p.human_difficulty && *p.human_difficulty <= 0.2) {
            want.push_back(p.ref);
        }
    }
    CHECK(got == normalize(want));
    CHECK_FALSE(got.empty());

    const json layer = {{"kind", "brush"}, {"ranges", {{"layer:layer_2", {0.5, 1.0}}}}};
    Members want_layer;
    for (const auto& p : f.table.profiles) {
        if (p.layer_kdn[2] >= 0.5) want_layer.push_back(p.ref);
    }
    CHECK(evaluate_selection(layer, f.ctx()) == normalize(want_layer));
}

TEST_CASE("empty brush gives an empty subset") {
    const auto& f = synthetic();
    const json d = {{"kind", "brush"}, {"ranges", {{"data", {0.0, 1.0}}, {"human", {2.0, 3.0}}}}};
    CHECK(evaluate_selection(d, f.ctx()).empty());
    CHECK(error_where({{"kind", "brush"}, {"ranges", {{"data", {0.3, 0.2}}}}}, f.ctx()) == "ranges.data");
}

TEST_CASE("diagonal confusion cells select the correct instances") {
    const auto& f = synthetic();
    json cells = json::array();
    for (std::size_t c = 0; c < f.bundle->manifest().num_classes(); ++c) cells.push_back({c, c});
    Members correct;
    for (const auto& p : f.table.profiles) {
        if (p.correct) correct.push_back(p.ref);
    }
    CHECK(evaluate_selection({{"kind", "confusion"}, {"cells", cells}}, f.ctx()) == normalize(correct));
}

TEST_CASE("heatmap cells cover the whole table") {
    const auto& f = synthetic();
    json cells = json::array();
    for (std::size_t x = 0; x < 10; ++x)
        for (std::size_t y = 0; y < axis_bins(Perspective::model, 10, 3); ++y) cells.push_back({x, y});
    CHECK(evaluate_selection({{"kind", "heatmap"}, {"pair", "data/model"}, {"cells", cells}}, f.ctx()) ==
          universe(f.table));
}

TEST_CASE("patterns selection") {
    const auto& f = synthetic();
    const auto got = evaluate_selection({{"kind", "patterns"}, {"codes", {"1a"}}}, f.ctx());
    Members want;
    for (const auto& p : f.table.profiles) {
        if (p.pattern == Pattern::p1a) want.push_back(p.ref);
    }
    CHECK(got == normalize(want));
}

TEST_CASE("flow element selection") {
    const auto& f = synthetic();
    const auto top = evaluate_selection({{"kind", "flow"}, {"elements", {"c3/top"}}}, f.ctx());
    Members want;
    for (const auto& p : f.table.profiles) {
        if (p.correct) want.push_back(p.ref);
    }
    CHECK(top == normalize(want));
    CHECK(error_where({{"kind", "flow"}, {"elements", {"c0/top", "c99/top"}}}, f.ctx()) == "elements[1]");
}

TEST_CASE("projection rect and lasso agree on a square") {
    const auto& f = synthetic();
    const json rect = {{"kind", "projection_rect"}, {"source", "pixel"}, {"x", {-1.0, 1.0}}, {"y", {-1.0, 1.0}}};
    const json lasso = {{"kind", "lasso"},
                        {"source", "pixel"},
                        {"polygon", {{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}}};
    const auto a = evaluate_selection(rect, f.ctx());
    const auto b = evaluate_selection(lasso, f.ctx());
    // boundary points may differ; interiors agree
    CHECK(subset_of(b, a));
    CHECK(a.size() - b.size() <= 1);
}

TEST_CASE("bad descriptors name the offending field") {
    const auto& f = synthetic();
    const auto ctx = f.ctx();
    CHECK(error_where({{"kind", "brush"}, {"ranges", {{"dota", {0, 1}}}}}, ctx) == "ranges.dota");
    CHECK(error_where({{"kind", "brush"}, {"ranges", {{"layer:nope", {0, 1}}}}}, ctx) == "ranges.layer:nope");
    CHECK(error_where({{"kind", "heatmap"}, {"pair", "data/model"}, {"cells", {{10, 0}}}}, ctx) == "cells[0]");
    CHECK(error_where({{"kind", "confusion"}, {"cells", {{0, 0}, {0, 10}}}}, ctx) == "cells[1]");
    CHECK(error_where({{"kind", "ids"}, {"ids", {"test/0", "test/99999"}}}, ctx) == "ids[1]");
    CHECK(error_where({{"kind", "ids"}, {"ids", {"train/0"}}}, ctx) == "ids[0]");
    CHECK(error_where({{"kind", "patterns"}, {"codes", {"7z"}}}, ctx) == "codes[0]");
    CHECK(error_where({{"kind", "lasso"}, {"source", "pixel"}, {"polygon", {{0, 0}, {1, 1}}}}, ctx) == "polygon");
    CHECK(error_where({{"kind", "sparkle"}}, ctx) == "kind");
}

TEST_CASE("replay reproduces stored membership") {
    const auto& f = synthetic();
    const auto ctx = f.ctx();
    SubsetStore store(f.bundle->checksum(), fixed_clock);
    const json da = {{"kind", "brush"}, {"ranges", {{"data", {0.0, 0.3}}}}};
    const json db = {{"kind", "patterns"}, {"codes", {"1a", "2a"}}};
    const auto a = store.create("a", evaluate_selection(da, ctx), {{"select", da}});
    const auto b = store.create("b", evaluate_selection(db, ctx), {{"select", db}});
    for (auto op : {SetOp::union_, SetOp::intersection, SetOp::difference}) {
        const auto c = store.combine(a.id, b.id, op, "c");
        CHECK(c.members == apply(op, a.members, b.members));
        CHECK(replay(c.provenance, ctx) == c.members);
    }
    CHECK(replay(a.provenance, ctx) == a.members);
}

TEST_CASE("save and load are byte-stable") {
    const auto& f = synthetic();
    std::mt19937_64 rng(17);
    const auto u = universe(f.table);
    SubsetStore store(f.bundle->checksum(), fixed_clock);
    for (int i = 0; i < 10; ++i) {
        const auto m = random_members(rng, u);
        json ids = json::array();
        for (const auto& r : m) ids.push_back(instance_id(r));
        store.create("random " + std::to_string(i), m, {{"members", ids}});
    }
    testing::TempDir dir("subsets");
    store.save(dir / "a.json");
    auto loaded = SubsetStore::load(dir / "a.json", f.bundle->checksum(), fixed_clock);
    CHECK(loaded.warnings.empty());
    CHECK(loaded.store->list() == store.list());
    loaded.store->save(dir / "b.json");
    // revisions differ by construction; everything else must match
    auto strip = [](std::string text) {
        auto j = json::parse(text);
        j.erase("revision");
        return j.dump(2);
    };
    CHECK(strip(slurp(dir / "a.json")) == strip(slurp(dir / "b.json")));
    CHECK(slurp(dir / "a.json") == store.to_json_text());
    const auto again = SubsetStore::from_json_text(store.to_json_text(), f.bundle->checksum(), fixed_clock);
    CHECK(again.store->to_json_text() == store.to_json_text());
}

TEST_CASE("stale provenance and version mismatch") {
    SubsetStore store(1234, fixed_clock);
    store.create("x", {{Split::test, 1}}, {{"members", {"test/1"}}});
    const auto text = store.to_json_text();
    const auto stale = SubsetStore::from_json_text(text, 999, fixed_clock);
    REQUIRE(stale.warnings.size() == 1);
    CHECK(stale.warnings[0].find("stale") != std::string::npos);
    CHECK(stale.store->list().size() == 1);

    auto j = json::parse(text);
    j["version"] = 2;
    try {
        SubsetStore::from_json_text(j.dump(), 1234, fixed_clock);
        FAIL("expected a conflict");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::conflict);
    }
}

TEST_CASE("concurrent saves keep the on-disk revision increasing") {
    testing::TempDir dir("concurrent");
    const auto path = dir / "subsets.json";
    SubsetStore a(7, fixed_clock), b(7, fixed_clock);
    a.create("a", {{Split::test, 0}}, {{"members", {"test/0"}}});
    b.create("b", {{Split::test, 1}}, {{"members", {"test/1"}}});
    std::vector<std::uint64_t> ra, rb;
    {
        std::jthread ta([&] {
            for (int i = 0; i < 25; ++i) ra.push_back(a.save(path));
        });
        std::jthread tb([&] {
            for (int i = 0; i < 25; ++i) rb.push_back(b.save(path));
        });
    }
    CHECK(std::is_sorted(ra.begin(), ra.end()));
    CHECK(std::adjacent_find(ra.begin(), ra.end()) == ra.end());
    CHECK(std::adjacent_find(rb.begin(), rb.end()) == rb.end());
    std::vector<std::uint64_t> all = ra;
    all.insert(all.end(), rb.begin(), rb.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    const auto final_rev = json::parse(slurp(path))["revision"].get<std::uint64_t>();
    CHECK(final_rev == all.back());
}

TEST_CASE("combining across bundles is a conflict") {
    auto text = [] {
        SubsetStore s(1, fixed_clock);
        s.create("x", {{Split::test, 1}}, {{"members", {"test/1"}}});
        return s.to_json_text();
    }();
    auto loaded = SubsetStore::from_json_text(text, 2, fixed_clock);
    auto& store = *loaded.store;
    const auto fresh = store.create("y", {{Split::test, 2}}, {{"members", {"test/2"}}});
    const auto old_id = store.list().front().id;
    try {
        store.combine(old_id, fresh.id, SetOp::union_, "z");
        FAIL("expected a conflict");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::conflict);
    }
}

TEST_CASE("unknown ids and removal") {
    SubsetStore store(1, fixed_clock);
    const auto s = store.create("", {{Split::test, 1}}, {{"members", {"test/1"}}});
    CHECK(s.name == s.id);
    CHECK_THROWS_AS(store.combine(s.id, "s999", SetOp::union_, "z"), Error);
    const auto before = store.revision();
    CHECK(store.remove(s.id));
    CHECK(store.revision() > before);
    CHECK_FALSE(store.remove(s.id));
    CHECK_FALSE(store.get(s.id));
}

TEST_CASE("csv round trip") {
    Subset s;
    s.members = normalize({{Split::test, 4}, {Split::train, 2}, {Split::test, 0}});
    const auto csv = subset_csv(s);
    CHECK(csv.rfind("instance_id\n", 0) == 0);
    CHECK(members_from_csv(csv) == s.members);
    CHECK(members_from_csv("test/0\ntrain/2\ntest/4\n") == s.members);
    CHECK_THROWS_AS(members_from_csv("instance_id\nbogus\n"), Error);
}

TEST_CASE("subset json round trip") {
    Subset s{"s3", "name", normalize({{Split::test, 2}}), {{"members", {"test/2"}}}, "2026-01-01T00:00:00Z", 42};
    CHECK(subset_from_json(subset_to_json(s)) == s);
}

}
