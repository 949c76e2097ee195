#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "difflens/error.hpp"
#include "difflens/knn.hpp"
#include "difflens/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace difflens;

namespace {

std::shared_ptr<const Matrix> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::normal_distribution<float> g(0.0f, static_cast<float>(scale));
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = g(rng);
    return std::make_shared<const Matrix>(std::move(m));
}

std::shared_ptr<const std::vector<std::uint32_t>> random_labels(std::mt19937_64& rng, std::size_t n, std::uint32_t classes) {
    std::vector<std::uint32_t> l(n);
    for (auto& v : l) v = static_cast<std::uint32_t>(rng() % classes);
    return std::make_shared<const std::vector<std::uint32_t>>(std::move(l));
}

// Clustered data resembling a classifier's hidden space.
std::pair<std::shared_ptr<const Matrix>, std::shared_ptr<const std::vector<std::uint32_t>>> mixture(
    std::mt19937_64& rng, std::size_t n, std::size_t d, std::uint32_t classes) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> centers(classes, std::vector<double>(d));
    for (auto& c : centers)
        for (auto& v : c) v = 3.0 * g(rng);
    auto labels = random_labels(rng, n, classes);
    Matrix m(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) m(r, c) = static_cast<float>(centers[(*labels)[r]][c] + g(rng));
    return {std::make_shared<const Matrix>(std::move(m)), labels};
}

}  // namespace

TEST_SUITE("knn") {

TEST_CASE("self query returns the row at distance zero") {
    std::mt19937_64 rng(1);
    auto train = random_matrix(rng, 100, 8);
    auto idx = knn::ProbeIndex::build(train, random_labels(rng, 100, 3), 0, knn::Mode::exact);
    auto hits = idx.query(train->row(42), 3);
    CHECK(hits[0].row == 42);
    CHECK(hits[0].distance == 0.0);
}

TEST_CASE("collinear points and tie-break by row") {
    auto train = std::make_shared<const Matrix>(Matrix(4, 1, {3, 1, 2, -1}));
    auto labels = std::make_shared<const std::vector<std::uint32_t>>(std::vector<std::uint32_t>{0, 1, 2, 3});
    auto idx = knn::ProbeIndex::build(train, labels, 0, knn::Mode::exact);
    const float q[] = {0.0f};
    auto hits = idx.query(q, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].row == 1);  // distance 1; row 3 is also at 1 but has a higher index
    CHECK(hits[1].row == 3);
    hits = idx.query(q, 1);
    CHECK(hits[0].row == 1);
    const float far[] = {10.0f};
    hits = idx.query(far, 2);
    CHECK(hits[0].distance == doctest::Approx(7.0));
    CHECK(hits[1].distance == doctest::Approx(8.0));
}

TEST_CASE("exact mode equals brute force on random matrices") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n = 5 + rng() % 496, d = 1 + rng() % 32;
        auto train = random_matrix(rng, n, d);
        auto labels = random_labels(rng, n, 5);
        auto idx = knn::ProbeIndex::build(train, labels, 0, knn::Mode::exact);
        auto queries = random_matrix(rng, 10, d);
        const std::size_t k = 1 + rng() % std::min<std::size_t>(n - 1, 20);
        for (std::size_t q = 0; q < queries->rows(); ++q) {
            const auto got = idx.query(queries->row(q), k);
            const auto want = oracle::brute_knn(*train, queries->row(q), k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < k; ++i) {
                CHECK(got[i].row == want[i].row);
                CHECK(got[i].distance == doctest::Approx(want[i].distance).epsilon(1e-9));
                CHECK(got[i].label == (*labels)[want[i].row]);
            }
        }
        // leave-one-out
        const std::size_t self = rng() % n;
        const auto got = idx.query(train->row(self), k, self);
        const auto want = oracle::brute_knn(*train, train->row(self), k, self);
        for (std::size_t i = 0; i < k; ++i) CHECK(got[i].row == want[i].row);
    }
}

TEST_CASE("query argument errors") {
    std::mt19937_64 rng(3);
    auto train = random_matrix(rng, 20, 4);
    auto idx = knn::ProbeIndex::build(train, random_labels(rng, 20, 2), 0, knn::Mode::exact);
    std::vector<float> wrong(5, 0.0f), right(4, 0.0f);
    CHECK_THROWS_AS(idx.query(wrong, 3), Error);
    CHECK_THROWS_AS(idx.query(right, 0), Error);
    CHECK_THROWS_AS(idx.query(right, 21), Error);
    CHECK_THROWS_AS(idx.query(right, 20, 0), Error);  // only 19 left after exclusion
    CHECK(idx.query(right, 20).size() == 20);
    auto empty = std::make_shared<const Matrix>(Matrix(0, 4));
    CHECK_THROWS_AS(knn::ProbeIndex::build(empty, std::make_shared<const std::vector<std::uint32_t>>(), 0, knn::Mode::exact),
                    Error);
}

TEST_CASE("plurality vote") {
    std::vector<knn::Neighbor> n{{0, 0.1, 0}, {1, 0.2, 0}, {2, 0.3, 1}};
    CHECK(knn::plurality_label(n) == 0);
    std::vector<knn::Neighbor> tie{{0, 0.1, 4}, {1, 0.2, 2}};
    CHECK(knn::plurality_label(tie) == 2);
}

TEST_CASE("approximate forest is deterministic per seed") {
    std::mt19937_64 rng(4);
    auto [train, labels] = mixture(rng, 2000, 64, 10);
    knn::ForestParams p;  // T=16, M=32, seed=1
    auto a = knn::ProbeIndex::build(train, labels, 1, knn::Mode::approximate, p);
    auto b = knn::ProbeIndex::build(train, labels, 1, knn::Mode::approximate, p);
    CHECK(a.same_structure(b));
    auto queries = random_matrix(rng, 20, 64, 3.0);
    for (std::size_t q = 0; q < queries->rows(); ++q) CHECK(a.query(queries->row(q), 10) == b.query(queries->row(q), 10));
    p.seed = 2;
    auto c = knn::ProbeIndex::build(train, labels, 1, knn::Mode::approximate, p);
    CHECK_FALSE(a.same_structure(c));
}

TEST_CASE("approximate answers are well formed") {
    std::mt19937_64 rng(5);
    auto [train, labels] = mixture(rng, 600, 16, 5);
    knn::ForestParams p;
    p.trees = 2;
    p.leaf_size = 4;
    auto idx = knn::ProbeIndex::build(train, labels, 0, knn::Mode::approximate, p);
    auto queries = random_matrix(rng, 30, 16, 3.0);
    for (std::size_t q = 0; q < queries->rows(); ++q) {
        const auto hits = idx.query(queries->row(q), 10);
        REQUIRE(hits.size() == 10);
        for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].distance <= hits[i].distance);
        std::vector<std::size_t> rows;
        for (const auto& h : hits) rows.push_back(h.row);
        std::sort(rows.begin(), rows.end());
        CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
    }
}

TEST_CASE("recall: identical indices give 1, weak forests are measured") {
    std::mt19937_64 rng(6);
    auto [train, labels] = mixture(rng, 1500, 32, 10);
    auto exact = knn::ProbeIndex::build(train, labels, 0, knn::Mode::exact);
    auto queries = random_matrix(rng, 200, 32, 3.0);
    CHECK(knn::recall_eval(exact, exact, *queries, 10) == 1.0);
    knn::ForestParams weak;
    weak.trees = 1;
    weak.leaf_size = 1;
    auto approx = knn::ProbeIndex::build(train, labels, 0, knn::Mode::approximate, weak);
    const double r = knn::recall_eval(exact, approx, *queries, 10);
    MESSAGE("recall@10 with T=1, M=1: " << r);
    CHECK(r > 0.0);
    CHECK(r <= 1.0);
}

TEST_CASE("recall with duplicates counts membership by row id") {
    auto train = std::make_shared<const Matrix>(Matrix(3, 1, {1, 1, 5}));
    auto labels = std::make_shared<const std::vector<std::uint32_t>>(std::vector<std::uint32_t>{0, 0, 1});
    auto exact = knn::ProbeIndex::build(train, labels, 0, knn::Mode::exact);
    auto queries = Matrix(1, 1, {1});
    CHECK(knn::recall_eval(exact, exact, queries, 1) == 1.0);
    CHECK(exact.query(queries.row(0), 1)[0].row == 0);
}

TEST_CASE("recall does not decrease with more trees") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        std::mt19937_64 rng(seed);
        auto [train, labels] = mixture(rng, 2000, 32, 10);
        auto exact = knn::ProbeIndex::build(train, labels, 0, knn::Mode::exact);
        auto queries = random_matrix(rng, 150, 32, 3.0);
        double last = 0.0;
        for (std::size_t trees : {1u, 4u, 16u}) {
            knn::ForestParams p;
            p.trees = trees;
            p.seed = seed;
            const double r = knn::recall_eval(exact, knn::ProbeIndex::build(train, labels, 0, knn::Mode::approximate, p), *queries, 10);
            MESSAGE("seed " << seed << " T=" << trees << " recall " << r);
            CHECK(r >= last - 0.01);
            last = r;
        }
    }
}

TEST_CASE("exact knn_predict is invariant under row permutation") {
    std::mt19937_64 rng(7);
    auto [train, labels] = mixture(rng, 300, 8, 4);
    auto idx = knn::ProbeIndex::build(train, labels, 0, knn::Mode::exact);
    std::vector<std::size_t> perm(train->rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(train->rows(), train->cols());
    std::vector<std::uint32_t> shuffled_labels(train->rows());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        std::copy(train->row(perm[i]).begin(), train->row(perm[i]).end(), shuffled.row(i).begin());
        shuffled_labels[i] = (*labels)[perm[i]];
    }
    auto other = knn::ProbeIndex::build(std::make_shared<const Matrix>(std::move(shuffled)),
                                        std::make_shared<const std::vector<std::uint32_t>>(shuffled_labels), 0,
                                        knn::Mode::exact);
    auto queries = random_matrix(rng, 100, 8, 3.0);
    for (std::size_t q = 0; q < queries->rows(); ++q) {
        CHECK(knn::knn_predict(idx, queries->row(q), 7) == knn::knn_predict(other, queries->row(q), 7));
    }
}

TEST_CASE("separated clusters: knn_predict recovers every ground-truth label") {
    synth::SynthSpec spec;
    spec.noise = 0.0;
    spec.n_train = 400;
    spec.n_test = 100;
    auto data = synth::generate(spec).data;
    for (std::size_t p = 0; p < data.train_embeddings.size(); ++p) {
        auto idx = knn::ProbeIndex::build(std::make_shared<const Matrix>(data.train_embeddings[p]),
                                          std::make_shared<const std::vector<std::uint32_t>>(data.train_labels), p,
                                          knn::Mode::exact);
        for (std::size_t i = 0; i < data.test_labels.size(); ++i) {
            CHECK(knn::knn_predict(idx, data.test_embeddings[p].row(i), 10) == data.test_labels[i]);
        }
    }
}

TEST_CASE("forest cache round trip and stale rejection") {
    std::mt19937_64 rng(8);
    auto [train, labels] = mixture(rng, 500, 16, 4);
    knn::ForestParams p;
    auto idx = knn::ProbeIndex::build(train, labels, 2, knn::Mode::approximate, p);
    testing::TempDir dir("cache");
    const auto file = dir / "probe_2.dlix";
    idx.save_cache(file, 77);
    auto loaded = knn::ProbeIndex::load_cache(file, 77, train, labels, 2, p);
    REQUIRE(loaded);
    CHECK(loaded->same_structure(idx));
    CHECK_FALSE(knn::ProbeIndex::load_cache(file, 78, train, labels, 2, p));
    auto other = p;
    other.trees = 8;
    CHECK_FALSE(knn::ProbeIndex::load_cache(file, 77, train, labels, 2, other));
    auto bytes = read_file_bytes(file);
    bytes.resize(bytes.size() / 2);
    write_file_bytes(file, bytes);
    CHECK_FALSE(knn::ProbeIndex::load_cache(file, 77, train, labels, 2, p));
    CHECK_FALSE(knn::ProbeIndex::load_cache(dir / "absent.dlix", 77, train, labels, 2, p));
}

}
