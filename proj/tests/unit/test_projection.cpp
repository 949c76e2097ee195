#include <doctest.h>

#include <cmath>
#include <map>

#include "difflens/error.hpp"
#include "difflens/pca.hpp"
#include "difflens/probes.hpp"
#include "difflens/projection.hpp"
#include "difflens/synth.hpp"
#include "fixtures.hpp"

using namespace difflens;

namespace {

// Mean over classes of the mean per-point silhouette.
double class_silhouette(const std::vector<std::array<double, 2>>& pts, const std::vector<std::uint32_t>& labels) {
    std::map<std::uint32_t, std::pair<double, std::size_t>> per_class;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::map<std::uint32_t, std::pair<double, std::size_t>> dist;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            auto& d = dist[labels[j]];
            d.first += std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
            ++d.second;
        }
        const double a = dist[labels[i]].second ? dist[labels[i]].first / dist[labels[i]].second : 0.0;
        double b = INFINITY;
        for (const auto& [c, d] : dist)
            if (c != labels[i]) b = std::min(b, d.first / d.second);
        auto& acc = per_class[labels[i]];
        acc.first += (b - a) / std::max(a, b);
        ++acc.second;
    }
    double s = 0.0;
    for (const auto& [c, acc] : per_class) s += acc.first / acc.second;
    return s / per_class.size();
}

struct Setup {
    BundlePtr bundle;
    ProfileTable table;
};

Setup profiled(const BundleData& data) {
    auto bundle = Bundle::from_data(data);
    const auto config = testing::exact_config(5);
    auto probes = ProbeSet::build(bundle, config.probes);
    return {bundle, compute_profiles(*bundle, probes, config)};
}

}  // namespace

TEST_SUITE("projection") {

TEST_CASE("last-layer projection of separated clusters is class pure") {
    synth::SynthSpec spec;
    spec.classes = 5;
    spec.noise = 0.3;
    spec.separation = 6.0;
    spec.n_train = 300;
    spec.n_test = 150;
    const auto data = synth::generate(spec).data;
    const auto s = profiled(data);
    const auto& m = s.bundle->manifest();
    const auto proj = project_2d(*s.bundle, s.table, ProjectionSource::parse("layer:" + m.layer_names.back(), m));
    std::vector<std::uint32_t> labels;
    for (const auto& p : s.table.profiles) labels.push_back(p.label);
    const double sil = class_silhouette(proj.coords, labels);
    MESSAGE("silhouette " << sil);
    CHECK(sil > 0.5);
}

TEST_CASE("pixel source equals pca fit on train input plus transform") {
    std::mt19937_64 rng(51);
    const auto data = testing::random_bundle_data(rng, {});
    const auto s = profiled(data);
    const auto proj = project_2d(*s.bundle, s.table, ProjectionSource::parse("pixel", s.bundle->manifest()));
    const auto model = pca::pca_fit(data.train_embeddings[0], 2);
    const auto t = pca::pca_transform(model, data.test_embeddings[0]);
    for (std::size_t r = 0; r < s.table.profiles.size(); ++r) {
        const auto i = s.table.profiles[r].ref.index;
        CHECK(proj.coords[r][0] == doctest::Approx(t(i, 0)).epsilon(1e-5));
        CHECK(proj.coords[r][1] == doctest::Approx(t(i, 1)).epsilon(1e-5));
    }
    CHECK(projection_csv(proj).rfind("instance_id,x,y\n", 0) == 0);
}

TEST_CASE("all-zero pattern vectors land at the origin") {
    synth::SynthSpec spec;
    spec.noise = 0.0;
    spec.n_train = 200;
    spec.n_test = 40;
    const auto s = profiled(synth::generate(spec).data);
    const auto proj = project_2d(*s.bundle, s.table, ProjectionSource::parse("pattern", s.bundle->manifest()));
    for (const auto& c : proj.coords) {
        CHECK(c[0] == 0.0);
        CHECK(c[1] == 0.0);
    }
}

TEST_CASE("source parsing and errors") {
    std::mt19937_64 rng(52);
    const auto s = profiled(testing::random_bundle_data(rng, {}));
    const auto& m = s.bundle->manifest();
    CHECK(ProjectionSource::parse("layer:h2", m).probe == 2);
    CHECK(ProjectionSource::parse("layer:h2", m).to_string(m) == "layer:h2");
    CHECK_THROWS_AS(ProjectionSource::parse("layer:nope", m), Error);
    CHECK_THROWS_AS(ProjectionSource::parse("umap", m), Error);
    ProfileTable empty;
    CHECK_THROWS_AS(project_2d(*s.bundle, empty, ProjectionSource::parse("pattern", m)), Error);
}

TEST_CASE("custom embedder plugs in") {
    std::mt19937_64 rng(53);
    const auto s = profiled(testing::random_bundle_data(rng, {}));
    Embedder2D first_two = [](const Matrix&, const Matrix& rows) {
        std::vector<std::array<double, 2>> c;
        for (std::size_t r = 0; r < rows.rows(); ++r) c.push_back({rows(r, 0), rows(r, 1)});
        return std::pair{pca::PcaModel{}, c};
    };
    const auto proj = project_2d(*s.bundle, s.table, ProjectionSource::parse("pixel", s.bundle->manifest()), first_two);
    CHECK(proj.coords[0][0] == s.bundle->embeddings(Split::test, 0)(0, 0));
}

}
