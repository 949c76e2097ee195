#include "difflens/projection.hpp"

#include "difflens/error.hpp"
#include "difflens/text.hpp"

namespace difflens {

ProjectionSource ProjectionSource::parse(std::string_view text, const Manifest& manifest) {
    if (text == "pixel") return {Kind::pixel, 0};
    if (text == "pattern") return {Kind::pattern, 0};
    constexpr std::string_view prefix = "layer:";
    if (text.substr(0, prefix.size()) == prefix) {
        const auto name = text.substr(prefix.size());
        const auto probe = manifest.probe_index(name);
        if (!probe || *probe == 0) throw Error(ErrorKind::not_found, "unknown layer '" + std::string(name) + "'", "source");
        return {Kind::layer, *probe};
    }
    throw Error(ErrorKind::invalid_argument, "unknown projection source '" + std::string(text) + "'", "source");
}

std::string ProjectionSource::to_string(const Manifest& manifest) const {
    switch (kind) {
        case Kind::pixel: return "pixel";
        case Kind::pattern: return "pattern";
        case Kind::layer: return "layer:" + manifest.probe_name(probe);
    }
    return "pixel";
}

std::pair<pca::PcaModel, std::vector<std::array<double, 2>>> pca_embedder(const Matrix& fit_rows, const Matrix& rows) {
    const std::size_t p = std::min<std::size_t>({2, fit_rows.rows(), fit_rows.cols()});
    auto model = pca::pca_fit(fit_rows, p);
    std::vector<std::array<double, 2>> coords(rows.rows(), {0.0, 0.0});
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto reduced = pca::pca_transform_row(model, rows.row(r));
        for (std::size_t i = 0; i < reduced.size(); ++i) coords[r][i] = reduced[i];
    }
    return {std::move(model), std::move(coords)};
}

Projection2D project_2d(const Bundle& bundle, const ProfileTable& profiles, const ProjectionSource& source,
                        const Embedder2D& embedder) {
    Projection2D out;
    out.source = source;
    for (const auto& p : profiles.profiles) out.refs.push_back(p.ref);

    if (source.kind == ProjectionSource::Kind::pattern) {
        if (profiles.profiles.empty()) throw Error(ErrorKind::not_computed, "profiles missing for pattern projection");
        Matrix vectors(profiles.profiles.size(), profiles.num_probes);
        for (std::size_t r = 0; r < profiles.profiles.size(); ++r) {
            for (std::size_t j = 0; j < profiles.num_probes; ++j) {
                vectors(r, j) = static_cast<float>(profiles.profiles[r].layer_kdn[j]);
            }
        }
        auto [model, coords] = embedder(vectors, vectors);
        model.fitted_on = "pattern/profiled";
        out.model = std::move(model);
        out.coords = std::move(coords);
        return out;
    }

    const std::size_t probe = source.kind == ProjectionSource::Kind::pixel ? 0 : source.probe;
    if (probe >= bundle.manifest().num_probes()) throw Error(ErrorKind::not_found, "unknown layer", "source");
    const Matrix& train = bundle.embeddings(Split::train, probe);
    Matrix rows(out.refs.size(), train.cols());
    for (std::size_t r = 0; r < out.refs.size(); ++r) {
        const auto src = bundle.embeddings(out.refs[r].split, probe).row(out.refs[r].index);
        std::copy(src.begin(), src.end(), rows.row(r).begin());
    }
    auto [model, coords] = embedder(train, rows);
    model.fitted_on = bundle.manifest().probe_name(probe) + "/train";
    out.model = std::move(model);
    out.coords = std::move(coords);
    return out;
}

std::string projection_csv(const Projection2D& projection) {
    std::string out = "instance_id,x,y\n";
    for (std::size_t i = 0; i < projection.refs.size(); ++i) {
        out += instance_id(projection.refs[i]) + "," + format_real(projection.coords[i][0]) + "," +
               format_real(projection.coords[i][1]) + "\n";
    }
    return out;
}

}  // namespace difflens
