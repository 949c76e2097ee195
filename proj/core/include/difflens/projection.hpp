#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "difflens/bundle.hpp"
#include "difflens/difficulty.hpp"
#include "difflens/pca.hpp"

namespace difflens {

struct ProjectionSource {
    enum class Kind { pixel, layer, pattern };
    Kind kind = Kind::pixel;
    std::size_t probe = 0;  // for Kind::layer; 1..L

    // "pixel", "pattern", or "layer:<name>"
    static ProjectionSource parse(std::string_view text, const Manifest& manifest);
    std::string to_string(const Manifest& manifest) const;

    friend bool operator==(const ProjectionSource&, const ProjectionSource&) = default;
};

struct Projection2D {
    ProjectionSource source;
    std::vector<InstanceRef> refs;  // same order as the profile table
    std::vector<std::array<double, 2>> coords;
    pca::PcaModel model;
};

// Fits a 2-D embedding on `fit_rows` and applies it to `rows`. The default is
// PCA; alternatives (e.g. a nonlinear embedder) plug in here.
using Embedder2D = std::function<std::pair<pca::PcaModel, std::vector<std::array<double, 2>>>(const Matrix& fit_rows,
                                                                                             const Matrix& rows)>;

std::pair<pca::PcaModel, std::vector<std::array<double, 2>>> pca_embedder(const Matrix& fit_rows, const Matrix& rows);

// Embedding sources are fitted on the training split and applied to every
// profiled instance; the difficulty-pattern source (per-probe kDN vectors) is
// fitted on the profiled instances themselves.
Projection2D project_2d(const Bundle& bundle, const ProfileTable& profiles, const ProjectionSource& source,
                        const Embedder2D& embedder = pca_embedder);

// instance_id,x,y
std::string projection_csv(const Projection2D& projection);

}  // namespace difflens
