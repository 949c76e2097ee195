#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "difflens/matrix.hpp"

namespace difflens::pca {

// Principal components of a data matrix, fitted by SVD of the centered data.
struct PcaModel {
    std::vector<double> mean;                // length d
    std::vector<double> components;          // p x d, row-major, rows orthonormal
    std::vector<double> explained_variance;  // length p, nonincreasing, sample variance (n - 1)
    bool degenerate = false;                 // all rows equal: variances are zero
    std::string fitted_on;                   // free-form provenance, e.g. "layer_2/train"

    std::size_t input_dim() const noexcept { return mean.size(); }
    std::size_t output_dim() const noexcept { return explained_variance.size(); }
    std::span<const double> component(std::size_t i) const {
        return {components.data() + i * input_dim(), input_dim()};
    }
};

// Throws Error(invalid_argument) when rows < 2 or p outside [1, min(rows, cols)].
// Sign convention: the largest-magnitude entry of each component is >= 0
// (first such entry on ties).
PcaModel pca_fit(const Matrix& data, std::size_t p);

// (x - mean) * components^T. Throws on column mismatch.
Matrix pca_transform(const PcaModel& model, const Matrix& data);
std::vector<double> pca_transform_row(const PcaModel& model, std::span<const float> row);

// reduced * components + mean
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced);

// Smallest p whose cumulative explained variance reaches `fraction` of the
// total (at least 1).
std::size_t components_for_variance(const PcaModel& model, double fraction);

// Numerical rank of the fitted data (variances above a relative tolerance).
std::size_t numerical_rank(const PcaModel& model);

}  // namespace difflens::pca
