#include "difflens/pca.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "difflens/error.hpp"

namespace difflens::pca {

PcaModel pca_fit(const Matrix& data, std::size_t p) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    if (n < 2) throw Error(ErrorKind::invalid_argument, "PCA needs at least 2 rows");
    if (p < 1 || p > std::min(n, d)) {
        throw Error(ErrorKind::invalid_argument,
                    "PCA components p=" + std::to_string(p) + " outside [1, " + std::to_string(std::min(n, d)) + "]");
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data(r, c);
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const Eigen::MatrixXd& v = svd.matrixV();

    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + d);
    model.components.resize(p * d);
    model.explained_variance.resize(p);
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < p; ++i) {
        Eigen::VectorXd comp = v.col(static_cast<Eigen::Index>(i));
        Eigen::Index lead = 0;
        for (Eigen::Index j = 1; j < comp.size(); ++j) {
            if (std::abs(comp(j)) > std::abs(comp(lead))) lead = j;
        }
        if (comp(lead) < 0) comp = -comp;
        std::copy(comp.data(), comp.data() + d, model.components.begin() + static_cast<std::ptrdiff_t>(i * d));
        const double s = sv(static_cast<Eigen::Index>(i));
        model.explained_variance[i] = s * s / denom;
    }
    model.degenerate = sv.size() == 0 || sv(0) == 0.0;
    return model;
}

std::vector<double> pca_transform_row(const PcaModel& model, std::span<const float> row) {
    const std::size_t d = model.input_dim();
    if (row.size() != d) {
        throw Error(ErrorKind::invalid_argument,
                    "PCA input has " + std::to_string(row.size()) + " columns, model expects " + std::to_string(d));
    }
    std::vector<double> out(model.output_dim(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto comp = model.component(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += (static_cast<double>(row[j]) - model.mean[j]) * comp[j];
        out[i] = acc;
    }
    return out;
}

Matrix pca_transform(const PcaModel& model, const Matrix& data) {
    if (data.cols() != model.input_dim() && data.rows() > 0) {
        throw Error(ErrorKind::invalid_argument, "PCA input has " + std::to_string(data.cols()) +
                                                     " columns, model expects " + std::to_string(model.input_dim()));
    }
    Matrix out(data.rows(), model.output_dim());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto reduced = pca_transform_row(model, data.row(r));
        std::transform(reduced.begin(), reduced.end(), out.row(r).begin(), [](double v) { return static_cast<float>(v); });
    }
    return out;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced) {
    if (reduced.cols() != model.output_dim() && reduced.rows() > 0) {
        throw Error(ErrorKind::invalid_argument, "reduced matrix width does not match model components");
    }
    const std::size_t d = model.input_dim();
    Matrix out(reduced.rows(), d);
    for (std::size_t r = 0; r < reduced.rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = model.mean[j];
            for (std::size_t i = 0; i < model.output_dim(); ++i) acc += reduced(r, i) * model.components[i * d + j];
            out(r, j) = static_cast<float>(acc);
        }
    }
    return out;
}

std::size_t components_for_variance(const PcaModel& model, double fraction) {
    double total = 0.0;
    for (double v : model.explained_variance) total += v;
    if (total <= 0.0) return 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < model.explained_variance.size(); ++i) {
        acc += model.explained_variance[i];
        if (acc >= fraction * total) return i + 1;
    }
    return model.explained_variance.size();
}

std::size_t numerical_rank(const PcaModel& model) {
    if (model.explained_variance.empty() || model.explained_variance.front() <= 0.0) return 0;
    const double tol = model.explained_variance.front() * 1e-12;
    return static_cast<std::size_t>(std::count_if(model.explained_variance.begin(), model.explained_variance.end(),
                                                  [tol](double v) { return v > tol; }));
}

}  // namespace difflens::pca
