#include "difflens/probes.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <string>
#include <thread>

#include "difflens/checksum.hpp"
#include "difflens/error.hpp"

namespace difflens {

std::vector<float> ProbeSpace::prepare(std::span<const float> raw) const {
    std::vector<float> v(raw.begin(), raw.end());
    if (zscore_) {
        const auto& [mean, sd] = *zscore_;
        if (v.size() != mean.size()) throw Error(ErrorKind::invalid_argument, "embedding width mismatch");
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = static_cast<float>((v[j] - mean[j]) / sd[j]);
    }
    if (pca_) {
        const auto reduced = pca::pca_transform_row(*pca_, v);
        v.assign(reduced.begin(), reduced.end());
    }
    return v;
}

namespace {

std::uint32_t cache_tag(std::uint32_t bundle_checksum, const ProbeOptions& options, std::size_t probe) {
    const std::string key = std::to_string(bundle_checksum) + "|" + std::to_string(probe) + "|" +
                            std::to_string(options.pca_max_dims) + "|" + (options.zscore ? "z" : "raw");
    return crc32(std::span(reinterpret_cast<const std::uint8_t*>(key.data()), key.size()));
}

ProbeSpace build_space(const BundlePtr& bundle, std::size_t probe, const ProbeOptions& options,
                       const std::shared_ptr<const std::vector<std::uint32_t>>& labels) {
    const Matrix& raw = bundle->embeddings(Split::train, probe);
    std::shared_ptr<const Matrix> train(bundle, &raw);

    std::optional<std::pair<std::vector<double>, std::vector<double>>> zscore;
    if (options.zscore) {
        std::vector<double> mean(raw.cols(), 0.0), sd(raw.cols(), 0.0);
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            for (std::size_t c = 0; c < raw.cols(); ++c) mean[c] += raw(r, c);
        }
        for (auto& m : mean) m /= static_cast<double>(raw.rows());
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            for (std::size_t c = 0; c < raw.cols(); ++c) sd[c] += (raw(r, c) - mean[c]) * (raw(r, c) - mean[c]);
        }
        for (auto& s : sd) {
            s = std::sqrt(s / static_cast<double>(std::max<std::size_t>(raw.rows() - 1, 1)));
            if (s == 0.0) s = 1.0;  // constant column
        }
        auto z = std::make_shared<Matrix>(raw.rows(), raw.cols());
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            for (std::size_t c = 0; c < raw.cols(); ++c) (*z)(r, c) = static_cast<float>((raw(r, c) - mean[c]) / sd[c]);
        }
        zscore.emplace(std::move(mean), std::move(sd));
        train = z;
    }

    std::optional<pca::PcaModel> model;
    if (train->cols() > options.pca_max_dims && train->rows() >= 2) {
        const std::size_t p = std::min({options.pca_max_dims, train->rows(), train->cols()});
        auto fitted = pca::pca_fit(*train, p);
        const std::size_t keep = std::max<std::size_t>(1, std::min(p, pca::numerical_rank(fitted)));
        fitted.components.resize(keep * fitted.input_dim());
        fitted.explained_variance.resize(keep);
        fitted.fitted_on = bundle->manifest().probe_name(probe) + "/train";
        train = std::make_shared<Matrix>(pca::pca_transform(fitted, *train));
        model = std::move(fitted);
    }

    if (options.mode == knn::Mode::approximate && options.cache_dir) {
        const auto tag = cache_tag(bundle->checksum(), options, probe);
        const auto path = *options.cache_dir / ("probe_" + std::to_string(probe) + ".dlix");
        if (auto cached = knn::ProbeIndex::load_cache(path, tag, train, labels, probe, options.forest)) {
            return ProbeSpace(probe, std::move(zscore), std::move(model), std::move(*cached));
        }
        auto index = knn::ProbeIndex::build(train, labels, probe, options.mode, options.forest);
        try {
            index.save_cache(path, tag);
        } catch (const std::exception&) {
            // cache is best effort
        }
        return ProbeSpace(probe, std::move(zscore), std::move(model), std::move(index));
    }
    auto index = knn::ProbeIndex::build(train, labels, probe, options.mode, options.forest);
    return ProbeSpace(probe, std::move(zscore), std::move(model), std::move(index));
}

}  // namespace

ProbeSet ProbeSet::build(const BundlePtr& bundle, const ProbeOptions& options) {
    if (bundle->manifest().n_train == 0) throw Error(ErrorKind::invalid_argument, "cannot build probes: empty training split");
    const auto labels = std::make_shared<const std::vector<std::uint32_t>>(bundle->labels(Split::train).begin(),
                                                                          bundle->labels(Split::train).end());
    const std::size_t probes = bundle->manifest().num_probes();
    ProbeSet set;
    set.options_ = options;
    if (std::thread::hardware_concurrency() > 1) {
        std::vector<std::future<ProbeSpace>> jobs;
        for (std::size_t p = 0; p < probes; ++p) {
            jobs.push_back(std::async(std::launch::async, build_space, std::cref(bundle), p, std::cref(options),
                                      std::cref(labels)));
        }
        for (auto& j : jobs) set.spaces_.push_back(j.get());
    } else {
        for (std::size_t p = 0; p < probes; ++p) set.spaces_.push_back(build_space(bundle, p, options, labels));
    }
    return set;
}

std::vector<knn::Neighbor> ProbeSet::neighbors(const Bundle& bundle, InstanceRef ref, std::size_t probe,
                                               std::size_t k) const {
    const auto& space = spaces_.at(probe);
    const auto raw = bundle.embeddings(ref.split, probe).row(ref.index);
    const auto prepared = space.prepare(raw);
    if (ref.split == Split::train) return space.index().query(prepared, k, ref.index);
    return space.index().query(prepared, k);
}

}  // namespace difflens
