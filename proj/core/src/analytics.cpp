#include "difflens/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "difflens/error.hpp"

namespace difflens {

std::string_view to_string(Perspective p) {
    switch (p) {
        case Perspective::data: return "data";
        case Perspective::model: return "model";
        case Perspective::human: return "human";
    }
    return "data";
}

std::optional<Perspective> parse_perspective(std::string_view s) {
    if (s == "data") return Perspective::data;
    if (s == "model") return Perspective::model;
    if (s == "human") return Perspective::human;
    return std::nullopt;
}

PerspectivePair PerspectivePair::parse(std::string_view s) {
    const auto slash = s.find('/');
    if (slash != std::string_view::npos) {
        auto x = parse_perspective(s.substr(0, slash));
        auto y = parse_perspective(s.substr(slash + 1));
        if (x && y && *x != *y) return {*x, *y};
    }
    throw Error(ErrorKind::invalid_argument, "unknown perspective pair '" + std::string(s) + "'", "pair");
}

std::string PerspectivePair::to_string() const {
    return std::string(difflens::to_string(x)) + "/" + std::string(difflens::to_string(y));
}

std::size_t axis_bins(Perspective p, std::size_t bins, std::size_t num_layers) {
    return p == Perspective::model ? num_layers + 1 : bins;
}

std::optional<double> perspective_value(Perspective p, const DifficultyProfile& profile) {
    switch (p) {
        case Perspective::data: return profile.data_kdn;
        case Perspective::model: return profile.model_difficulty;
        case Perspective::human: return profile.human_difficulty;
    }
    return std::nullopt;
}

std::optional<std::size_t> axis_bin(Perspective p, const DifficultyProfile& profile, std::size_t bins,
                                     std::size_t num_layers) {
    if (p == Perspective::model) return std::min(profile.prediction_depth, num_layers);
    const auto v = perspective_value(p, profile);
    if (!v) return std::nullopt;
    const auto b = static_cast<std::size_t>(std::floor(std::clamp(*v, 0.0, 1.0) * static_cast<double>(bins)));
    return std::min(b, bins - 1);
}

Heatmap difficulty_heatmap(const ProfileTable& table, std::span<const std::size_t> rows, PerspectivePair pair,
                           std::size_t bins) {
    if (bins < 1) throw Error(ErrorKind::invalid_argument, "bins must be >= 1", "bins");
    const std::size_t layers = table.num_probes - 1;
    Heatmap h;
    h.pair = pair;
    h.x_bins = axis_bins(pair.x, bins, layers);
    h.y_bins = axis_bins(pair.y, bins, layers);
    h.counts.assign(h.x_bins, std::vector<std::size_t>(h.y_bins, 0));
    h.x_marginal.assign(h.x_bins, 0);
    h.y_marginal.assign(h.y_bins, 0);
    for (auto r : rows) {
        const auto& p = table.profiles.at(r);
        const auto bx = axis_bin(pair.x, p, bins, layers);
        const auto by = axis_bin(pair.y, p, bins, layers);
        if (!bx || !by) {
            ++h.excluded_absent;
            continue;
        }
        ++h.counts[*bx][*by];
        ++h.x_marginal[*bx];
        ++h.y_marginal[*by];
        ++h.total;
    }
    return h;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const ProfileTable& table, std::span<const std::size_t> rows,
                                                       std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (auto r : rows) {
        const auto& p = table.profiles.at(r);
        ++m.at(p.label).at(p.predicted);
    }
    return m;
}

std::map<std::string, std::size_t> pattern_counts(const ProfileTable& table, std::span<const std::size_t> rows) {
    std::map<std::string, std::size_t> counts;
    for (auto code : kTaxonomyCodes) counts[std::string(to_string(code))] = 0;
    counts["unclassified"] = 0;
    for (auto r : rows) ++counts[std::string(to_string(table.profiles.at(r).pattern))];
    return counts;
}

RunSummary summarize(const ProfileTable& table, std::span<const std::size_t> rows) {
    RunSummary s;
    s.instances = rows.size();
    double human_sum = 0.0;
    for (auto r : rows) {
        const auto& p = table.profiles.at(r);
        s.correct += p.correct;
        s.mean_data += p.data_kdn;
        s.mean_model += p.model_difficulty;
        s.never_aligned += p.never_aligned;
        if (p.human_difficulty) {
            human_sum += *p.human_difficulty;
            ++s.human_present;
        }
    }
    if (s.instances > 0) {
        const auto n = static_cast<double>(s.instances);
        s.accuracy = static_cast<double>(s.correct) / n;
        s.mean_data /= n;
        s.mean_model /= n;
    }
    if (s.human_present > 0) s.mean_human = human_sum / static_cast<double>(s.human_present);
    s.patterns = pattern_counts(table, rows);
    return s;
}

std::vector<std::size_t> all_rows(const ProfileTable& table) {
    std::vector<std::size_t> rows(table.profiles.size());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

}  // namespace difflens
