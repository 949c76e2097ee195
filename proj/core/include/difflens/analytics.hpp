#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflens/difficulty.hpp"

namespace difflens {

enum class Perspective { data, model, human };

std::string_view to_string(Perspective p);
std::optional<Perspective> parse_perspective(std::string_view s);

struct PerspectivePair {
    Perspective x = Perspective::data;
    Perspective y = Perspective::model;

    // "data/model", "data/human", "model/human"
    static PerspectivePair parse(std::string_view s);
    std::string to_string() const;
};

inline constexpr std::size_t kDefaultBins = 10;

// Number of bins on a perspective axis: `bins` equal-width bins over [0, 1],
// except the model axis, which has one bin per prediction depth (L + 1).
std::size_t axis_bins(Perspective p, std::size_t bins, std::size_t num_layers);
// Bin of a profile on an axis; nullopt when the value is absent (human).
std::optional<std::size_t> axis_bin(Perspective p, const DifficultyProfile& profile, std::size_t bins,
                                     std::size_t num_layers);
std::optional<double> perspective_value(Perspective p, const DifficultyProfile& profile);

struct Heatmap {
    PerspectivePair pair;
    std::size_t x_bins = 0;
    std::size_t y_bins = 0;
    std::vector<std::vector<std::size_t>> counts;  // [x][y]
    std::vector<std::size_t> x_marginal;
    std::vector<std::size_t> y_marginal;
    std::size_t total = 0;             // instances counted
    std::size_t excluded_absent = 0;   // no human difficulty
};

Heatmap difficulty_heatmap(const ProfileTable& table, std::span<const std::size_t> rows, PerspectivePair pair,
                           std::size_t bins);

// [actual][predicted]
std::vector<std::vector<std::size_t>> confusion_matrix(const ProfileTable& table, std::span<const std::size_t> rows,
                                                       std::size_t num_classes);

// Counts for every taxonomy code plus "unclassified", keyed by code.
std::map<std::string, std::size_t> pattern_counts(const ProfileTable& table, std::span<const std::size_t> rows);

struct RunSummary {
    std::size_t instances = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    double mean_data = 0.0;
    double mean_model = 0.0;
    std::optional<double> mean_human;
    std::size_t human_present = 0;
    std::size_t never_aligned = 0;
    std::map<std::string, std::size_t> patterns;
};

RunSummary summarize(const ProfileTable& table, std::span<const std::size_t> rows);

std::vector<std::size_t> all_rows(const ProfileTable& table);

}  // namespace difflens
