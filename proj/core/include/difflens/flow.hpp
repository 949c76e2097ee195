#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "difflens/difficulty.hpp"

namespace difflens {

// Sankey-style difficulty flow. Column j holds probe j's k-NN predictions.
// An instance sits in class nodes while j < PD and in the top (finally
// correct) or bottom (finally incorrect) compressed node from j = PD on.
// Never-aligned instances stay in class nodes, except that an incorrect one
// drops into the bottom node at the last column.
//
// Member lists hold profile-table row indices, ascending.

struct FlowRect {
    std::uint32_t actual = 0;
    std::vector<std::size_t> members;
};

struct FlowClassNode {
    std::uint32_t predicted = 0;
    std::vector<FlowRect> rects;  // ascending actual class, nonempty only
    std::size_t count = 0;
};

struct CompressedNode {
    std::vector<std::size_t> class_histogram;  // by actual class
    std::vector<std::size_t> members;
    std::size_t count = 0;
};

struct FlowColumn {
    std::size_t probe = 0;
    std::vector<FlowClassNode> nodes;  // ascending predicted class, nonempty only
    CompressedNode top;
    CompressedNode bottom;
};

struct FlowElement {
    enum class Kind { top, rect, bottom, node };
    std::size_t column = 0;
    Kind kind = Kind::top;
    std::uint32_t predicted = 0;  // rect / node
    std::uint32_t actual = 0;     // rect

    // "c<j>/top", "c<j>/bottom", "c<j>/n<pred>", "c<j>/n<pred>/r<actual>"
    std::string id() const;
    static std::optional<FlowElement> parse(std::string_view id);

    friend auto operator<=>(const FlowElement&, const FlowElement&) = default;
};

struct FlowLink {
    FlowElement source;  // column j
    FlowElement target;  // column j + 1
    std::vector<std::size_t> members;

    // "<source id>-><target id>"
    std::string id() const { return source.id() + "->" + target.id(); }
};

struct FlowGraph {
    std::size_t num_classes = 0;
    std::size_t total = 0;
    std::vector<FlowColumn> columns;
    std::vector<FlowLink> links;  // grouped by source column, then (source, target)
};

// Throws Error(invalid_argument) on an empty subset.
FlowGraph build_flow(const ProfileTable& table, std::span<const std::size_t> subset_rows, std::size_t num_classes);

// Exact member set of a node, rectangle, compressed node or link.
// Throws Error(not_found) for unknown element ids.
std::vector<std::size_t> flow_click_select(const FlowGraph& graph, std::string_view element_id);

// `id_of` maps a profile row to its instance id.
nlohmann::json flow_to_json(const FlowGraph& graph, const std::function<std::string(std::size_t)>& id_of);

struct PcpAxes {
    std::vector<std::string> axes;  // "data", then one per probe
    std::vector<std::size_t> rows;
    std::vector<std::vector<double>> polylines;  // [data_kdn, layer_kdn...]
};

PcpAxes pcp_data(const ProfileTable& table, std::span<const std::size_t> subset_rows,
                 const std::vector<std::string>& probe_names);

}  // namespace difflens
