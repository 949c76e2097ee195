#include "difflens/flow.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "difflens/error.hpp"

namespace difflens {

std::string FlowElement::id() const {
    std::string out = "c" + std::to_string(column) + "/";
    switch (kind) {
        case Kind::top: return out + "top";
        case Kind::bottom: return out + "bottom";
        case Kind::node: return out + "n" + std::to_string(predicted);
        case Kind::rect: return out + "n" + std::to_string(predicted) + "/r" + std::to_string(actual);
    }
    return out;
}

namespace {

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::optional<FlowElement> FlowElement::parse(std::string_view id) {
    if (id.size() < 2 || id[0] != 'c') return std::nullopt;
    const auto slash = id.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    FlowElement e;
    if (!parse_number(id.substr(1, slash - 1), e.column)) return std::nullopt;
    const auto rest = id.substr(slash + 1);
    if (rest == "top") {
        e.kind = Kind::top;
        return e;
    }
    if (rest == "bottom") {
        e.kind = Kind::bottom;
        return e;
    }
    if (rest.empty() || rest[0] != 'n') return std::nullopt;
    const auto rslash = rest.find('/');
    if (!parse_number(rest.substr(1, rslash == std::string_view::npos ? std::string_view::npos : rslash - 1), e.predicted)) {
        return std::nullopt;
    }
    if (rslash == std::string_view::npos) {
        e.kind = Kind::node;
        return e;
    }
    const auto rect = rest.substr(rslash + 1);
    if (rect.size() < 2 || rect[0] != 'r' || !parse_number(rect.substr(1), e.actual)) return std::nullopt;
    e.kind = Kind::rect;
    return e;
}

namespace {

// Where a profile sits in column j.
FlowElement place(const DifficultyProfile& p, const ProbeTrace& t, std::size_t column, std::size_t last) {
    FlowElement e;
    e.column = column;
    const bool compressed = p.never_aligned ? (column == last && !p.correct) : column >= p.prediction_depth;
    if (compressed) {
        e.kind = p.correct ? FlowElement::Kind::top : FlowElement::Kind::bottom;
        return e;
    }
    e.kind = FlowElement::Kind::rect;
    e.predicted = t.predictions[column];
    e.actual = p.label;
    return e;
}

}  // namespace

FlowGraph build_flow(const ProfileTable& table, std::span<const std::size_t> subset_rows, std::size_t num_classes) {
    if (subset_rows.empty()) throw Error(ErrorKind::invalid_argument, "flow over an empty subset", "subset");
    std::vector<std::size_t> rows(subset_rows.begin(), subset_rows.end());
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

    const std::size_t columns = table.num_probes;
    const std::size_t last = columns - 1;
    FlowGraph g;
    g.num_classes = num_classes;
    g.total = rows.size();
    g.columns.resize(columns);

    // placement[j][i] for the i-th subset row
    std::vector<std::vector<FlowElement>> placement(columns, std::vector<FlowElement>(rows.size()));
    for (std::size_t j = 0; j < columns; ++j) {
        FlowColumn& col = g.columns[j];
        col.probe = j;
        col.top.class_histogram.assign(num_classes, 0);
        col.bottom.class_histogram.assign(num_classes, 0);
        std::map<std::uint32_t, std::map<std::uint32_t, std::vector<std::size_t>>> nodes;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto r = rows[i];
            const auto& p = table.profiles.at(r);
            const auto e = place(p, table.traces.at(r), j, last);
            placement[j][i] = e;
            switch (e.kind) {
                case FlowElement::Kind::top:
                case FlowElement::Kind::bottom: {
                    auto& node = e.kind == FlowElement::Kind::top ? col.top : col.bottom;
                    node.members.push_back(r);
                    ++node.class_histogram.at(p.label);
                    ++node.count;
                    break;
                }
                default: nodes[e.predicted][e.actual].push_back(r);
            }
        }
        for (auto& [pred, rects] : nodes) {
            FlowClassNode node;
            node.predicted = pred;
            for (auto& [actual, members] : rects) {
                node.count += members.size();
                node.rects.push_back({actual, std::move(members)});
            }
            col.nodes.push_back(std::move(node));
        }
    }

    for (std::size_t j = 0; j + 1 < columns; ++j) {
        std::map<std::pair<FlowElement, FlowElement>, std::vector<std::size_t>> links;
        for (std::size_t i = 0; i < rows.size(); ++i) links[{placement[j][i], placement[j + 1][i]}].push_back(rows[i]);
        for (auto& [ends, members] : links) g.links.push_back({ends.first, ends.second, std::move(members)});
    }
    return g;
}

namespace {

std::vector<std::size_t> element_members(const FlowGraph& g, const FlowElement& e) {
    if (e.column >= g.columns.size()) throw Error(ErrorKind::not_found, "unknown flow column", e.id());
    const auto& col = g.columns[e.column];
    switch (e.kind) {
        case FlowElement::Kind::top: return col.top.members;
        case FlowElement::Kind::bottom: return col.bottom.members;
        case FlowElement::Kind::node:
        case FlowElement::Kind::rect: {
            for (const auto& node : col.nodes) {
                if (node.predicted != e.predicted) continue;
                if (e.kind == FlowElement::Kind::rect) {
                    for (const auto& rect : node.rects) {
                        if (rect.actual == e.actual) return rect.members;
                    }
                    break;
                }
                std::vector<std::size_t> all;
                for (const auto& rect : node.rects) all.insert(all.end(), rect.members.begin(), rect.members.end());
                std::sort(all.begin(), all.end());
                return all;
            }
            break;
        }
    }
    throw Error(ErrorKind::not_found, "unknown flow element", e.id());
}

}  // namespace

std::vector<std::size_t> flow_click_select(const FlowGraph& graph, std::string_view element_id) {
    const auto arrow = element_id.find("->");
    if (arrow != std::string_view::npos) {
        const auto src = FlowElement::parse(element_id.substr(0, arrow));
        const auto dst = FlowElement::parse(element_id.substr(arrow + 2));
        if (src && dst) {
            for (const auto& link : graph.links) {
                if (link.source == *src && link.target == *dst) return link.members;
            }
        }
        throw Error(ErrorKind::not_found, "unknown flow link", std::string(element_id));
    }
    const auto e = FlowElement::parse(element_id);
    if (!e) throw Error(ErrorKind::not_found, "malformed flow element id", std::string(element_id));
    return element_members(graph, *e);
}

nlohmann::json flow_to_json(const FlowGraph& g, const std::function<std::string(std::size_t)>& id_of) {
    using nlohmann::json;
    auto ids = [&](const std::vector<std::size_t>& members) {
        json out = json::array();
        for (auto r : members) out.push_back(id_of(r));
        return out;
    };
    auto compressed = [&](const CompressedNode& n, const FlowElement& e) {
        return json{{"id", e.id()}, {"count", n.count}, {"class_histogram", n.class_histogram}, {"members", ids(n.members)}};
    };
    json columns = json::array();
    for (std::size_t j = 0; j < g.columns.size(); ++j) {
        const auto& col = g.columns[j];
        json nodes = json::array();
        for (const auto& node : col.nodes) {
            json rects = json::array();
            for (const auto& rect : node.rects) {
                const FlowElement e{j, FlowElement::Kind::rect, node.predicted, rect.actual};
                rects.push_back(
                    {{"id", e.id()}, {"actual", rect.actual}, {"count", rect.members.size()}, {"members", ids(rect.members)}});
            }
            const FlowElement e{j, FlowElement::Kind::node, node.predicted, 0};
            nodes.push_back({{"id", e.id()}, {"predicted", node.predicted}, {"count", node.count}, {"rects", rects}});
        }
        columns.push_back({{"index", j},
                           {"probe", col.probe},
                           {"nodes", nodes},
                           {"top", compressed(col.top, {j, FlowElement::Kind::top, 0, 0})},
                           {"bottom", compressed(col.bottom, {j, FlowElement::Kind::bottom, 0, 0})}});
    }
    json links = json::array();
    for (const auto& link : g.links) {
        links.push_back({{"id", link.id()},
                         {"source", link.source.id()},
                         {"target", link.target.id()},
                         {"count", link.members.size()},
                         {"members", ids(link.members)}});
    }
    return json{{"num_classes", g.num_classes}, {"total", g.total}, {"columns", columns}, {"links", links}};
}

PcpAxes pcp_data(const ProfileTable& table, std::span<const std::size_t> subset_rows,
                 const std::vector<std::string>& probe_names) {
    if (subset_rows.empty()) throw Error(ErrorKind::invalid_argument, "PCP over an empty subset", "subset");
    PcpAxes axes;
    axes.axes.push_back("data");
    for (const auto& name : probe_names) axes.axes.push_back(name);
    axes.rows.assign(subset_rows.begin(), subset_rows.end());
    std::sort(axes.rows.begin(), axes.rows.end());
    axes.rows.erase(std::unique(axes.rows.begin(), axes.rows.end()), axes.rows.end());
    for (auto r : axes.rows) {
        const auto& p = table.profiles.at(r);
        std::vector<double> line{p.data_kdn};
        line.insert(line.end(), p.layer_kdn.begin(), p.layer_kdn.end());
        axes.polylines.push_back(std::move(line));
    }
    return axes;
}

}  // namespace difflens
