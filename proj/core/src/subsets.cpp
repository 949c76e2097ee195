#include "difflens/subsets.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "difflens/analytics.hpp"
#include "difflens/error.hpp"
#include "difflens/flow.hpp"
#include "difflens/text.hpp"

namespace difflens {

using nlohmann::json;

std::string_view to_string(SetOp op) {
    switch (op) {
        case SetOp::union_: return "union";
        case SetOp::intersection: return "intersection";
        case SetOp::difference: return "difference";
    }
    return "union";
}

std::optional<SetOp> parse_set_op(std::string_view s) {
    if (s == "union") return SetOp::union_;
    if (s == "intersection") return SetOp::intersection;
    if (s == "difference") return SetOp::difference;
    return std::nullopt;
}

Members normalize(Members m) {
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    return m;
}

Members apply(SetOp op, const Members& a, const Members& b) {
    Members out;
    switch (op) {
        case SetOp::union_: std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out)); break;
        case SetOp::intersection:
            std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
            break;
        case SetOp::difference: std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out)); break;
    }
    return out;
}

Members complement(const Members& a, const Members& universe) { return apply(SetOp::difference, universe, a); }

Members universe(const ProfileTable& profiles) {
    Members out;
    out.reserve(profiles.profiles.size());
    for (const auto& p : profiles.profiles) out.push_back(p.ref);
    return normalize(std::move(out));
}

// ---- selection -----------------------------------------------------------

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
    throw Error(ErrorKind::invalid_argument, msg, where);
}

std::pair<double, double> read_range(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) bad(where, "expected [lo, hi]");
    const double lo = j[0].get<double>();
    const double hi = j[1].get<double>();
    if (lo > hi) bad(where, "range has lo > hi");
    return {lo, hi};
}

const json& field(const json& j, const char* key, const std::string& prefix) {
    auto it = j.find(key);
    if (it == j.end()) bad(prefix + key, "missing field");
    return *it;
}

std::string source_text(const json& d) {
    const auto& s = field(d, "source", "");
    if (!s.is_string()) bad("source", "expected a string");
    return s.get<std::string>();
}

bool inside_polygon(double x, double y, const std::vector<std::array<double, 2>>& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) inside = !inside;
    }
    return inside;
}

bool is_index(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); }

template <typename Pred>
Members select_rows(const ProfileTable& t, Pred&& keep) {
    Members out;
    for (std::size_t r = 0; r < t.profiles.size(); ++r) {
        if (keep(r)) out.push_back(t.profiles[r].ref);
    }
    return normalize(std::move(out));
}

}  // namespace

Members evaluate_selection(const json& d, const SelectionContext& ctx) {
    if (!d.is_object()) bad("", "selection descriptor must be an object");
    const auto& kind_j = field(d, "kind", "");
    if (!kind_j.is_string()) bad("kind", "expected a string");
    const std::string kind = kind_j.get<std::string>();
    const auto& t = ctx.profiles;
    const auto& m = ctx.bundle.manifest();

    if (kind == "all") return universe(t);

    if (kind == "ids") {
        const auto& ids = field(d, "ids", "");
        if (!ids.is_array()) bad("ids", "expected an array");
        Members out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::string where = "ids[" + std::to_string(i) + "]";
            if (!ids[i].is_string()) bad(where, "expected an instance id");
            auto ref = parse_instance_id(ids[i].get<std::string>());
            if (!ref || !t.find(*ref)) bad(where, "unknown or unprofiled instance '" + ids[i].get<std::string>() + "'");
            out.push_back(*ref);
        }
        return normalize(std::move(out));
    }

    if (kind == "brush") {
        const auto& ranges = field(d, "ranges", "");
        if (!ranges.is_object()) bad("ranges", "expected an object");
        struct Axis {
            std::optional<Perspective> perspective;
            std::size_t probe = 0;
            double lo, hi;
        };
        std::vector<Axis> axes;
        for (const auto& [key, value] : ranges.items()) {
            const auto [lo, hi] = read_range(value, "ranges." + key);
            if (auto p = parse_perspective(key)) {
                axes.push_back({p, 0, lo, hi});
            } else if (key.rfind("layer:", 0) == 0) {
                auto probe = m.probe_index(key.substr(6));
                if (!probe) bad("ranges." + key, "unknown layer");
                axes.push_back({std::nullopt, *probe, lo, hi});
            } else {
                bad("ranges." + key, "unknown axis");
            }
        }
        return select_rows(t, [&](std::size_t r) {
            const auto& p = t.profiles[r];
            for (const auto& a : axes) {
                const auto v = a.perspective ? perspective_value(*a.perspective, p) : std::optional(p.layer_kdn[a.probe]);
                if (!v || *v < a.lo || *v > a.hi) return false;
            }
            return true;
        });
    }

    if (kind == "heatmap") {
        const auto& pair_j = field(d, "pair", "");
        if (!pair_j.is_string()) bad("pair", "expected a string");
        const auto pair = PerspectivePair::parse(pair_j.get<std::string>());
        std::size_t bins = ctx.bins;
        if (auto it = d.find("bins"); it != d.end()) {
            if (!is_index(*it) || it->get<std::size_t>() == 0) bad("bins", "expected a positive integer");
            bins = it->get<std::size_t>();
        }
        const std::size_t layers = m.num_layers();
        const std::size_t xb = axis_bins(pair.x, bins, layers), yb = axis_bins(pair.y, bins, layers);
        const auto& cells = field(d, "cells", "");
        if (!cells.is_array()) bad("cells", "expected an array");
        std::vector<std::vector<bool>> on(xb, std::vector<bool>(yb, false));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& c = cells[i];
            const std::string where = "cells[" + std::to_string(i) + "]";
            if (!c.is_array() || c.size() != 2 || !is_index(c[0]) || !is_index(c[1])) {
                bad(where, "expected [x_bin, y_bin]");
            }
            const auto x = c[0].get<std::size_t>(), y = c[1].get<std::size_t>();
            if (x >= xb || y >= yb) bad(where, "cell outside the " + std::to_string(xb) + "x" + std::to_string(yb) + " grid");
            on[x][y] = true;
        }
        return select_rows(t, [&](std::size_t r) {
            const auto bx = axis_bin(pair.x, t.profiles[r], bins, layers);
            const auto by = axis_bin(pair.y, t.profiles[r], bins, layers);
            return bx && by && on[*bx][*by];
        });
    }

    if (kind == "confusion") {
        const auto& cells = field(d, "cells", "");
        if (!cells.is_array()) bad("cells", "expected an array");
        const std::size_t C = m.num_classes();
        std::vector<std::vector<bool>> on(C, std::vector<bool>(C, false));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& c = cells[i];
            const std::string where = "cells[" + std::to_string(i) + "]";
            if (!c.is_array() || c.size() != 2 || !is_index(c[0]) || !is_index(c[1])) {
                bad(where, "expected [actual, predicted]");
            }
            const auto a = c[0].get<std::size_t>(), p = c[1].get<std::size_t>();
            if (a >= C || p >= C) bad(where, "class index out of range");
            on[a][p] = true;
        }
        return select_rows(t, [&](std::size_t r) { return on[t.profiles[r].label][t.profiles[r].predicted]; });
    }

    if (kind == "projection_rect" || kind == "lasso") {
        const auto source = ProjectionSource::parse(source_text(d), m);
        std::optional<Projection2D> local;
        const Projection2D* proj = nullptr;
        if (ctx.projection) {
            proj = &ctx.projection(source);
        } else {
            local = project_2d(ctx.bundle, t, source);
            proj = &*local;
        }
        if (kind == "projection_rect") {
            const auto [x0, x1] = read_range(field(d, "x", ""), "x");
            const auto [y0, y1] = read_range(field(d, "y", ""), "y");
            return select_rows(t, [&](std::size_t r) {
                const auto& c = proj->coords[r];
                return c[0] >= x0 && c[0] <= x1 && c[1] >= y0 && c[1] <= y1;
            });
        }
        const auto& poly_j = field(d, "polygon", "");
        if (!poly_j.is_array() || poly_j.size() < 3) bad("polygon", "expected at least 3 [x, y] points");
        std::vector<std::array<double, 2>> poly;
        for (std::size_t i = 0; i < poly_j.size(); ++i) {
            const auto& pt = poly_j[i];
            if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
                bad("polygon[" + std::to_string(i) + "]", "expected [x, y]");
            }
            poly.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
        return select_rows(t, [&](std::size_t r) { return inside_polygon(proj->coords[r][0], proj->coords[r][1], poly); });
    }

    if (kind == "flow") {
        const auto& elements = field(d, "elements", "");
        if (!elements.is_array()) bad("elements", "expected an array");
        if (t.profiles.empty()) return {};
        const auto rows = all_rows(t);
        const auto graph = build_flow(t, rows, m.num_classes());
        Members out;
        for (std::size_t i = 0; i < elements.size(); ++i) {
            const std::string where = "elements[" + std::to_string(i) + "]";
            if (!elements[i].is_string()) bad(where, "expected an element id");
            std::vector<std::size_t> hit;
            try {
                hit = flow_click_select(graph, elements[i].get<std::string>());
            } catch (const Error& e) {
                // an empty node is legitimately absent from the graph
                const auto parsed = FlowElement::parse(elements[i].get<std::string>());
                const bool empty_but_valid = parsed && parsed->column < graph.columns.size() &&
                                             (parsed->kind == FlowElement::Kind::node || parsed->kind == FlowElement::Kind::rect) &&
                                             parsed->predicted < m.num_classes() && parsed->actual < m.num_classes();
                if (!empty_but_valid) bad(where, e.what());
            }
            for (auto r : hit) out.push_back(t.profiles[r].ref);
        }
        return normalize(std::move(out));
    }

    if (kind == "patterns") {
        const auto& codes = field(d, "codes", "");
        if (!codes.is_array()) bad("codes", "expected an array");
        std::vector<Pattern> wanted;
        for (std::size_t i = 0; i < codes.size(); ++i) {
            const std::string where = "codes[" + std::to_string(i) + "]";
            if (!codes[i].is_string()) bad(where, "expected a pattern code");
            auto p = parse_pattern(codes[i].get<std::string>());
            if (!p) bad(where, "unknown pattern code '" + codes[i].get<std::string>() + "'");
            wanted.push_back(*p);
        }
        return select_rows(t, [&](std::size_t r) {
            return std::find(wanted.begin(), wanted.end(), t.profiles[r].pattern) != wanted.end();
        });
    }

    bad("kind", "unknown selection kind '" + kind + "'");
}

Members replay(const json& provenance, const SelectionContext& ctx) {
    if (!provenance.is_object()) bad("provenance", "expected an object");
    if (auto it = provenance.find("select"); it != provenance.end()) return evaluate_selection(*it, ctx);
    if (auto it = provenance.find("members"); it != provenance.end()) {
        // literal membership (imported id lists)
        return evaluate_selection(json{{"kind", "ids"}, {"ids", *it}}, ctx);
    }
    const auto& op_j = field(provenance, "op", "provenance.");
    auto op = op_j.is_string() ? parse_set_op(op_j.get<std::string>()) : std::nullopt;
    if (!op) bad("provenance.op", "unknown set operation");
    return apply(*op, replay(field(provenance, "left", "provenance."), ctx),
                 replay(field(provenance, "right", "provenance."), ctx));
}

// ---- serialization -------------------------------------------------------

json subset_to_json(const Subset& s) {
    json members = json::array();
    for (const auto& ref : s.members) members.push_back(instance_id(ref));
    return json{{"id", s.id},
                {"name", s.name},
                {"members", members},
                {"provenance", s.provenance},
                {"created_at", s.created_at},
                {"bundle_checksum", s.bundle_checksum}};
}

Subset subset_from_json(const json& j) {
    try {
        Subset s;
        s.id = j.at("id").get<std::string>();
        s.name = j.at("name").get<std::string>();
        for (const auto& id : j.at("members")) {
            auto ref = parse_instance_id(id.get<std::string>());
            if (!ref) throw Error(ErrorKind::validation, "bad instance id in subset", s.id);
            s.members.push_back(*ref);
        }
        s.members = normalize(std::move(s.members));
        s.provenance = j.at("provenance");
        s.created_at = j.at("created_at").get<std::string>();
        s.bundle_checksum = j.at("bundle_checksum").get<std::uint32_t>();
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::validation, std::string("malformed subset: ") + e.what());
    }
}

std::string subset_csv(const Subset& s) {
    std::string out = "instance_id\n";
    for (const auto& ref : s.members) out += instance_id(ref) + "\n";
    return out;
}

Members members_from_csv(std::string_view text) {
    const auto table = parse_csv(text);
    Members out;
    std::size_t col = 0;
    bool has_header = !table.header.empty() && table.header[0] == "instance_id";
    if (!has_header && !table.header.empty()) {
        // headerless list: first line is data
        auto ref = parse_instance_id(table.header[col]);
        if (!ref) throw Error(ErrorKind::validation, "bad instance id '" + table.header[col] + "'", "line 1");
        out.push_back(*ref);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (table.rows[r].empty()) continue;
        auto ref = parse_instance_id(table.rows[r][col]);
        if (!ref) {
            throw Error(ErrorKind::validation, "bad instance id '" + table.rows[r][col] + "'",
                        "line " + std::to_string(table.line_numbers[r]));
        }
        out.push_back(*ref);
    }
    return normalize(std::move(out));
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- store ---------------------------------------------------------------

SubsetStore::SubsetStore(std::uint32_t bundle_checksum, Clock clock)
    : bundle_checksum_(bundle_checksum), clock_(std::move(clock)) {}

Subset SubsetStore::create(std::string name, Members members, json provenance) {
    std::unique_lock lock(mutex_);
    Subset s;
    s.id = "s" + std::to_string(next_id_++);
    s.name = name.empty() ? s.id : std::move(name);
    s.members = normalize(std::move(members));
    s.provenance = std::move(provenance);
    s.created_at = clock_();
    s.bundle_checksum = bundle_checksum_;
    subsets_[s.id] = s;
    order_.push_back(s.id);
    ++revision_;
    return s;
}

Subset SubsetStore::combine(std::string_view a, std::string_view b, SetOp op, std::string name) {
    const auto sa = get(a);
    const auto sb = get(b);
    if (!sa) throw Error(ErrorKind::not_found, "unknown subset", std::string(a));
    if (!sb) throw Error(ErrorKind::not_found, "unknown subset", std::string(b));
    if (sa->bundle_checksum != sb->bundle_checksum || sa->bundle_checksum != bundle_checksum_) {
        throw Error(ErrorKind::conflict, "cannot combine subsets of different bundles");
    }
    json prov = {{"op", std::string(to_string(op))}, {"left", sa->provenance}, {"right", sb->provenance}};
    return create(std::move(name), apply(op, sa->members, sb->members), std::move(prov));
}

std::optional<Subset> SubsetStore::get(std::string_view id) const {
    std::shared_lock lock(mutex_);
    auto it = subsets_.find(std::string(id));
    if (it == subsets_.end()) return std::nullopt;
    return it->second;
}

std::vector<Subset> SubsetStore::list() const {
    std::shared_lock lock(mutex_);
    std::vector<Subset> out;
    for (const auto& id : order_) out.push_back(subsets_.at(id));
    return out;
}

bool SubsetStore::remove(std::string_view id) {
    std::unique_lock lock(mutex_);
    auto it = subsets_.find(std::string(id));
    if (it == subsets_.end()) return false;
    subsets_.erase(it);
    order_.erase(std::find(order_.begin(), order_.end(), std::string(id)));
    ++revision_;
    return true;
}

std::uint64_t SubsetStore::revision() const {
    std::shared_lock lock(mutex_);
    return revision_;
}

std::string SubsetStore::to_json_text() const {
    std::shared_lock lock(mutex_);
    json subsets = json::array();
    for (const auto& id : order_) subsets.push_back(subset_to_json(subsets_.at(id)));
    const json j = {{"format", "difflens-subsets"}, {"version", kSubsetFormatVersion},
                    {"bundle_checksum", bundle_checksum_}, {"revision", revision_},
                    {"next_id", next_id_},           {"subsets", subsets}};
    return j.dump(2) + "\n";
}

namespace {

std::mutex& path_lock(const std::filesystem::path& path) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::unique_ptr<std::mutex>> locks;
    std::lock_guard guard(registry_mutex);
    auto key = std::filesystem::weakly_canonical(path).string();
    auto& slot = locks[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

std::uint64_t revision_on_disk(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return 0;
    try {
        const auto bytes = read_file_bytes(path);
        const auto j = json::parse(bytes.begin(), bytes.end());
        return j.value("revision", std::uint64_t{0});
    } catch (const std::exception&) {
        return 0;
    }
}

}  // namespace

std::uint64_t SubsetStore::save(const std::filesystem::path& path) {
    std::lock_guard file_guard(path_lock(path));
    std::string text;
    {
        std::unique_lock lock(mutex_);
        revision_ = std::max(revision_, revision_on_disk(path)) + 1;
    }
    text = to_json_text();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    write_file_bytes(tmp, std::vector<std::uint8_t>(text.begin(), text.end()));
    std::filesystem::rename(tmp, path);
    return revision();
}

SubsetStore::Loaded SubsetStore::from_json_text(std::string_view text, std::uint32_t current_checksum, Clock clock) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::validation, std::string("subsets file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "difflens-subsets") {
        throw Error(ErrorKind::validation, "not a difflens subsets file");
    }
    const auto version = j.value("version", std::uint32_t{0});
    if (version != kSubsetFormatVersion) {
        throw Error(ErrorKind::conflict, "subsets file version " + std::to_string(version) + " is not supported (expected " +
                                             std::to_string(kSubsetFormatVersion) + ")");
    }
    Loaded out;
    const auto file_checksum = j.value("bundle_checksum", std::uint32_t{0});
    // The store belongs to the current bundle; each subset keeps the checksum
    // it was made against, so stale ones cannot be combined with fresh ones.
    out.store = std::make_unique<SubsetStore>(current_checksum, std::move(clock));
    auto& s = *out.store;
    s.revision_ = j.value("revision", std::uint64_t{0});
    s.next_id_ = j.value("next_id", std::uint64_t{1});
    for (const auto& entry : j.value("subsets", json::array())) {
        auto subset = subset_from_json(entry);
        s.order_.push_back(subset.id);
        s.subsets_[subset.id] = std::move(subset);
    }
    std::size_t stale = 0;
    for (const auto& [id, subset] : s.subsets_) stale += subset.bundle_checksum != current_checksum;
    if (file_checksum != current_checksum || stale > 0) {
        out.warnings.push_back("stale provenance: " + std::to_string(stale) +
                               " subset(s) were made against bundle checksum " + std::to_string(file_checksum) +
                               ", current bundle is " + std::to_string(current_checksum) +
                               "; memberships kept as stored");
    }
    return out;
}

SubsetStore::Loaded SubsetStore::load(const std::filesystem::path& path, std::uint32_t current_checksum, Clock clock) {
    const auto bytes = read_file_bytes(path);
    return from_json_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), current_checksum,
                          std::move(clock));
}

}  // namespace difflens
