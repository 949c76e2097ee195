#include "difflens/knn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <thread>

#include "difflens/error.hpp"

namespace difflens::knn {

std::string_view to_string(Mode mode) { return mode == Mode::exact ? "exact" : "approximate"; }

double squared_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

std::uint32_t plurality_label(std::span<const Neighbor> neighbors) {
    if (neighbors.empty()) throw Error(ErrorKind::invalid_argument, "plurality of an empty neighbor set");
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& n : neighbors) ++counts[n.label];
    std::uint32_t best = counts.begin()->first;
    std::size_t best_count = 0;
    for (const auto& [label, count] : counts) {  // ascending label order keeps the smallest on ties
        if (count > best_count) {
            best = label;
            best_count = count;
        }
    }
    return best;
}

namespace {

struct Candidate {
    double d2;
    std::size_t row;
    bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && row < o.row); }
};

// Builds one tree into `nodes`; returns root index. Node indices are local to
// the tree and rebased by the caller.
struct TreeBuilder {
    const Matrix& data;
    std::size_t leaf_size;
    std::mt19937_64 rng;
    std::vector<std::uint32_t> items;
    std::vector<float> planes;
    struct LocalNode {
        std::uint32_t left = 0, right = 0, item_begin = 0, item_end = 0, plane = 0;
        double bias = 0.0;
        bool leaf = false;
    };
    std::vector<LocalNode> nodes;

    std::uint32_t build(std::vector<std::uint32_t>& idx) {
        const auto self = static_cast<std::uint32_t>(nodes.size());
        nodes.emplace_back();
        if (idx.size() <= leaf_size) {
            nodes[self].leaf = true;
            nodes[self].item_begin = static_cast<std::uint32_t>(items.size());
            items.insert(items.end(), idx.begin(), idx.end());
            nodes[self].item_end = static_cast<std::uint32_t>(items.size());
            return self;
        }
        const std::size_t d = data.cols();
        std::vector<float> normal(d, 0.0f);
        double bias = 0.0;
        std::vector<std::uint32_t> left, right;

        std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
        for (int attempt = 0; attempt < 3 && (left.empty() || right.empty()); ++attempt) {
            const std::size_t ia = pick(rng);
            std::size_t ib = pick(rng);
            if (ib == ia) ib = (ia + 1) % idx.size();
            const auto a = data.row(idx[ia]);
            const auto b = data.row(idx[ib]);
            double mid_dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                normal[j] = a[j] - b[j];
                mid_dot += static_cast<double>(normal[j]) * 0.5 * (static_cast<double>(a[j]) + static_cast<double>(b[j]));
            }
            bias = -mid_dot;
            left.clear();
            right.clear();
            for (auto r : idx) {
                double m = bias;
                const auto x = data.row(r);
                for (std::size_t j = 0; j < d; ++j) m += static_cast<double>(normal[j]) * x[j];
                (m > 0.0 ? right : left).push_back(r);
            }
        }
        if (left.empty() || right.empty()) {
            // duplicates: split at random, zero hyperplane sends queries both ways
            std::fill(normal.begin(), normal.end(), 0.0f);
            bias = 0.0;
            std::vector<std::uint32_t> shuffled = idx;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            left.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(shuffled.size() / 2));
            right.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(shuffled.size() / 2), shuffled.end());
        }
        nodes[self].plane = static_cast<std::uint32_t>(planes.size() / std::max<std::size_t>(d, 1));
        nodes[self].bias = bias;
        planes.insert(planes.end(), normal.begin(), normal.end());
        idx.clear();
        idx.shrink_to_fit();
        const auto l = build(left);
        const auto r = build(right);
        nodes[self].left = l;
        nodes[self].right = r;
        return self;
    }
};

}  // namespace

ProbeIndex ProbeIndex::build(std::shared_ptr<const Matrix> train, std::shared_ptr<const std::vector<std::uint32_t>> labels,
                             std::size_t probe, Mode mode, const ForestParams& params) {
    if (!train || train->rows() == 0) throw Error(ErrorKind::invalid_argument, "cannot index an empty training split");
    if (!labels || labels->size() != train->rows()) {
        throw Error(ErrorKind::invalid_argument, "label count does not match training rows");
    }
    if (mode == Mode::approximate && (params.trees == 0 || params.leaf_size == 0)) {
        throw Error(ErrorKind::invalid_argument, "forest needs at least one tree and leaf size >= 1");
    }
    ProbeIndex index;
    index.train_ = std::move(train);
    index.labels_ = std::move(labels);
    index.probe_ = probe;
    index.mode_ = mode;
    index.params_ = params;
    if (mode == Mode::exact) return index;

    const Matrix& data = *index.train_;
    auto build_tree = [&data, &params](std::size_t t) {
        std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                          static_cast<std::uint32_t>(t)};
        TreeBuilder b{data, params.leaf_size, std::mt19937_64(seq), {}, {}, {}};
        std::vector<std::uint32_t> all(data.rows());
        std::iota(all.begin(), all.end(), 0u);
        b.build(all);
        return b;
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(params.trees, std::thread::hardware_concurrency()));
    std::vector<TreeBuilder> trees;
    trees.reserve(params.trees);
    for (std::size_t start = 0; start < params.trees; start += workers) {
        std::vector<std::future<TreeBuilder>> batch;
        for (std::size_t t = start; t < std::min(params.trees, start + workers); ++t) {
            batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, build_tree, t));
        }
        for (auto& f : batch) trees.push_back(f.get());
    }

    const std::size_t d = data.cols();
    for (auto& tree : trees) {
        const auto node_base = static_cast<std::uint32_t>(index.nodes_.size());
        const auto item_base = static_cast<std::uint32_t>(index.items_.size());
        const auto plane_base = static_cast<std::uint32_t>(d == 0 ? 0 : index.planes_.size() / d);
        index.roots_.push_back(node_base);
        for (const auto& n : tree.nodes) {
            Node out;
            out.leaf = n.leaf;
            if (n.leaf) {
                out.item_begin = n.item_begin + item_base;
                out.item_end = n.item_end + item_base;
            } else {
                out.left = n.left + node_base;
                out.right = n.right + node_base;
                out.plane = n.plane + plane_base;
                out.bias = n.bias;
            }
            index.nodes_.push_back(out);
        }
        index.items_.insert(index.items_.end(), tree.items.begin(), tree.items.end());
        index.planes_.insert(index.planes_.end(), tree.planes.begin(), tree.planes.end());
    }
    return index;
}

std::size_t ProbeIndex::search_budget(std::size_t k) const noexcept {
    return std::max(k * params_.trees, 4 * k);
}

double ProbeIndex::margin(const Node& node, std::span<const float> v) const {
    const std::size_t d = cols();
    const float* plane = planes_.data() + static_cast<std::size_t>(node.plane) * d;
    double m = node.bias;
    for (std::size_t j = 0; j < d; ++j) m += static_cast<double>(plane[j]) * v[j];
    return m;
}

std::vector<Neighbor> ProbeIndex::query(std::span<const float> vector, std::size_t k,
                                        std::optional<std::size_t> exclude_row) const {
    if (vector.size() != cols()) {
        throw Error(ErrorKind::invalid_argument, "query has " + std::to_string(vector.size()) +
                                                     " dimensions, index has " + std::to_string(cols()));
    }
    const std::size_t available = rows() - (exclude_row && *exclude_row < rows() ? 1 : 0);
    if (k < 1 || k > available) {
        throw Error(ErrorKind::invalid_argument,
                    "k=" + std::to_string(k) + " outside [1, " + std::to_string(available) + "]");
    }
    return mode_ == Mode::exact ? exact_query(vector, k, exclude_row) : approx_query(vector, k, exclude_row);
}

NeighborSet ProbeIndex::query_set(std::span<const float> vector, std::size_t k, std::string query_id,
                                  std::optional<std::size_t> exclude_row) const {
    return NeighborSet{std::move(query_id), probe_, k, query(vector, k, exclude_row)};
}

std::vector<Neighbor> ProbeIndex::exact_query(std::span<const float> v, std::size_t k,
                                              std::optional<std::size_t> exclude) const {
    std::priority_queue<Candidate> heap;  // max-heap of the best k so far
    const Matrix& data = *train_;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        if (exclude && *exclude == r) continue;
        const Candidate c{squared_distance(v, data.row(r)), r};
        if (heap.size() < k) {
            heap.push(c);
        } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
        }
    }
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        const auto c = heap.top();
        heap.pop();
        out[i] = Neighbor{c.row, std::sqrt(c.d2), (*labels_)[c.row]};
    }
    return out;
}

std::vector<Neighbor> ProbeIndex::approx_query(std::span<const float> v, std::size_t k,
                                               std::optional<std::size_t> exclude) const {
    using Entry = std::pair<double, std::uint32_t>;  // (priority, node)
    std::priority_queue<Entry> queue;
    for (auto root : roots_) queue.emplace(std::numeric_limits<double>::infinity(), root);

    const std::size_t budget = search_budget(k);
    std::vector<std::uint32_t> candidates;
    std::size_t leaf_visits = 0;
    std::vector<bool> seen(rows(), false);
    std::size_t distinct = 0;
    while (!queue.empty() && (leaf_visits < budget || distinct < k)) {
        const auto [priority, id] = queue.top();
        queue.pop();
        const Node& node = nodes_[id];
        if (node.leaf) {
            ++leaf_visits;
            for (std::uint32_t i = node.item_begin; i < node.item_end; ++i) {
                const auto r = items_[i];
                if (seen[r] || (exclude && *exclude == r)) continue;
                seen[r] = true;
                ++distinct;
                candidates.push_back(r);
            }
            continue;
        }
        const double m = margin(node, v);
        queue.emplace(std::min(priority, m), node.right);
        queue.emplace(std::min(priority, -m), node.left);
    }

    std::vector<Candidate> scored;
    scored.reserve(candidates.size());
    for (auto r : candidates) scored.push_back({squared_distance(v, train_->row(r)), r});
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end());
    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back(Neighbor{scored[i].row, std::sqrt(scored[i].d2), (*labels_)[scored[i].row]});
    }
    return out;
}

bool ProbeIndex::same_structure(const ProbeIndex& other) const {
    return mode_ == other.mode_ && params_ == other.params_ && nodes_ == other.nodes_ && roots_ == other.roots_ &&
           items_ == other.items_ && planes_ == other.planes_;
}

std::uint32_t knn_predict(const ProbeIndex& index, std::span<const float> vector, std::size_t k) {
    const auto neighbors = index.query(vector, k);
    return plurality_label(neighbors);
}

double recall_eval(const ProbeIndex& exact, const ProbeIndex& approx, const Matrix& queries, std::size_t k) {
    if (exact.probe() != approx.probe() || exact.cols() != approx.cols() || exact.rows() != approx.rows()) {
        throw Error(ErrorKind::invalid_argument, "recall_eval over indices of different layers");
    }
    if (queries.rows() == 0) return 1.0;
    double total = 0.0;
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const auto truth = exact.query(queries.row(q), k);
        const auto got = approx.query(queries.row(q), k);
        std::vector<std::size_t> a, b;
        for (const auto& n : truth) a.push_back(n.row);
        for (const auto& n : got) b.push_back(n.row);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::size_t> both;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
        total += static_cast<double>(both.size()) / static_cast<double>(k);
    }
    return total / static_cast<double>(queries.rows());
}

// ---- cache file ----------------------------------------------------------

namespace {

constexpr char kCacheMagic[4] = {'D', 'L', 'I', 'X'};
constexpr std::uint32_t kCacheVersion = 1;

struct Writer {
    std::vector<std::uint8_t> out;
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct Reader {
    std::span<const std::uint8_t> in;
    std::size_t at = 0;
    bool ok = true;
    std::uint32_t u32() {
        if (at + 4 > in.size()) {
            ok = false;
            return 0;
        }
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
        at += 4;
        return v;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void ProbeIndex::save_cache(const std::filesystem::path& path, std::uint32_t tag) const {
    if (mode_ != Mode::approximate) throw Error(ErrorKind::invalid_argument, "only approximate indices are cached");
    Writer w;
    w.out.insert(w.out.end(), std::begin(kCacheMagic), std::end(kCacheMagic));
    w.u32(kCacheVersion);
    w.u32(tag);
    w.u32(static_cast<std::uint32_t>(probe_));
    w.u32(static_cast<std::uint32_t>(rows()));
    w.u32(static_cast<std::uint32_t>(cols()));
    w.u32(static_cast<std::uint32_t>(params_.trees));
    w.u32(static_cast<std::uint32_t>(params_.leaf_size));
    w.u64(params_.seed);
    w.u32(static_cast<std::uint32_t>(roots_.size()));
    for (auto r : roots_) w.u32(r);
    w.u32(static_cast<std::uint32_t>(nodes_.size()));
    for (const auto& n : nodes_) {
        w.u32(n.leaf ? 1u : 0u);
        w.u32(n.left);
        w.u32(n.right);
        w.u32(n.item_begin);
        w.u32(n.item_end);
        w.u32(n.plane);
        w.f64(n.bias);
    }
    w.u32(static_cast<std::uint32_t>(items_.size()));
    for (auto i : items_) w.u32(i);
    w.u32(static_cast<std::uint32_t>(planes_.size()));
    for (auto f : planes_) w.f32(f);
    std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    write_file_bytes(tmp, w.out);
    std::filesystem::rename(tmp, path);
}

std::optional<ProbeIndex> ProbeIndex::load_cache(const std::filesystem::path& path, std::uint32_t tag,
                                                 std::shared_ptr<const Matrix> train,
                                                 std::shared_ptr<const std::vector<std::uint32_t>> labels,
                                                 std::size_t probe, const ForestParams& params) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return std::nullopt;
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const Error&) {
        return std::nullopt;
    }
    Reader r{bytes};
    if (bytes.size() < 4 || !std::equal(std::begin(kCacheMagic), std::end(kCacheMagic), bytes.begin())) return std::nullopt;
    r.at = 4;
    if (r.u32() != kCacheVersion || r.u32() != tag || r.u32() != probe || r.u32() != train->rows() ||
        r.u32() != train->cols() || r.u32() != params.trees || r.u32() != params.leaf_size || r.u64() != params.seed) {
        return std::nullopt;
    }
    ProbeIndex index;
    index.train_ = std::move(train);
    index.labels_ = std::move(labels);
    index.probe_ = probe;
    index.mode_ = Mode::approximate;
    index.params_ = params;
    const auto n_roots = r.u32();
    for (std::uint32_t i = 0; i < n_roots && r.ok; ++i) index.roots_.push_back(r.u32());
    const auto n_nodes = r.u32();
    if (!r.ok || static_cast<std::size_t>(n_nodes) * 32 > bytes.size()) return std::nullopt;
    index.nodes_.resize(n_nodes);
    for (auto& n : index.nodes_) {
        n.leaf = r.u32() != 0;
        n.left = r.u32();
        n.right = r.u32();
        n.item_begin = r.u32();
        n.item_end = r.u32();
        n.plane = r.u32();
        n.bias = r.f64();
    }
    const auto n_items = r.u32();
    if (!r.ok || static_cast<std::size_t>(n_items) * 4 > bytes.size()) return std::nullopt;
    index.items_.resize(n_items);
    for (auto& i : index.items_) i = r.u32();
    const auto n_planes = r.u32();
    if (!r.ok || static_cast<std::size_t>(n_planes) * 4 > bytes.size()) return std::nullopt;
    index.planes_.resize(n_planes);
    for (auto& f : index.planes_) f = r.f32();
    if (!r.ok || r.at != bytes.size()) return std::nullopt;
    // structural sanity
    const std::size_t d = index.cols();
    for (const auto& n : index.nodes_) {
        if (n.leaf) {
            if (n.item_begin > n.item_end || n.item_end > index.items_.size()) return std::nullopt;
        } else if (n.left >= n_nodes || n.right >= n_nodes || (d > 0 && (n.plane + 1) * d > index.planes_.size())) {
            return std::nullopt;
        }
    }
    for (auto i : index.items_) {
        if (i >= index.rows()) return std::nullopt;
    }
    for (auto root : index.roots_) {
        if (root >= n_nodes) return std::nullopt;
    }
    return index;
}

}  // namespace difflens::knn
