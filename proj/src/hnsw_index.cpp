#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include "paq/error.hpp"
#include "paq/index.hpp"

namespace paq {

namespace {

using Scored = std::pair<float, std::uint32_t>;  // (similarity, node)
using MaxHeap = std::priority_queue<Scored>;
using MinHeap = std::priority_queue<Scored, std::vector<Scored>, std::greater<Scored>>;

constexpr size_t kMaxLevel = 64;
constexpr float kNormTolerance = 1e-3f;

class VisitedList {
public:
    explicit VisitedList(size_t n) : tags_(n, 0) {}

    void reset() {
        if (++epoch_ == 0) {
            std::fill(tags_.begin(), tags_.end(), 0);
            epoch_ = 1;
        }
    }
    bool visit(std::uint32_t node) {
        if (tags_[node] == epoch_) {
            return false;
        }
        tags_[node] = epoch_;
        return true;
    }

private:
    std::vector<std::uint32_t> tags_;
    std::uint32_t epoch_ = 0;
};

}  // namespace

struct HnswIndex::VisitedPool {
    explicit VisitedPool(size_t n) : size(n) {}

    std::unique_ptr<VisitedList> acquire() {
        {
            std::lock_guard lock(mu);
            if (!free.empty()) {
                auto v = std::move(free.back());
                free.pop_back();
                return v;
            }
        }
        return std::make_unique<VisitedList>(size);
    }
    void release(std::unique_ptr<VisitedList> v) {
        std::lock_guard lock(mu);
        free.push_back(std::move(v));
    }

    size_t size;
    std::mutex mu;
    std::vector<std::unique_ptr<VisitedList>> free;
};

void HnswIndex::init_visited() {
    visited_ = std::make_shared<VisitedPool>(store_.size());
}

namespace {

// Pulls every cache line of a row towards L1 ahead of scoring it.
inline void prefetch_bytes(const void* p, size_t bytes) {
    const char* c = static_cast<const char*>(p);
    for (size_t off = 0; off < bytes; off += 64) {
        __builtin_prefetch(c + off);
    }
}

// Best-first search restricted to one layer; returns up to `ef` nodes with
// the highest similarity, best first.
template <typename Graph, typename SimFn, typename PrefetchFn>
std::vector<Scored> search_layer(const Graph& graph, SimFn&& sim, PrefetchFn&& prefetch,
                                 std::span<const Scored> entry, size_t ef, size_t layer,
                                 VisitedList& visited) {
    visited.reset();
    MaxHeap candidates;
    MinHeap results;
    std::vector<std::uint32_t> fresh;
    for (const auto& e : entry) {
        if (visited.visit(e.second)) {
            candidates.push(e);
            results.push(e);
        }
    }
    while (results.size() > ef) {
        results.pop();
    }
    while (!candidates.empty()) {
        const Scored cur = candidates.top();
        if (results.size() >= ef && cur.first < results.top().first) {
            break;
        }
        candidates.pop();
        fresh.clear();
        for (std::uint32_t nb : graph.neighbors(cur.second, layer)) {
            if (visited.visit(nb)) {
                fresh.push_back(nb);
                prefetch(nb);
            }
        }
        for (std::uint32_t nb : fresh) {
            const float s = sim(nb);
            if (results.size() < ef || s > results.top().first) {
                candidates.emplace(s, nb);
                results.emplace(s, nb);
                if (results.size() > ef) {
                    results.pop();
                }
            }
        }
    }
    std::vector<Scored> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

template <typename Graph, typename SimFn>
Scored greedy_descend(const Graph& graph, SimFn&& sim, Scored cur, size_t from_layer,
                      size_t to_layer) {
    for (size_t layer = from_layer; layer > to_layer; --layer) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::uint32_t nb : graph.neighbors(cur.second, layer)) {
                const float s = sim(nb);
                if (s > cur.first || (s == cur.first && nb < cur.second)) {
                    cur = {s, nb};
                    changed = true;
                }
            }
        }
    }
    return cur;
}

}  // namespace

void validate_params(const HnswParams& params) {
    if (params.m < 4) {
        throw_usage("HNSW m must be at least 4");
    }
    if (params.ef_construction < params.m) {
        throw_usage("HNSW ef_construction must be at least m");
    }
    if (params.ef_search < 1) {
        throw_usage("HNSW ef_search must be at least 1");
    }
}

std::span<const std::uint32_t> HnswIndex::neighbors(size_t node, size_t layer) const {
    if (layer == 0) {
        const std::uint32_t* block = links0_.data() + node * (2 * params_.m + 1);
        return {block + 1, block[0]};
    }
    const std::uint32_t* block = upper_[node].data() + (layer - 1) * (params_.m + 1);
    return {block + 1, block[0]};
}

size_t HnswIndex::reachable_on_layer0() const {
    if (size() == 0) {
        return 0;
    }
    std::vector<char> seen(size(), 0);
    std::vector<std::uint32_t> stack{entry_};
    seen[entry_] = 1;
    size_t count = 1;
    while (!stack.empty()) {
        const auto node = stack.back();
        stack.pop_back();
        for (auto nb : neighbors(node, 0)) {
            if (!seen[nb]) {
                seen[nb] = 1;
                ++count;
                stack.push_back(nb);
            }
        }
    }
    return count;
}

class HnswBuilder {
public:
    HnswBuilder(HnswIndex& index, const Matrix& vectors)
        : index_(index),
          vectors_(vectors),
          visited_(vectors.rows()),
          prefetch_{vectors.data().data(), vectors.dim()} {}

    std::span<const std::uint32_t> neighbors(size_t node, size_t layer) const {
        return index_.neighbors(node, layer);
    }

    void build() {
        const size_t n = vectors_.rows();
        const auto& p = index_.params_;
        index_.levels_.assign(n, 0);
        std::mt19937_64 rng(p.seed);
        const double level_mult = 1.0 / std::log(static_cast<double>(p.m));
        for (size_t i = 0; i < n; ++i) {
            // u in (0, 1]
            const double u = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
            const auto level = static_cast<size_t>(std::floor(-std::log(u) * level_mult));
            index_.levels_[i] = static_cast<std::uint8_t>(std::min(level, kMaxLevel));
        }
        index_.links0_.assign(n * (2 * p.m + 1), 0);
        index_.upper_.assign(n, {});
        for (size_t i = 0; i < n; ++i) {
            index_.upper_[i].assign(index_.levels_[i] * (p.m + 1), 0);
        }
        if (n == 0) {
            return;
        }
        index_.entry_ = 0;
        index_.max_level_ = index_.levels_[0];
        for (size_t i = 1; i < n; ++i) {
            insert(static_cast<std::uint32_t>(i));
        }
        repair_connectivity();
    }

private:
    float sim(std::uint32_t a, std::uint32_t b) const {
        return dot(vectors_.row(a), vectors_.row(b));
    }

    std::uint32_t* block(std::uint32_t node, size_t layer) {
        const auto m = index_.params_.m;
        if (layer == 0) {
            return index_.links0_.data() + node * (2 * m + 1);
        }
        return index_.upper_[node].data() + (layer - 1) * (m + 1);
    }

    // Keeps a candidate only if it is closer to the base than to every
    // neighbor already kept. `cands` must be sorted best first.
    std::vector<std::uint32_t> select_diverse(const std::vector<Scored>& cands, size_t limit) {
        std::vector<std::uint32_t> kept;
        kept.reserve(limit);
        for (const auto& [s, node] : cands) {
            if (kept.size() >= limit) {
                break;
            }
            bool good = true;
            for (auto r : kept) {
                if (sim(node, r) > s) {
                    good = false;
                    break;
                }
            }
            if (good) {
                kept.push_back(node);
            }
        }
        return kept;
    }

    void set_links(std::uint32_t node, size_t layer, const std::vector<std::uint32_t>& links) {
        std::uint32_t* b = block(node, layer);
        b[0] = static_cast<std::uint32_t>(links.size());
        std::copy(links.begin(), links.end(), b + 1);
    }

    void add_link(std::uint32_t from, std::uint32_t to, size_t layer) {
        std::uint32_t* b = block(from, layer);
        const size_t cap = index_.capacity(layer);
        if (b[0] < cap) {
            b[1 + b[0]] = to;
            ++b[0];
            return;
        }
        std::vector<Scored> cands;
        cands.reserve(cap + 1);
        for (size_t j = 0; j < b[0]; ++j) {
            cands.emplace_back(sim(from, b[1 + j]), b[1 + j]);
        }
        cands.emplace_back(sim(from, to), to);
        std::sort(cands.begin(), cands.end(), std::greater<>());
        set_links(from, layer, select_diverse(cands, cap));
    }

    void insert(std::uint32_t node) {
        const size_t level = index_.levels_[node];
        const auto sim_to = [&](std::uint32_t other) { return sim(node, other); };
        Scored cur{sim_to(index_.entry_), index_.entry_};
        if (index_.max_level_ > level) {
            cur = greedy_descend(*this, sim_to, cur, index_.max_level_, level);
        }
        std::vector<Scored> entry{cur};
        for (size_t layer = std::min(level, index_.max_level_) + 1; layer-- > 0;) {
            auto found = search_layer(*this, sim_to, prefetch_, entry,
                                      index_.params_.ef_construction, layer, visited_);
            const auto selected = select_diverse(found, index_.params_.m);
            set_links(node, layer, selected);
            for (auto nb : selected) {
                add_link(nb, node, layer);
            }
            entry = std::move(found);
        }
        if (level > index_.max_level_) {
            index_.entry_ = node;
            index_.max_level_ = level;
        }
    }

    // Heuristic pruning can strand a node on layer 0. Each stranded node gets
    // an in-link from its closest reachable node that has spare capacity.
    void repair_connectivity() {
        const size_t n = vectors_.rows();
        const size_t cap0 = index_.capacity(0);
        std::vector<char> reached(n, 0);
        const auto flood = [&](std::uint32_t start) {
            std::vector<std::uint32_t> stack{start};
            reached[start] = 1;
            while (!stack.empty()) {
                const auto cur = stack.back();
                stack.pop_back();
                for (auto nb : index_.neighbors(cur, 0)) {
                    if (!reached[nb]) {
                        reached[nb] = 1;
                        stack.push_back(nb);
                    }
                }
            }
        };
        for (int round = 0; round < 8; ++round) {
            std::fill(reached.begin(), reached.end(), 0);
            flood(index_.entry_);
            bool all = true;
            for (std::uint32_t u = 0; u < n; ++u) {
                if (reached[u]) {
                    continue;
                }
                all = false;
                const auto sim_to = [&](std::uint32_t other) { return sim(u, other); };
                std::vector<Scored> entry{{sim_to(index_.entry_), index_.entry_}};
                const auto found = search_layer(*this, sim_to, prefetch_, entry,
                                                std::max<size_t>(index_.params_.ef_construction, 64),
                                                0, visited_);
                std::uint32_t host = found.front().second;
                bool linked = false;
                for (const auto& [s, r] : found) {
                    if (reached[r] && r != u && block(r, 0)[0] < cap0) {
                        host = r;
                        linked = true;
                        break;
                    }
                }
                std::uint32_t* b = block(host, 0);
                if (linked) {
                    b[1 + b[0]] = u;
                    ++b[0];
                } else {
                    // Every candidate is full: overwrite the weakest link.
                    size_t worst = 0;
                    for (size_t j = 1; j < b[0]; ++j) {
                        if (sim(host, b[1 + j]) < sim(host, b[1 + worst])) {
                            worst = j;
                        }
                    }
                    b[1 + worst] = u;
                }
                flood(u);
            }
            if (all) {
                return;
            }
        }
    }

    struct RowPrefetch {
        const float* base;
        size_t dim;
        void operator()(std::uint32_t node) const {
            prefetch_bytes(base + node * dim, dim * sizeof(float));
        }
    };

    HnswIndex& index_;
    const Matrix& vectors_;
    VisitedList visited_;
    RowPrefetch prefetch_;
};

HnswIndex build_hnsw(const Matrix& vectors, std::vector<std::int64_t> ids,
                     const HnswParams& params, QuantMode quant) {
    validate_params(params);
    if (ids.size() != vectors.rows()) {
        throw_usage("HNSW build: " + std::to_string(vectors.rows()) + " vectors but " +
                        std::to_string(ids.size()) + " ids",
                    ErrorCode::dim_mismatch);
    }
    if (vectors.rows() > std::numeric_limits<std::uint32_t>::max() - 1) {
        throw_usage("HNSW build: too many vectors");
    }
    for (size_t i = 0; i < vectors.rows(); ++i) {
        const float norm = l2_norm(vectors.row(i));
        if (std::fabs(norm - 1.0f) > kNormTolerance) {
            throw_domain("HNSW build: row " + std::to_string(i) + " has L2 norm " +
                             std::to_string(norm) +
                             "; inner-product search requires unit-normalized vectors",
                         ErrorCode::precondition);
        }
    }
    HnswIndex index;
    index.params_ = params;
    index.ids_ = std::move(ids);
    HnswBuilder(index, vectors).build();
    index.store_ = VectorStore::quantize(vectors, quant);
    index.init_visited();
    return index;
}

std::vector<Hit> HnswIndex::search(std::span<const float> query, size_t k,
                                   std::optional<size_t> ef_search) const {
    const size_t ef = ef_search.value_or(params_.ef_search);
    if (k == 0) {
        throw_usage("k must be at least 1");
    }
    if (ef == 0) {
        throw_usage("ef_search must be at least 1");
    }
    if (k > ef) {
        throw_usage("k=" + std::to_string(k) + " exceeds ef_search=" + std::to_string(ef) +
                    "; raise ef_search to at least k");
    }
    const PreparedQuery q = store_.prepare(query);
    if (size() == 0) {
        return {};
    }
    const auto sim = [&](std::uint32_t node) { return store_.score(q, node); };
    Scored cur{sim(entry_), entry_};
    cur = greedy_descend(*this, sim, cur, max_level_, 0);
    auto visited = visited_->acquire();
    const Scored entry[] = {cur};
    const size_t row_bytes = store_.mode() == QuantMode::none ? dim() * sizeof(float) : dim();
    const auto prefetch = [&](std::uint32_t node) {
        prefetch_bytes(store_.row_address(node), row_bytes);
    };
    const auto found = search_layer(*this, sim, prefetch, entry, ef, 0, *visited);
    visited_->release(std::move(visited));

    std::vector<Hit> hits;
    hits.reserve(found.size());
    for (const auto& [s, node] : found) {
        hits.push_back({ids_[node], s});
    }
    std::sort(hits.begin(), hits.end(), hit_before);
    if (hits.size() > k) {
        hits.resize(k);
    }
    return hits;
}

}  // namespace paq
