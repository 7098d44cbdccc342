#include "paq/binary_io.hpp"
#include "paq/error.hpp"
#include "paq/index.hpp"
#include "paq/jsonl.hpp"

namespace paq {

// Layout, little-endian throughout:
//   "PAQI" u16 version u8 kind u8 reserved
//   params:       u32 m, u32 ef_construction, u32 ef_search, u64 seed
//   shape:        u32 dim, u64 count
//   quantization: u8 mode [, f32 scale[dim], f32 offset[dim]]
//   ids:          i64[count]
//   vectors:      f32[count*dim] or i8[count*dim]
//   graph (hnsw): u32 max_level, u32 entry, then per node
//                 u8 level, and for each layer 0..level: u32 n, u32 links[n]

namespace {

void write_header(ByteWriter& w, IndexKind kind, const HnswParams& params, const VectorStore& store,
                  const std::vector<std::int64_t>& ids) {
    w.bytes("PAQI");
    w.put<std::uint16_t>(kIndexFileVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
    w.put<std::uint8_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.m));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.ef_construction));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.ef_search));
    w.put<std::uint64_t>(params.seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(store.dim()));
    w.put<std::uint64_t>(store.size());
    const auto& q = store.quantization();
    w.put<std::uint8_t>(static_cast<std::uint8_t>(q.mode));
    if (q.mode == QuantMode::int8_per_dim) {
        for (float s : q.scale) w.put(s);
        for (float o : q.offset) w.put(o);
    }
    for (auto id : ids) w.put(id);
    if (q.mode == QuantMode::none) {
        for (float x : store.fp32().data()) w.put(x);
    } else {
        for (std::int8_t c : store.codes()) w.put(c);
    }
}

}  // namespace

std::string FlatIndex::serialize() const {
    ByteWriter w;
    write_header(w, IndexKind::flat, HnswParams{0, 0, 0, 0}, store_, ids_);
    return w.take();
}

std::string HnswIndex::serialize() const {
    ByteWriter w;
    write_header(w, IndexKind::hnsw, params_, store_, ids_);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(max_level_));
    w.put<std::uint32_t>(entry_);
    for (size_t node = 0; node < size(); ++node) {
        w.put<std::uint8_t>(levels_[node]);
        for (size_t layer = 0; layer <= levels_[node]; ++layer) {
            const auto links = neighbors(node, layer);
            w.put<std::uint32_t>(static_cast<std::uint32_t>(links.size()));
            for (auto l : links) w.put(l);
        }
    }
    return w.take();
}

std::unique_ptr<VectorIndex> deserialize_index(std::string_view bytes, const std::string& what) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != "PAQI") {
        throw_domain(what + ": not a PAQI index file (bad magic)", ErrorCode::bad_magic);
    }
    ByteReader r(bytes.substr(4), what);
    const auto version = r.get<std::uint16_t>();
    if (version != kIndexFileVersion) {
        throw_domain(what + ": unsupported index version " + std::to_string(version),
                     ErrorCode::bad_version);
    }
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) {
        throw_domain(what + ": unknown index kind " + std::to_string(kind), ErrorCode::malformed);
    }
    r.get<std::uint8_t>();
    HnswParams params;
    params.m = r.get<std::uint32_t>();
    params.ef_construction = r.get<std::uint32_t>();
    params.ef_search = r.get<std::uint32_t>();
    params.seed = r.get<std::uint64_t>();
    const size_t dim = r.get<std::uint32_t>();
    const size_t count = r.get<std::uint64_t>();
    const auto mode = r.get<std::uint8_t>();
    if (mode > 1) {
        throw_domain(what + ": unknown quantization mode " + std::to_string(mode),
                     ErrorCode::malformed);
    }
    QuantizationSpec quant;
    quant.mode = static_cast<QuantMode>(mode);
    if (quant.mode == QuantMode::int8_per_dim) {
        r.need(dim * 8);
        quant.scale.resize(dim);
        quant.offset.resize(dim);
        for (auto& s : quant.scale) s = r.get<float>();
        for (auto& o : quant.offset) o = r.get<float>();
    }
    const size_t elem = quant.mode == QuantMode::none ? 4 : 1;
    if (count > r.remaining() / 8 || (dim != 0 && count > r.remaining() / (dim * elem))) {
        throw_domain(what + ": truncated payload", ErrorCode::truncated);
    }
    std::vector<std::int64_t> ids(count);
    for (auto& id : ids) id = r.get<std::int64_t>();
    VectorStore store;
    if (quant.mode == QuantMode::none) {
        std::vector<float> data(count * dim);
        for (auto& x : data) x = r.get<float>();
        store = VectorStore(Matrix(count, dim, std::move(data)));
    } else {
        std::vector<std::int8_t> codes(count * dim);
        for (auto& c : codes) c = r.get<std::int8_t>();
        store = VectorStore(std::move(quant), count, dim, std::move(codes));
    }

    if (kind == static_cast<std::uint8_t>(IndexKind::flat)) {
        if (r.remaining() != 0) {
            throw_domain(what + ": trailing bytes after payload", ErrorCode::malformed);
        }
        return std::make_unique<FlatIndex>(std::move(store), std::move(ids));
    }

    validate_params(params);
    auto index = std::make_unique<HnswIndex>();
    index->params_ = params;
    index->max_level_ = r.get<std::uint32_t>();
    index->entry_ = r.get<std::uint32_t>();
    if (count > 0 && index->entry_ >= count) {
        throw_domain(what + ": entry point out of range", ErrorCode::malformed);
    }
    const size_t m = params.m;
    index->levels_.resize(count);
    index->links0_.assign(count * (2 * m + 1), 0);
    index->upper_.resize(count);
    for (size_t node = 0; node < count; ++node) {
        const auto level = r.get<std::uint8_t>();
        if (level > index->max_level_) {
            throw_domain(what + ": node level exceeds max level", ErrorCode::malformed);
        }
        index->levels_[node] = level;
        index->upper_[node].assign(level * (m + 1), 0);
        for (size_t layer = 0; layer <= level; ++layer) {
            const auto n = r.get<std::uint32_t>();
            const size_t cap = layer == 0 ? 2 * m : m;
            if (n > cap) {
                throw_domain(what + ": neighbor list exceeds capacity", ErrorCode::malformed);
            }
            std::uint32_t* block = layer == 0 ? index->links0_.data() + node * (2 * m + 1)
                                              : index->upper_[node].data() + (layer - 1) * (m + 1);
            block[0] = n;
            for (size_t j = 0; j < n; ++j) {
                const auto nb = r.get<std::uint32_t>();
                if (nb >= count) {
                    throw_domain(what + ": neighbor id out of range", ErrorCode::malformed);
                }
                block[1 + j] = nb;
            }
        }
    }
    if (r.remaining() != 0) {
        throw_domain(what + ": trailing bytes after payload", ErrorCode::malformed);
    }
    index->store_ = std::move(store);
    index->ids_ = std::move(ids);
    index->init_visited();
    return index;
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
    write_file(path, index.serialize());
}

std::unique_ptr<VectorIndex> load_index(const std::filesystem::path& path) {
    return deserialize_index(read_file(path), path.string());
}

}  // namespace paq

namespace paq {

std::unique_ptr<VectorIndex> build_index(const Matrix& vectors, std::vector<std::int64_t> ids,
                                         const IndexBuildSpec& spec) {
    if (spec.kind == IndexKind::flat) {
        return std::make_unique<FlatIndex>(build_flat(vectors, std::move(ids), spec.quant));
    }
    return std::make_unique<HnswIndex>(build_hnsw(vectors, std::move(ids), spec.hnsw, spec.quant));
}

}  // namespace paq
