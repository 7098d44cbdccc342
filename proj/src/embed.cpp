#include "paq/embed.hpp"

#include <charconv>
#include <cmath>
#include <thread>

#include "paq/binary_io.hpp"
#include "paq/error.hpp"
#include "paq/jsonl.hpp"
#include "paq/subprocess.hpp"
#include "paq/text.hpp"

namespace paq {

float l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) {
        s += static_cast<double>(x) * x;
    }
    return static_cast<float>(std::sqrt(s));
}

std::string_view to_string(EmbedderKind kind) {
    switch (kind) {
        case EmbedderKind::feature_hash:
            return "feature-hash";
        case EmbedderKind::external_file:
            return "external-file";
        case EmbedderKind::subprocess:
            return "subprocess";
    }
    return "feature-hash";
}

EmbedderKind embedder_kind_from_string(std::string_view name) {
    if (name == "feature-hash") return EmbedderKind::feature_hash;
    if (name == "external-file") return EmbedderKind::external_file;
    if (name == "subprocess") return EmbedderKind::subprocess;
    throw_usage("unknown embedder kind '" + std::string(name) + "'");
}

void validate_spec(const EmbedderSpec& spec) {
    if (spec.dim < kMinEmbedDim) {
        throw_usage("embedding dim must be at least " + std::to_string(kMinEmbedDim) + ", got " +
                    std::to_string(spec.dim));
    }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

void add_feature(std::vector<float>& acc, std::string_view feature, std::uint64_t seed_mix) {
    const std::uint64_t h = splitmix64(fnv1a(feature) ^ seed_mix);
    const size_t slot = static_cast<size_t>((h & 0xFFFFFFFFULL) % acc.size());
    acc[slot] += (h >> 63) ? -1.0f : 1.0f;
}

}  // namespace

std::vector<float> embed_text(std::string_view text, const EmbedderSpec& spec) {
    validate_spec(spec);
    if (spec.kind != EmbedderKind::feature_hash) {
        throw_usage("embed_text needs a feature-hash spec");
    }
    std::vector<float> v(spec.dim, 0.0f);
    const std::uint64_t seed_mix = splitmix64(spec.seed);
    const auto tokens = alnum_tokens(text);
    std::string feat;
    for (size_t i = 0; i < tokens.size(); ++i) {
        feat.assign("w\x1f").append(tokens[i]);
        add_feature(v, feat, seed_mix);
        if (i + 1 < tokens.size()) {
            feat.assign("b\x1f").append(tokens[i]).append(" ").append(tokens[i + 1]);
            add_feature(v, feat, seed_mix);
        }
        const auto chars = utf8_chars(tokens[i]);
        for (size_t n = 3; n <= 5; ++n) {
            for (size_t s = 0; s + n <= chars.size(); ++s) {
                feat.assign("c\x1f");
                for (size_t k = s; k < s + n; ++k) {
                    feat += chars[k];
                }
                add_feature(v, feat, seed_mix);
            }
        }
    }
    if (tokens.empty()) {
        // No alphanumeric content: hash the raw text so the row stays non-zero.
        feat.assign("e\x1f").append(text);
        add_feature(v, feat, seed_mix);
    }
    if (spec.normalize) {
        const float norm = l2_norm(v);
        if (norm > 0.0f) {
            for (float& x : v) {
                x /= norm;
            }
        }
    }
    return v;
}

Matrix Embedder::embed_batch(std::span<const std::string> texts) const {
    Matrix m(texts.size(), dim());
    for (size_t i = 0; i < texts.size(); ++i) {
        auto v = embed(texts[i]);
        std::copy(v.begin(), v.end(), m.row(i).begin());
    }
    return m;
}

FeatureHashEmbedder::FeatureHashEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
    spec_.kind = EmbedderKind::feature_hash;
    validate_spec(spec_);
}

std::vector<float> FeatureHashEmbedder::embed(std::string_view text) const {
    return embed_text(text, spec_);
}

SubprocessEmbedder::SubprocessEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
    validate_spec(spec_);
    if (spec_.source.empty()) {
        throw_usage("subprocess embedder needs a command");
    }
    proc_ = std::make_unique<Subprocess>(spec_.source);
}

SubprocessEmbedder::~SubprocessEmbedder() = default;

std::vector<float> SubprocessEmbedder::embed(std::string_view text) const {
    std::string line;
    {
        std::lock_guard lock(mu_);
        std::string clean(text);
        for (char& c : clean) {
            if (c == '\n' || c == '\r') {
                c = ' ';
            }
        }
        line = proc_->request(clean);
    }
    std::vector<float> v;
    v.reserve(spec_.dim);
    for (const auto& tok : split_whitespace(line)) {
        char* end = nullptr;
        const float x = std::strtof(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || !std::isfinite(x)) {
            throw Error(ErrorKind::domain, ErrorCode::backend,
                        "embedder subprocess returned a non-numeric value '" + tok + "'");
        }
        v.push_back(x);
    }
    if (v.size() != spec_.dim) {
        throw Error(ErrorKind::domain, ErrorCode::dim_mismatch,
                    "embedder subprocess returned " + std::to_string(v.size()) +
                        " values, expected " + std::to_string(spec_.dim));
    }
    if (spec_.normalize) {
        const float norm = l2_norm(v);
        if (norm > 0.0f) {
            for (float& x : v) {
                x /= norm;
            }
        }
    }
    return v;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
    switch (spec.kind) {
        case EmbedderKind::feature_hash:
            return std::make_unique<FeatureHashEmbedder>(spec);
        case EmbedderKind::subprocess:
            return std::make_unique<SubprocessEmbedder>(spec);
        case EmbedderKind::external_file:
            break;
    }
    throw_usage("external-file vectors cannot embed new questions; use feature-hash or "
                "subprocess for queries");
}

Matrix embed_kb(const KnowledgeBase& kb, const Embedder& embedder, size_t threads) {
    Matrix m(kb.size(), embedder.dim());
    const auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const auto v = embedder.embed(kb[i].question);
            std::copy(v.begin(), v.end(), m.row(i).begin());
        }
    };
    threads = std::max<size_t>(1, std::min(threads, kb.size()));
    if (threads == 1) {
        work(0, kb.size());
        return m;
    }
    std::vector<std::thread> pool;
    const size_t chunk = (kb.size() + threads - 1) / threads;
    for (size_t t = 0; t < threads; ++t) {
        const size_t b = t * chunk;
        const size_t e = std::min(kb.size(), b + chunk);
        if (b < e) {
            pool.emplace_back(work, b, e);
        }
    }
    for (auto& th : pool) {
        th.join();
    }
    return m;
}

Matrix embed_kb(const KnowledgeBase& kb, const EmbedderSpec& spec) {
    validate_spec(spec);
    if (spec.kind == EmbedderKind::external_file) {
        Matrix m = load_vectors(spec.source, spec.dim);
        if (m.rows() != kb.size()) {
            throw_domain("vector file " + spec.source + " has " + std::to_string(m.rows()) +
                             " rows but the KB has " + std::to_string(kb.size()) + " pairs",
                         ErrorCode::dim_mismatch);
        }
        return m;
    }
    return embed_kb(kb, *make_embedder(spec));
}

VectorFile read_vector_file(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    ByteReader r(data, path.string());
    if (data.size() < 4 || r.bytes(4) != "PAQV") {
        throw_domain(path.string() + ": not a PAQV vector file (bad magic)", ErrorCode::bad_magic);
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kVectorFileVersion) {
        throw_domain(path.string() + ": unsupported vector file version " +
                         std::to_string(version),
                     ErrorCode::bad_version);
    }
    VectorFile f;
    const auto dtype = r.get<std::uint16_t>();
    if (dtype > 1) {
        throw_domain(path.string() + ": unknown dtype " + std::to_string(dtype),
                     ErrorCode::malformed);
    }
    f.dtype = static_cast<VectorDtype>(dtype);
    f.dim = r.get<std::uint32_t>();
    f.count = r.get<std::uint64_t>();
    const size_t elem = f.dtype == VectorDtype::fp32 ? 4 : 1;
    if (f.dim != 0 && f.count > r.remaining() / f.dim / elem) {
        throw_domain(path.string() + ": truncated payload", ErrorCode::truncated);
    }
    const size_t n = f.count * f.dim;
    if (f.dtype == VectorDtype::fp32) {
        f.fp32.resize(n);
        for (size_t i = 0; i < n; ++i) {
            f.fp32[i] = r.get<float>();
        }
    } else {
        f.int8.resize(n);
        for (size_t i = 0; i < n; ++i) {
            f.int8[i] = r.get<std::int8_t>();
        }
    }
    if (r.remaining() != 0) {
        throw_domain(path.string() + ": trailing bytes after payload", ErrorCode::malformed);
    }
    return f;
}

void write_vector_file(const VectorFile& file, const std::filesystem::path& path) {
    ByteWriter w;
    w.bytes("PAQV");
    w.put<std::uint16_t>(kVectorFileVersion);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(file.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(file.dim));
    w.put<std::uint64_t>(file.count);
    if (file.dtype == VectorDtype::fp32) {
        for (float x : file.fp32) {
            w.put(x);
        }
    } else {
        for (std::int8_t x : file.int8) {
            w.put(x);
        }
    }
    write_file(path, w.buffer());
}

Matrix load_vectors(const std::filesystem::path& path, size_t expected_dim) {
    VectorFile f = read_vector_file(path);
    if (f.dim != expected_dim) {
        throw_domain(path.string() + ": dimension mismatch, file has " + std::to_string(f.dim) +
                         ", expected " + std::to_string(expected_dim),
                     ErrorCode::dim_mismatch);
    }
    if (f.dtype == VectorDtype::fp32) {
        return Matrix(f.count, f.dim, std::move(f.fp32));
    }
    std::vector<float> widened(f.int8.begin(), f.int8.end());
    return Matrix(f.count, f.dim, std::move(widened));
}

void save_vectors(const Matrix& vectors, const std::filesystem::path& path) {
    VectorFile f;
    f.dtype = VectorDtype::fp32;
    f.dim = vectors.dim();
    f.count = vectors.rows();
    f.fp32 = vectors.data();
    write_vector_file(f, path);
}

}  // namespace paq
