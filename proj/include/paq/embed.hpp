#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "paq/kb.hpp"
#include "paq/matrix.hpp"

namespace paq {

class Subprocess;

enum class EmbedderKind { feature_hash, external_file, subprocess };

std::string_view to_string(EmbedderKind kind);
EmbedderKind embedder_kind_from_string(std::string_view name);

inline constexpr size_t kDefaultEmbedDim = 768;
inline constexpr size_t kMinEmbedDim = 8;
inline constexpr float kUnitNormTolerance = 1e-5f;

struct EmbedderSpec {
    EmbedderKind kind = EmbedderKind::feature_hash;
    size_t dim = kDefaultEmbedDim;
    std::uint64_t seed = 0;
    bool normalize = true;
    // Vector file for external-file, shell command for subprocess.
    std::string source;
};

void validate_spec(const EmbedderSpec& spec);

// Signed feature hashing over word unigrams, word bigrams and character
// 3/4/5-grams of each token. Pure function of (text, dim, seed).
std::vector<float> embed_text(std::string_view text, const EmbedderSpec& spec);

// The single question encoder used for both stored questions and queries.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual size_t dim() const = 0;
    virtual std::vector<float> embed(std::string_view text) const = 0;
    virtual Matrix embed_batch(std::span<const std::string> texts) const;
    virtual const EmbedderSpec& spec() const = 0;
};

class FeatureHashEmbedder final : public Embedder {
public:
    explicit FeatureHashEmbedder(EmbedderSpec spec);
    size_t dim() const override { return spec_.dim; }
    std::vector<float> embed(std::string_view text) const override;
    const EmbedderSpec& spec() const override { return spec_; }

private:
    EmbedderSpec spec_;
};

// Talks to an external model: one question per line in, one line of `dim`
// space-separated reals out.
class SubprocessEmbedder final : public Embedder {
public:
    explicit SubprocessEmbedder(EmbedderSpec spec);
    ~SubprocessEmbedder() override;
    size_t dim() const override { return spec_.dim; }
    std::vector<float> embed(std::string_view text) const override;
    const EmbedderSpec& spec() const override { return spec_; }

private:
    EmbedderSpec spec_;
    std::unique_ptr<Subprocess> proc_;
    mutable std::mutex mu_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

// Row i embeds kb[i].question. For external-file specs the rows come from the
// vector file and must number exactly kb.size().
Matrix embed_kb(const KnowledgeBase& kb, const EmbedderSpec& spec);
Matrix embed_kb(const KnowledgeBase& kb, const Embedder& embedder, size_t threads = 1);

// Binary vector file: "PAQV", u16 version, u16 dtype, u32 dim, u64 count,
// row-major little-endian payload.
enum class VectorDtype : std::uint16_t { fp32 = 0, int8 = 1 };

struct VectorFile {
    VectorDtype dtype = VectorDtype::fp32;
    size_t dim = 0;
    size_t count = 0;
    std::vector<float> fp32;
    std::vector<std::int8_t> int8;
};

inline constexpr std::uint16_t kVectorFileVersion = 1;

VectorFile read_vector_file(const std::filesystem::path& path);
void write_vector_file(const VectorFile& file, const std::filesystem::path& path);

// int8 payloads are widened to float without rescaling.
Matrix load_vectors(const std::filesystem::path& path, size_t expected_dim);
void save_vectors(const Matrix& vectors, const std::filesystem::path& path);

}  // namespace paq
