#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paq/embed.hpp"
#include "paq/index.hpp"
#include "paq/kb.hpp"
#include "paq/retrieve.hpp"

namespace paq {

struct EvalItem {
    std::string question;
    std::vector<std::string> answers;  // non-empty
};

struct EvalDataset {
    std::vector<EvalItem> items;
    // Positions whose normalized question repeats an earlier item.
    std::vector<size_t> duplicates;

    size_t size() const noexcept { return items.size(); }
};

enum class DuplicatePolicy { reject, flag };

// Lines of {"question", "answers": [..]}. With `reject`, a repeated
// normalized question is an error; with `flag` it is kept and listed.
EvalDataset load_dataset(const std::filesystem::path& path,
                         DuplicatePolicy policy = DuplicatePolicy::reject);
EvalDataset make_dataset(std::vector<EvalItem> items,
                         DuplicatePolicy policy = DuplicatePolicy::reject);

// Percentage in [0, 100].
double evaluate_em(std::span<const std::string> predictions, const EvalDataset& dataset);
std::vector<bool> em_per_item(std::span<const std::string> predictions, const EvalDataset& dataset);

double answer_coverage(const KnowledgeBase& kb, const EvalDataset& dataset);

enum class OverlapLabel { q_overlap, a_only_overlap, no_overlap };
std::string_view to_string(OverlapLabel label);

// Human-annotated paraphrases: test item position -> train item position.
struct ParaphraseLink {
    size_t test_id = 0;
    size_t train_id = 0;
};

std::vector<ParaphraseLink> load_paraphrases(const std::filesystem::path& path);

std::vector<OverlapLabel> overlap_splits(const EvalDataset& train, const EvalDataset& test,
                                         std::span<const ParaphraseLink> paraphrases = {});

struct SplitReport {
    OverlapLabel label = OverlapLabel::no_overlap;
    size_t count = 0;
    double em = 0.0;  // 0 when the split is empty
};

// One row per label, in enum order.
std::vector<SplitReport> split_em(std::span<const OverlapLabel> labels,
                                  const std::vector<bool>& correct);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

RougeScore rouge_l(std::string_view candidate, std::string_view reference);
size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

double passage_recall(std::span<const std::int64_t> ranked, std::span<const std::int64_t> positives,
                      size_t top_n);

struct SizeComponents {
    std::uint64_t model_params = 0;
    double bytes_per_param = 2.0;
    std::uint64_t text_bytes_compressed = 0;
    std::uint64_t n_index_items = 0;
    double bytes_per_item_index = 0.0;
};

double size_estimate(const SizeComponents& c);

// xz preset 6 with CRC64 check; returns the compressed length.
std::uint64_t lzma_compressed_size(std::string_view data);

// fp32: 4 * dim, int8: dim.
double bytes_per_index_item(QuantMode quant, size_t dim);

struct SweepConfig {
    EmbedderSpec embedder;
    IndexBuildSpec index;
    AnswerConfig answer;
    std::uint64_t model_params = 0;
    double bytes_per_param = 2.0;
};

struct SweepRow {
    size_t budget = 0;
    double bytes = 0.0;
    double em = 0.0;
    std::uint64_t text_bytes = 0;
};

// For each budget: keep the top-scored pairs, rebuild the index, answer the
// dataset and measure the artifact size.
std::vector<SweepRow> budget_sweep(const KnowledgeBase& kb, const EvalDataset& dataset,
                                   std::span<const size_t> budgets, const SweepConfig& config);

std::string sweep_tsv(std::span<const SweepRow> rows);

}  // namespace paq
