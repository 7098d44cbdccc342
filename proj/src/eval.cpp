#include "paq/eval.hpp"

#include <lzma.h>

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "paq/error.hpp"
#include "paq/jsonl.hpp"
#include "paq/text.hpp"

namespace paq {

EvalDataset make_dataset(std::vector<EvalItem> items, DuplicatePolicy policy) {
    EvalDataset ds;
    std::unordered_map<std::string, size_t> seen;
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].answers.empty()) {
            throw_domain("item " + std::to_string(i) + " has no gold answers", ErrorCode::malformed);
        }
        auto [it, fresh] = seen.emplace(normalize_answer(items[i].question), i);
        if (!fresh) {
            if (policy == DuplicatePolicy::reject) {
                throw_domain("duplicate question at items " + std::to_string(it->second) + " and " +
                                 std::to_string(i),
                             ErrorCode::duplicate_id);
            }
            ds.duplicates.push_back(i);
        }
    }
    ds.items = std::move(items);
    return ds;
}

EvalDataset load_dataset(const std::filesystem::path& path, DuplicatePolicy policy) {
    std::vector<EvalItem> items;
    for_each_jsonl(path, [&](size_t line, const nlohmann::json& j) {
        auto where = [&] { return path.string() + ":" + std::to_string(line) + ": "; };
        try {
            EvalItem item;
            item.question = j.at("question").get<std::string>();
            item.answers = j.at("answers").get<std::vector<std::string>>();
            if (item.answers.empty()) {
                throw_domain(where() + "answers must be non-empty", ErrorCode::malformed);
            }
            items.push_back(std::move(item));
        } catch (const nlohmann::json::exception& e) {
            throw_domain(where() + e.what(), ErrorCode::malformed);
        }
    });
    return make_dataset(std::move(items), policy);
}

std::vector<bool> em_per_item(std::span<const std::string> predictions,
                              const EvalDataset& dataset) {
    if (predictions.size() != dataset.size()) {
        throw_usage("got " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(dataset.size()) + " questions");
    }
    std::vector<bool> out(predictions.size());
    for (size_t i = 0; i < predictions.size(); ++i) {
        out[i] = exact_match(predictions[i], dataset.items[i].answers);
    }
    return out;
}

double evaluate_em(std::span<const std::string> predictions, const EvalDataset& dataset) {
    const auto hits = em_per_item(predictions, dataset);
    if (hits.empty()) {
        return 0.0;
    }
    const auto n = std::count(hits.begin(), hits.end(), true);
    return 100.0 * static_cast<double>(n) / static_cast<double>(hits.size());
}

double answer_coverage(const KnowledgeBase& kb, const EvalDataset& dataset) {
    if (dataset.items.empty()) {
        return 0.0;
    }
    std::unordered_set<std::string> answers;
    answers.reserve(kb.size());
    for (const auto& p : kb.pairs()) {
        answers.insert(normalize_answer(p.answer));
    }
    size_t covered = 0;
    for (const auto& item : dataset.items) {
        for (const auto& gold : item.answers) {
            if (answers.contains(normalize_answer(gold))) {
                ++covered;
                break;
            }
        }
    }
    return 100.0 * static_cast<double>(covered) / static_cast<double>(dataset.size());
}

std::string_view to_string(OverlapLabel label) {
    switch (label) {
        case OverlapLabel::q_overlap: return "q-overlap";
        case OverlapLabel::a_only_overlap: return "a-only-overlap";
        case OverlapLabel::no_overlap: return "no-overlap";
    }
    return "no-overlap";
}

std::vector<ParaphraseLink> load_paraphrases(const std::filesystem::path& path) {
    std::vector<ParaphraseLink> links;
    for_each_jsonl(path, [&](size_t line, const nlohmann::json& j) {
        try {
            links.push_back({j.at("test_id").get<size_t>(), j.at("train_id").get<size_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw_domain(path.string() + ":" + std::to_string(line) + ": " + e.what(),
                         ErrorCode::malformed);
        }
    });
    return links;
}

std::vector<OverlapLabel> overlap_splits(const EvalDataset& train, const EvalDataset& test,
                                         std::span<const ParaphraseLink> paraphrases) {
    std::vector<bool> paraphrased(test.size(), false);
    for (const auto& link : paraphrases) {
        if (link.test_id >= test.size() || link.train_id >= train.size()) {
            throw_domain("paraphrase link (" + std::to_string(link.test_id) + ", " +
                             std::to_string(link.train_id) + ") references an unknown question",
                         ErrorCode::not_found);
        }
        paraphrased[link.test_id] = true;
    }
    std::unordered_set<std::string> train_q;
    std::unordered_set<std::string> train_a;
    for (const auto& item : train.items) {
        train_q.insert(normalize_answer(item.question));
        for (const auto& a : item.answers) {
            train_a.insert(normalize_answer(a));
        }
    }
    std::vector<OverlapLabel> labels(test.size(), OverlapLabel::no_overlap);
    for (size_t i = 0; i < test.size(); ++i) {
        const auto& item = test.items[i];
        if (paraphrased[i] || train_q.contains(normalize_answer(item.question))) {
            labels[i] = OverlapLabel::q_overlap;
            continue;
        }
        for (const auto& a : item.answers) {
            if (train_a.contains(normalize_answer(a))) {
                labels[i] = OverlapLabel::a_only_overlap;
                break;
            }
        }
    }
    return labels;
}

std::vector<SplitReport> split_em(std::span<const OverlapLabel> labels,
                                  const std::vector<bool>& correct) {
    if (labels.size() != correct.size()) {
        throw_usage("labels and correctness flags differ in length");
    }
    std::vector<SplitReport> rows = {{OverlapLabel::q_overlap, 0, 0.0},
                                     {OverlapLabel::a_only_overlap, 0, 0.0},
                                     {OverlapLabel::no_overlap, 0, 0.0}};
    std::vector<size_t> hits(3, 0);
    for (size_t i = 0; i < labels.size(); ++i) {
        const auto slot = static_cast<size_t>(labels[i]);
        ++rows[slot].count;
        hits[slot] += correct[i] ? 1 : 0;
    }
    for (size_t s = 0; s < 3; ++s) {
        if (rows[s].count > 0) {
            rows[s].em = 100.0 * static_cast<double>(hits[s]) / static_cast<double>(rows[s].count);
        }
    }
    return rows;
}

size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() < b.size()) {
        std::swap(a, b);
    }
    std::vector<size_t> row(b.size() + 1, 0);
    for (const auto& x : a) {
        size_t diag = 0;
        for (size_t j = 1; j <= b.size(); ++j) {
            const size_t up = row[j];
            row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
            diag = up;
        }
    }
    return row[b.size()];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
    const auto cand = split_whitespace(normalize_keep_articles(candidate));
    const auto ref = split_whitespace(normalize_keep_articles(reference));
    RougeScore s;
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    if (lcs == 0.0) {
        return s;
    }
    s.precision = lcs / static_cast<double>(cand.size());
    s.recall = lcs / static_cast<double>(ref.size());
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

double passage_recall(std::span<const std::int64_t> ranked, std::span<const std::int64_t> positives,
                      size_t top_n) {
    if (positives.empty()) {
        throw_usage("passage_recall needs at least one positive passage", ErrorCode::empty_input);
    }
    if (top_n > ranked.size()) {
        throw_usage("top_n " + std::to_string(top_n) + " exceeds ranked list length " +
                    std::to_string(ranked.size()));
    }
    const std::unordered_set<std::int64_t> pos(positives.begin(), positives.end());
    const std::unordered_set<std::int64_t> prefix(ranked.begin(), ranked.begin() + top_n);
    size_t found = 0;
    for (auto id : pos) {
        found += prefix.contains(id) ? 1 : 0;
    }
    return 100.0 * static_cast<double>(found) / static_cast<double>(pos.size());
}

double size_estimate(const SizeComponents& c) {
    if (c.bytes_per_param < 0.0 || c.bytes_per_item_index < 0.0) {
        throw_usage("size components must be nonnegative");
    }
    return static_cast<double>(c.model_params) * c.bytes_per_param +
           static_cast<double>(c.text_bytes_compressed) +
           static_cast<double>(c.n_index_items) * c.bytes_per_item_index;
}

std::uint64_t lzma_compressed_size(std::string_view data) {
    std::vector<std::uint8_t> out(lzma_stream_buffer_bound(data.size()));
    size_t out_pos = 0;
    const auto rc = lzma_easy_buffer_encode(6, LZMA_CHECK_CRC64, nullptr,
                                            reinterpret_cast<const std::uint8_t*>(data.data()),
                                            data.size(), out.data(), &out_pos, out.size());
    if (rc != LZMA_OK) {
        throw_domain("lzma compression failed (code " + std::to_string(rc) + ")",
                     ErrorCode::backend);
    }
    return out_pos;
}

double bytes_per_index_item(QuantMode quant, size_t dim) {
    return quant == QuantMode::int8_per_dim ? static_cast<double>(dim)
                                            : 4.0 * static_cast<double>(dim);
}

std::vector<SweepRow> budget_sweep(const KnowledgeBase& kb, const EvalDataset& dataset,
                                   std::span<const size_t> budgets, const SweepConfig& config) {
    for (size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i] == 0 || budgets[i] > kb.size()) {
            throw_usage("budget " + std::to_string(budgets[i]) + " outside [1, " +
                        std::to_string(kb.size()) + "]");
        }
        if (i > 0 && budgets[i] <= budgets[i - 1]) {
            throw_usage("budgets must be strictly ascending");
        }
    }
    std::shared_ptr<const Embedder> embedder = make_embedder(config.embedder);
    const Matrix all = embed_kb(kb, *embedder, config.answer.threads);
    std::vector<std::string> questions;
    questions.reserve(dataset.size());
    for (const auto& item : dataset.items) {
        questions.push_back(item.question);
    }

    std::vector<SweepRow> rows;
    for (size_t budget : budgets) {
        auto kept = std::make_shared<const KnowledgeBase>(filter_by_score(kb, budget));
        Matrix vectors(0, all.dim());
        std::vector<std::int64_t> ids;
        ids.reserve(kept->size());
        for (const auto& p : kept->pairs()) {
            vectors.append_row(all.row(*kb.position_of(p.id)));
            ids.push_back(p.id);
        }
        std::shared_ptr<const VectorIndex> index = build_index(vectors, ids, config.index);
        const Retriever retriever(kept, index, embedder);
        const auto preds = batch_answer(retriever, questions, config.answer);
        std::vector<std::string> answers;
        answers.reserve(preds.size());
        for (const auto& p : preds) {
            answers.push_back(p.answer);
        }
        SweepRow row;
        row.budget = budget;
        row.em = evaluate_em(answers, dataset);
        row.text_bytes = lzma_compressed_size(serialize_kb(*kept));
        SizeComponents c;
        c.model_params = config.model_params;
        c.bytes_per_param = config.bytes_per_param;
        c.text_bytes_compressed = row.text_bytes;
        c.n_index_items = kept->size();
        c.bytes_per_item_index = bytes_per_index_item(config.index.quant, all.dim());
        row.bytes = size_estimate(c);
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_tsv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out.precision(10);
    out << "budget\tbytes\tem\ttext_bytes\n";
    for (const auto& r : rows) {
        out << r.budget << '\t' << static_cast<std::uint64_t>(r.bytes) << '\t' << r.em << '\t'
            << r.text_bytes << '\n';
    }
    return out.str();
}

}  // namespace paq
