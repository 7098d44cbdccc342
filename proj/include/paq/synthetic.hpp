#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paq/eval.hpp"
#include "paq/kb.hpp"
#include "paq/matrix.hpp"

namespace paq::synthetic {

// Gaussian rows normalized to unit length (uniform on the sphere).
Matrix unit_vectors(size_t count, size_t dim, std::uint64_t seed);

// Unit vectors scattered around `clusters` random centres; `spread` is the
// per-component noise added before renormalizing.
Matrix clustered_unit_vectors(size_t count, size_t dim, size_t clusters, float spread,
                              std::uint64_t seed);

// Pronounceable made-up word, capitalized, e.g. "Dorvelan".
std::string made_up_name(std::uint64_t& state, size_t syllables);

// Short encyclopedic passages with people, places, years and counts.
std::vector<PassageRecord> fact_passages(size_t count, std::uint64_t seed);

// Pairs of same-named villages in different countries. The first of each pair
// carries an extra descriptor, so a question built from the second one is a
// closer match to the first.
std::vector<PassageRecord> ambiguous_village_corpus(size_t villages, std::uint64_t seed);

struct ParaphraseFact {
    std::string subject;
    std::string answer;
    std::vector<std::string> kb_questions;
    std::string held_out_question;
};

struct ParaphraseSet {
    std::vector<ParaphraseFact> facts;
    KnowledgeBase kb;             // kb_questions of every fact, ids from 0
    std::vector<EvalItem> test;   // held-out phrasing of every fact
};

ParaphraseSet paraphrase_qa(size_t facts, size_t paraphrases, std::uint64_t seed);

}  // namespace paq::synthetic
