#include "paq/synthetic.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

#include "paq/error.hpp"

namespace paq::synthetic {

namespace {

std::uint64_t next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

size_t pick(std::uint64_t& state, size_t n) {
    return static_cast<size_t>(next(state) % n);
}

template <typename T, size_t N>
const T& pick_from(std::uint64_t& state, const T (&items)[N]) {
    return items[pick(state, N)];
}

void normalize_row(std::span<float> row) {
    double sq = 0.0;
    for (float x : row) {
        sq += static_cast<double>(x) * x;
    }
    const auto inv = static_cast<float>(1.0 / std::sqrt(sq));
    for (float& x : row) {
        x *= inv;
    }
}

// Fresh names, never repeated within one generator.
class NamePool {
public:
    explicit NamePool(std::uint64_t seed) : state_(seed) {}
    std::string take(size_t syllables) {
        for (;;) {
            auto name = made_up_name(state_, syllables);
            if (used_.insert(name).second) {
                return name;
            }
        }
    }
    std::uint64_t& state() { return state_; }

private:
    std::uint64_t state_;
    std::unordered_set<std::string> used_;
};

}  // namespace

Matrix unit_vectors(size_t count, size_t dim, std::uint64_t seed) {
    if (dim == 0) {
        throw_usage("dim must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    Matrix m(count, dim);
    for (size_t i = 0; i < count; ++i) {
        auto row = m.row(i);
        for (float& x : row) {
            x = gauss(rng);
        }
        normalize_row(row);
    }
    return m;
}

Matrix clustered_unit_vectors(size_t count, size_t dim, size_t clusters, float spread,
                              std::uint64_t seed) {
    if (clusters == 0) {
        throw_usage("clusters must be positive");
    }
    const Matrix centres = unit_vectors(clusters, dim, seed ^ 0x5bd1e995ULL);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    Matrix m(count, dim);
    for (size_t i = 0; i < count; ++i) {
        const auto c = centres.row(static_cast<size_t>(rng() % clusters));
        auto row = m.row(i);
        for (size_t d = 0; d < dim; ++d) {
            row[d] = c[d] + spread * gauss(rng);
        }
        normalize_row(row);
    }
    return m;
}

std::string made_up_name(std::uint64_t& state, size_t syllables) {
    static const char* const onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                         "r", "s", "t", "v", "z", "br", "dr", "gr", "st",
                                         "th", "kr", "pl", "sh"};
    static const char* const vowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
    static const char* const codas[] = {"", "", "n", "r", "l", "s", "m", "th"};
    std::string name;
    for (size_t s = 0; s < syllables; ++s) {
        name += pick_from(state, onsets);
        name += pick_from(state, vowels);
        name += pick_from(state, codas);
    }
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    return name;
}

std::vector<PassageRecord> fact_passages(size_t count, std::uint64_t seed) {
    static const char* const jobs[] = {"painter", "chemist", "poet", "architect", "composer",
                                       "explorer", "engineer", "novelist"};
    static const char* const things[] = {"bridge", "cathedral", "observatory", "library",
                                         "harbour", "museum", "stadium", "monastery"};
    static const char* const units[] = {"arches", "towers", "bells", "rooms", "gates",
                                        "windows", "pillars", "galleries"};
    NamePool names(seed);
    auto& st = names.state();
    std::vector<PassageRecord> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const auto person = names.take(2) + " " + names.take(3);
        const auto city = names.take(3);
        const auto region = names.take(2);
        const auto building = names.take(2);
        const int born = 1600 + static_cast<int>(pick(st, 380));
        const int built = born + 20 + static_cast<int>(pick(st, 40));
        const int n = 3 + static_cast<int>(pick(st, 60));
        PassageRecord p;
        p.passage_id = static_cast<std::int64_t>(i);
        p.title = person;
        std::string text;
        switch (pick(st, 3)) {
            case 0:
                text = person + " was a " + pick_from(st, jobs) + " born in " + city + " in " +
                       std::to_string(born) + ". The " + building + " " + pick_from(st, things) +
                       " in " + region + " was completed in " + std::to_string(built) +
                       " and has " + std::to_string(n) + " " + pick_from(st, units) + ".";
                break;
            case 1:
                text = "The " + building + " " + pick_from(st, things) + " was designed by " +
                       person + " and opened in " + std::to_string(built) + ". It stands in " +
                       city + ", the largest town of " + region + ".";
                break;
            default:
                text = "In " + std::to_string(born) + " the " + pick_from(st, jobs) + " " +
                       person + " moved to " + city + ". There " + person + " wrote " +
                       std::to_string(n) + " letters about " + region + ".";
                break;
        }
        p.text = std::move(text);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<PassageRecord> ambiguous_village_corpus(size_t villages, std::uint64_t seed) {
    static const char* const descriptors[] = {"historic", "quiet", "coastal", "remote",
                                              "ancient", "hillside"};
    NamePool names(seed);
    auto& st = names.state();
    std::vector<PassageRecord> out;
    std::int64_t id = 0;
    for (size_t v = 0; v < villages; ++v) {
        const auto village = names.take(3);
        const auto first_country = names.take(2);
        const auto second_country = names.take(3);
        PassageRecord a;
        a.passage_id = id++;
        a.title = village;
        a.text = village + " is a " + pick_from(st, descriptors) + " village in " +
                 first_country + ".";
        PassageRecord b;
        b.passage_id = id++;
        b.title = village;
        b.text = village + " is a village in " + second_country + ".";
        out.push_back(std::move(a));
        out.push_back(std::move(b));
    }
    return out;
}

ParaphraseSet paraphrase_qa(size_t facts, size_t paraphrases, std::uint64_t seed) {
    struct Relation {
        std::vector<const char*> phrasings;  // "{}" is replaced by the subject
    };
    static const std::vector<Relation> relations = {
        {{"what is the capital of {}", "which city is the capital of {}",
          "{} has which city as its capital", "name the capital city of {}"}},
        {{"who founded {}", "{} was founded by whom", "who was the founder of {}",
          "name the person who founded {}"}},
        {{"what river flows through {}", "which river runs through {}",
          "{} lies on which river", "name the river that crosses {}"}},
        {{"who wrote the novel {}", "the novel {} was written by whom",
          "who is the author of {}", "name the writer of the book {}"}},
        {{"what language is spoken in {}", "which language do people in {} speak",
          "the main language of {} is what", "name the language used in {}"}},
    };
    if (paraphrases == 0 || paraphrases >= 4) {
        throw_usage("paraphrases per fact must be in [1, 3]");
    }
    NamePool names(seed);
    ParaphraseSet set;
    std::vector<QAPair> pairs;
    for (size_t f = 0; f < facts; ++f) {
        const auto& rel = relations[f % relations.size()];
        ParaphraseFact fact;
        fact.subject = names.take(3);
        fact.answer = names.take(2);
        const auto fill = [&](const char* pattern) {
            std::string s(pattern);
            const auto at = s.find("{}");
            return s.replace(at, 2, fact.subject);
        };
        for (size_t p = 0; p < paraphrases; ++p) {
            fact.kb_questions.push_back(fill(rel.phrasings[p]));
            QAPair pair;
            pair.id = static_cast<std::int64_t>(pairs.size());
            pair.question = fact.kb_questions.back();
            pair.answer = fact.answer;
            pair.score = 1.0;
            pair.source = QaSource::other;
            pairs.push_back(std::move(pair));
        }
        fact.held_out_question = fill(rel.phrasings[3]);
        set.test.push_back({fact.held_out_question, {fact.answer}});
        set.facts.push_back(std::move(fact));
    }
    set.kb = KnowledgeBase(std::move(pairs));
    return set;
}

}  // namespace paq::synthetic
