// F1 ROUGE-1/2/L plus corpus aggregation and the evaluation report.
// Tokenization: lowercase, split on runs of non-alphanumeric characters;
// no stemming, no stopword removal. ROUGE-L is sentence-level LCS over
// the whole summary treated as one token sequence.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dtrf/common.hpp"

namespace dtrf {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline std::vector<std::string> rouge_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        const bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                           (c >= 'A' && c <= 'Z');
        if (alnum) {
            current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

namespace detail {

inline RougeScore from_counts(double overlap, double cand_total, double ref_total) {
    RougeScore s;
    if (cand_total > 0) {
        s.precision = overlap / cand_total;
    }
    if (ref_total > 0) {
        s.recall = overlap / ref_total;
    }
    if (s.precision + s.recall > 0) {
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    return s;
}

inline std::map<std::vector<std::string>, long long> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
    std::map<std::vector<std::string>, long long> counts;
    if (tokens.size() >= n) {
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                              tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
        }
    }
    return counts;
}

}  // namespace detail

// Clipped n-gram overlap, n in {1, 2}.
inline RougeScore rouge_n(const std::string& candidate, const std::string& reference, int n) {
    if (n != 1 && n != 2) {
        throw ConfigError("rouge_n: n must be 1 or 2, got " + std::to_string(n));
    }
    const auto cand = detail::ngram_counts(rouge_tokenize(candidate), static_cast<std::size_t>(n));
    const auto ref = detail::ngram_counts(rouge_tokenize(reference), static_cast<std::size_t>(n));
    long long cand_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [gram, count] : cand) {
        cand_total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) {
            overlap += std::min(count, it->second);
        }
    }
    for (const auto& [gram, count] : ref) {
        ref_total += count;
    }
    return detail::from_counts(static_cast<double>(overlap), static_cast<double>(cand_total),
                               static_cast<double>(ref_total));
}

// Longest common subsequence by dynamic programming over tokens.
inline RougeScore rouge_l(const std::string& candidate, const std::string& reference) {
    const auto cand = rouge_tokenize(candidate);
    const auto ref = rouge_tokenize(reference);
    if (cand.empty() || ref.empty()) {
        return RougeScore{};
    }
    std::vector<std::size_t> prev(ref.size() + 1, 0), curr(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            if (cand[i - 1] == ref[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    const double lcs = static_cast<double>(prev[ref.size()]);
    return detail::from_counts(lcs, static_cast<double>(cand.size()),
                               static_cast<double>(ref.size()));
}

struct CorpusRouge {
    RougeScore rouge1;
    RougeScore rouge2;
    RougeScore rougeL;
};

namespace detail {

inline void accumulate(RougeScore& into, const RougeScore& s) {
    into.precision += s.precision;
    into.recall += s.recall;
    into.f1 += s.f1;
}

inline void divide(RougeScore& s, double n) {
    s.precision /= n;
    s.recall /= n;
    s.f1 /= n;
}

}  // namespace detail

// Arithmetic mean of the per-pair scores, field by field.
inline CorpusRouge corpus_rouge(const std::vector<std::pair<std::string, std::string>>& pairs) {
    if (pairs.empty()) {
        throw ConfigError("corpus_rouge: no candidate/reference pairs");
    }
    CorpusRouge total;
    for (const auto& [candidate, reference] : pairs) {
        detail::accumulate(total.rouge1, rouge_n(candidate, reference, 1));
        detail::accumulate(total.rouge2, rouge_n(candidate, reference, 2));
        detail::accumulate(total.rougeL, rouge_l(candidate, reference));
    }
    const double n = static_cast<double>(pairs.size());
    detail::divide(total.rouge1, n);
    detail::divide(total.rouge2, n);
    detail::divide(total.rougeL, n);
    return total;
}

// ----- evaluation report -----

struct PairEval {
    std::string id;
    std::string candidate;
    std::string reference;
    RougeScore rouge1;
    RougeScore rouge2;
    RougeScore rougeL;
};

inline PairEval evaluate_pair(std::string id, std::string candidate, std::string reference) {
    PairEval e;
    e.id = std::move(id);
    e.candidate = std::move(candidate);
    e.reference = std::move(reference);
    e.rouge1 = rouge_n(e.candidate, e.reference, 1);
    e.rouge2 = rouge_n(e.candidate, e.reference, 2);
    e.rougeL = rouge_l(e.candidate, e.reference);
    return e;
}

namespace detail {

inline nlohmann::ordered_json score_json(const RougeScore& s) {
    return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

}  // namespace detail

// JSON report with per-pair and corpus-level scores.
inline void write_eval_report(const std::string& path, const std::vector<PairEval>& evals) {
    if (evals.empty()) {
        throw ConfigError("write_eval_report: no evaluated pairs");
    }
    CorpusRouge corpus;
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& e : evals) {
        detail::accumulate(corpus.rouge1, e.rouge1);
        detail::accumulate(corpus.rouge2, e.rouge2);
        detail::accumulate(corpus.rougeL, e.rougeL);
        pairs.push_back({{"id", e.id},
                         {"candidate", e.candidate},
                         {"reference", e.reference},
                         {"rouge1", detail::score_json(e.rouge1)},
                         {"rouge2", detail::score_json(e.rouge2)},
                         {"rougeL", detail::score_json(e.rougeL)}});
    }
    const double n = static_cast<double>(evals.size());
    detail::divide(corpus.rouge1, n);
    detail::divide(corpus.rouge2, n);
    detail::divide(corpus.rougeL, n);

    nlohmann::ordered_json report;
    report["corpus"] = {{"rouge1", detail::score_json(corpus.rouge1)},
                        {"rouge2", detail::score_json(corpus.rouge2)},
                        {"rougeL", detail::score_json(corpus.rougeL)},
                        {"pairs", evals.size()}};
    report["pairs"] = std::move(pairs);

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write evaluation report: " + path);
    }
    out << report.dump(2) << "\n";
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out += "\"";
    return out;
}

}  // namespace detail

// CSV of the worst pairs by ROUGE-L F1 (bottom `fraction` of the corpus,
// at least one row), ascending, for manual inspection.
inline void write_bottom_csv(const std::string& path, std::vector<PairEval> evals,
                             double fraction) {
    if (evals.empty() || fraction <= 0.0 || fraction > 1.0) {
        throw ConfigError("write_bottom_csv: needs pairs and a fraction in (0, 1]");
    }
    std::stable_sort(evals.begin(), evals.end(), [](const PairEval& a, const PairEval& b) {
        return a.rougeL.f1 < b.rougeL.f1;
    });
    std::size_t keep = static_cast<std::size_t>(fraction * static_cast<double>(evals.size()));
    keep = std::max<std::size_t>(1, std::min(keep, evals.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write csv: " + path);
    }
    out << "id,rouge_l_f1,candidate,reference\n";
    for (std::size_t i = 0; i < keep; ++i) {
        const auto& e = evals[i];
        out << detail::csv_field(e.id) << "," << e.rougeL.f1 << ","
            << detail::csv_field(e.candidate) << "," << detail::csv_field(e.reference) << "\n";
    }
}

}  // namespace dtrf
