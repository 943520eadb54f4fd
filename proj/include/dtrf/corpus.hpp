// Dataset ingestion: JSONL source/summary pairs, deterministic splits,
// and the two synthetic desk-scale tasks (prefix copy and rare-keyword
// extraction) used for training and evaluation without a real corpus.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtrf/common.hpp"

namespace dtrf {

struct PairRecord {
    std::string source;
    std::string summary;
    std::string id;

    bool operator==(const PairRecord&) const = default;
};

namespace detail {

inline bool is_blank(const std::string& s) {
    for (unsigned char c : s) {
        if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f' && c != '\v') {
            return false;
        }
    }
    return true;
}

}  // namespace detail

// One JSON object per line with "source" and "summary" keys; "id" is
// optional and defaults to the line number. Order preserving.
inline std::vector<PairRecord> load_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open dataset: " + path);
    }
    std::vector<PairRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": malformed JSON on line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        for (const char* key : {"source", "summary"}) {
            if (!obj.contains(key) || !obj[key].is_string()) {
                throw DataError(path + ": line " + std::to_string(line_no) +
                                " is missing string key \"" + key + "\"");
            }
        }
        PairRecord r;
        r.source = obj["source"].get<std::string>();
        r.summary = obj["summary"].get<std::string>();
        if (detail::is_blank(r.source) || detail::is_blank(r.summary)) {
            throw DataError(path + ": line " + std::to_string(line_no) +
                            " has an empty source or summary");
        }
        r.id = obj.contains("id") ? obj["id"].get<std::string>() : std::to_string(line_no);
        records.push_back(std::move(r));
    }
    return records;
}

inline void save_jsonl(const std::string& path, const std::vector<PairRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write dataset: " + path);
    }
    for (const auto& r : records) {
        nlohmann::ordered_json obj{{"source", r.source}, {"summary", r.summary}, {"id", r.id}};
        out << obj.dump() << "\n";
    }
}

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

// Deterministic shuffled partition; disjoint and exhaustive. Boundaries
// are cumulative-rounded so the sizes always sum to the input size.
inline std::array<std::vector<PairRecord>, 3> split(const std::vector<PairRecord>& records,
                                                    const SplitFractions& fractions,
                                                    std::uint64_t seed) {
    const double sum = fractions.train + fractions.val + fractions.test;
    if (fractions.train <= 0 || fractions.val <= 0 || fractions.test <= 0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split: fractions must be positive and sum to 1");
    }
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    SeededRng rng(seed);
    rng.shuffle(order);

    const double n = static_cast<double>(records.size());
    const std::size_t b1 = static_cast<std::size_t>(std::llround(fractions.train * n));
    const std::size_t b2 =
        static_cast<std::size_t>(std::llround((fractions.train + fractions.val) * n));
    std::array<std::vector<PairRecord>, 3> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t which = i < b1 ? 0 : (i < b2 ? 1 : 2);
        out[which].push_back(records[order[i]]);
    }
    return out;
}

namespace detail {

// Deterministic pronounceable word list: consonant-vowel syllables in a
// fixed enumeration order.
inline std::string synth_word(std::size_t index) {
    static const char* consonants = "bcdfghjklmnpqrstvwz";  // 19
    static const char* vowels = "aeiou";                    // 5
    const std::size_t base = 19 * 5;
    std::string word;
    std::size_t i = index;
    do {
        const std::size_t syll = i % base;
        word += consonants[syll / 5];
        word += vowels[syll % 5];
        i /= base;
    } while (i > 0);
    return word;
}

}  // namespace detail

inline std::vector<std::string> synth_vocabulary(std::size_t n_words) {
    std::vector<std::string> words;
    words.reserve(n_words);
    for (std::size_t i = 0; i < n_words; ++i) {
        words.push_back(detail::synth_word(i));
    }
    return words;
}

// Copy task: the summary is the first summary_len words of the source.
// LEAD-like and fully learnable from positions alone.
inline std::vector<PairRecord> synth_copy_task(std::size_t n_examples, std::size_t source_len_min,
                                               std::size_t source_len_max,
                                               std::size_t summary_len, std::size_t vocab_words,
                                               std::uint64_t seed) {
    if (n_examples == 0 || vocab_words == 0 || source_len_min == 0 ||
        source_len_min > source_len_max || summary_len > source_len_min) {
        throw ConfigError("synth_copy_task: need positive sizes with summary_len <= min source length");
    }
    const auto words = synth_vocabulary(vocab_words);
    SeededRng rng(seed);
    std::vector<PairRecord> out;
    out.reserve(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) {
        const std::size_t len =
            source_len_min + rng.next_below(source_len_max - source_len_min + 1);
        std::string source, summary;
        for (std::size_t w = 0; w < len; ++w) {
            const std::string& word = words[rng.next_below(vocab_words)];
            if (w > 0) {
                source += ' ';
            }
            source += word;
            if (w < summary_len) {
                if (w > 0) {
                    summary += ' ';
                }
                summary += word;
            }
        }
        out.push_back(PairRecord{source, summary, "copy-" + std::to_string(i)});
    }
    return out;
}

// Keyword task: word frequencies are Zipf-distributed by vocabulary index
// and the summary is the k rarest distinct source words in source order.
// Copying a prefix fails here; the content decides.
inline std::vector<PairRecord> synth_keyword_task(std::size_t n_examples,
                                                  std::size_t source_len_min,
                                                  std::size_t source_len_max, std::size_t k,
                                                  std::size_t vocab_words, std::uint64_t seed) {
    if (n_examples == 0 || vocab_words == 0 || source_len_min == 0 ||
        source_len_min > source_len_max || k == 0 || k > source_len_min) {
        throw ConfigError("synth_keyword_task: need positive sizes with k <= min source length");
    }
    const auto words = synth_vocabulary(vocab_words);
    // Zipf weights: rank r gets weight 1/(r+1); low indices are common,
    // high indices rare.
    std::vector<double> cdf(vocab_words);
    double total = 0.0;
    for (std::size_t r = 0; r < vocab_words; ++r) {
        total += 1.0 / static_cast<double>(r + 1);
        cdf[r] = total;
    }
    SeededRng rng(seed);
    const auto draw_word = [&]() {
        const double u = rng.next_double() * total;
        return static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    };

    std::vector<PairRecord> out;
    out.reserve(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) {
        std::vector<std::size_t> doc;
        // resample until the source has at least k distinct words
        while (true) {
            doc.clear();
            const std::size_t len =
                source_len_min + rng.next_below(source_len_max - source_len_min + 1);
            for (std::size_t w = 0; w < len; ++w) {
                doc.push_back(std::min(draw_word(), vocab_words - 1));
            }
            std::vector<std::size_t> distinct = doc;
            std::sort(distinct.begin(), distinct.end());
            distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
            if (distinct.size() >= k) {
                break;
            }
        }
        // pick the k distinct words with the highest index (rarest)
        std::vector<std::size_t> distinct = doc;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        std::vector<bool> keep(vocab_words, false);
        for (std::size_t j = 0; j < k; ++j) {
            keep[distinct[distinct.size() - 1 - j]] = true;
        }
        std::string source, summary;
        std::vector<bool> emitted(vocab_words, false);
        for (std::size_t w = 0; w < doc.size(); ++w) {
            if (w > 0) {
                source += ' ';
            }
            source += words[doc[w]];
            if (keep[doc[w]] && !emitted[doc[w]]) {
                emitted[doc[w]] = true;
                if (!summary.empty()) {
                    summary += ' ';
                }
                summary += words[doc[w]];
            }
        }
        out.push_back(PairRecord{source, summary, "keyword-" + std::to_string(i)});
    }
    return out;
}

}  // namespace dtrf
