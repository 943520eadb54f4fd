// Glue between the text corpus and the model: tokenize records into
// training triples and measure decode quality against references.
#pragma once

#include <string>
#include <vector>

#include "dtrf/corpus.hpp"
#include "dtrf/decoder.hpp"
#include "dtrf/sequence.hpp"
#include "dtrf/tokenizer.hpp"

namespace dtrf {

inline std::vector<EncodedTriple> encode_records(const std::vector<PairRecord>& records,
                                                 const Vocabulary& vocab,
                                                 const MergeTable& merges,
                                                 const SequenceLimits& limits) {
    std::vector<EncodedTriple> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(build_training_triple(encode(r.source, vocab, merges),
                                            encode(r.summary, vocab, merges), limits,
                                            vocab.controls()));
    }
    return out;
}

// Position-aligned token match rate; length mismatches count as misses.
inline double token_accuracy(const TokenSeq& decoded, const TokenSeq& reference) {
    const std::size_t longest = std::max(decoded.size(), reference.size());
    if (longest == 0) {
        return 1.0;
    }
    std::size_t matches = 0;
    for (std::size_t i = 0; i < std::min(decoded.size(), reference.size()); ++i) {
        matches += decoded[i] == reference[i] ? 1 : 0;
    }
    return static_cast<double>(matches) / static_cast<double>(longest);
}

}  // namespace dtrf
