// Byte-level BPE tokenizer. The base alphabet is the 256 byte values plus
// one distinguished word-boundary marker, so any byte string encodes and
// decodes losslessly. Merges are learned most-frequent-pair-first with
// lexicographic tie-breaking and applied in rank order, greedily left to
// right within each pre-token.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dtrf/common.hpp"

namespace dtrf {

// Ids of the control tokens. Fixed positions at the front of every
// vocabulary: alpha starts the source, beta starts the summary, delta ends
// the sequence, pad fills batches.
struct ControlTokens {
    int alpha = 0;
    int beta = 1;
    int delta = 2;
    int pad = 3;
};

// A subword is a run of bytes, optionally preceded by the word-boundary
// marker. The marker can only ever sit at the very front of a subword: a
// pre-token carries it at position 0 and merges only concatenate pieces
// within one pre-token.
struct Subword {
    bool word_initial = false;
    std::string bytes;

    bool operator==(const Subword& o) const {
        return word_initial == o.word_initial && bytes == o.bytes;
    }
    // Injective string form used for map keys and tie-breaking.
    std::string canonical() const { return (word_initial ? "1" : "0") + bytes; }
};

class Vocabulary {
public:
    static constexpr int kNumSpecial = 4;
    static constexpr int kNumBase = 257;  // marker + 256 byte values

    Vocabulary() {
        // marker symbol first, then the byte alphabet
        add(Subword{true, ""});
        for (int b = 0; b < 256; ++b) {
            add(Subword{false, std::string(1, static_cast<char>(b))});
        }
    }

    ControlTokens controls() const { return ControlTokens{}; }

    int size() const { return kNumSpecial + static_cast<int>(subwords_.size()); }

    bool is_special(int id) const { return id >= 0 && id < kNumSpecial; }

    int marker_id() const { return kNumSpecial; }
    int byte_id(unsigned char b) const { return kNumSpecial + 1 + static_cast<int>(b); }

    int add(const Subword& sw) {
        const int id = size();
        subwords_.push_back(sw);
        canonical_to_id_.emplace(sw.canonical(), id);
        return id;
    }

    const Subword& subword(int id) const {
        if (is_special(id) || id < 0 || id >= size()) {
            throw DataError("no subword for id " + std::to_string(id));
        }
        return subwords_[static_cast<std::size_t>(id - kNumSpecial)];
    }

    int find(const Subword& sw) const {
        auto it = canonical_to_id_.find(sw.canonical());
        return it == canonical_to_id_.end() ? -1 : it->second;
    }

    static std::string special_name(int id) {
        switch (id) {
            case 0: return "<alpha>";
            case 1: return "<beta>";
            case 2: return "<delta>";
            case 3: return "<pad>";
        }
        throw InternalError("special_name: bad id " + std::to_string(id));
    }

private:
    std::vector<Subword> subwords_;  // ids offset by kNumSpecial
    std::unordered_map<std::string, int> canonical_to_id_;
};

// Ordered merge rules. Rank r merges (left, right) subword ids into the
// subword with id merged_id_base + r.
struct MergeTable {
    std::vector<std::pair<int, int>> merges;
    int merged_id_base = Vocabulary::kNumSpecial + Vocabulary::kNumBase;

    std::size_t size() const { return merges.size(); }
};

namespace detail {

// Splits text into pre-token symbol sequences. Every space becomes the
// marker symbol attached to the following run; other ASCII whitespace
// bytes are single-symbol pre-tokens so merges never bridge them.
inline std::vector<std::vector<int>> pre_tokenize(const std::string& text,
                                                  const Vocabulary& vocab) {
    std::vector<std::vector<int>> pre_tokens;
    std::vector<int> current;
    auto flush = [&]() {
        if (!current.empty()) {
            pre_tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (c == ' ') {
            flush();
            current.push_back(vocab.marker_id());
        } else if (c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            flush();
            pre_tokens.push_back({vocab.byte_id(c)});
        } else {
            current.push_back(vocab.byte_id(c));
        }
    }
    flush();
    return pre_tokens;
}

// One greedy left-to-right replacement pass for a single merge rule.
inline void apply_merge(std::vector<int>& seq, int left, int right, int merged) {
    if (seq.size() < 2) {
        return;
    }
    std::size_t out = 0;
    std::size_t i = 0;
    while (i < seq.size()) {
        if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
            seq[out++] = merged;
            i += 2;
        } else {
            seq[out++] = seq[i++];
        }
    }
    seq.resize(out);
}

}  // namespace detail

// Learns merges until the vocabulary reaches target_vocab_size or no pair
// occurs at least twice. Ties on frequency break lexicographically on the
// (left, right) canonical strings, so the result is platform independent.
inline std::pair<Vocabulary, MergeTable> learn_bpe(const std::vector<std::string>& corpus,
                                                   int target_vocab_size) {
    std::size_t total_bytes = 0;
    for (const auto& doc : corpus) {
        total_bytes += doc.size();
    }
    if (corpus.empty() || total_bytes == 0) {
        throw ConfigError("learn_bpe: corpus is empty");
    }
    Vocabulary vocab;
    if (target_vocab_size <= vocab.size()) {
        throw ConfigError("learn_bpe: target vocabulary size " +
                          std::to_string(target_vocab_size) +
                          " does not exceed base alphabet plus specials (" +
                          std::to_string(vocab.size()) + ")");
    }
    MergeTable merges;

    // Distinct pre-tokens with occurrence counts; the map keeps a stable
    // order so iteration is deterministic.
    std::map<std::vector<int>, long long> pre_token_counts;
    for (const auto& doc : corpus) {
        for (auto& pt : detail::pre_tokenize(doc, vocab)) {
            ++pre_token_counts[pt];
        }
    }

    constexpr long long kMinPairFrequency = 2;
    while (vocab.size() < target_vocab_size) {
        // Count adjacent pairs, overlapping occurrences included.
        std::map<std::pair<int, int>, long long> pair_counts;
        for (const auto& [seq, count] : pre_token_counts) {
            for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                pair_counts[{seq[i], seq[i + 1]}] += count;
            }
        }
        if (pair_counts.empty()) {
            break;
        }
        auto canon = [&](int id) { return vocab.subword(id).canonical(); };
        bool have_best = false;
        std::pair<int, int> best{};
        long long best_count = 0;
        for (const auto& [pair, count] : pair_counts) {
            if (!have_best || count > best_count ||
                (count == best_count &&
                 std::make_pair(canon(pair.first), canon(pair.second)) <
                     std::make_pair(canon(best.first), canon(best.second)))) {
                have_best = true;
                best = pair;
                best_count = count;
            }
        }
        if (best_count < kMinPairFrequency) {
            break;
        }

        const Subword& l = vocab.subword(best.first);
        const Subword& r = vocab.subword(best.second);
        const int merged = vocab.add(Subword{l.word_initial, l.bytes + r.bytes});
        merges.merges.push_back(best);

        std::map<std::vector<int>, long long> next;
        for (const auto& [seq, count] : pre_token_counts) {
            std::vector<int> s = seq;
            detail::apply_merge(s, best.first, best.second, merged);
            next[std::move(s)] += count;
        }
        pre_token_counts = std::move(next);
    }
    return {std::move(vocab), std::move(merges)};
}

// Applies the learned merges; never fails thanks to the byte base
// alphabet. Control tokens are never produced.
inline TokenSeq encode(const std::string& text, const Vocabulary& vocab,
                       const MergeTable& merges) {
    TokenSeq out;
    std::unordered_map<std::string, TokenSeq> cache;  // keyed on pre-token canonical bytes
    for (auto& pt : detail::pre_tokenize(text, vocab)) {
        std::string key;
        key.reserve(pt.size() * 4);
        for (int id : pt) {
            key.append(reinterpret_cast<const char*>(&id), sizeof(id));
        }
        auto it = cache.find(key);
        if (it == cache.end()) {
            std::vector<int> seq = pt;
            for (std::size_t rank = 0; rank < merges.size(); ++rank) {
                if (seq.size() < 2) {
                    break;
                }
                const auto& [l, r] = merges.merges[rank];
                detail::apply_merge(seq, l, r, merges.merged_id_base + static_cast<int>(rank));
            }
            it = cache.emplace(std::move(key), std::move(seq)).first;
        }
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
}

// Inverse of encode. Control tokens are stripped, never rendered.
inline std::string decode(const TokenSeq& tokens, const Vocabulary& vocab) {
    std::string out;
    for (int id : tokens) {
        if (id < 0 || id >= vocab.size()) {
            throw DataError("decode: token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(vocab.size()));
        }
        if (vocab.is_special(id)) {
            continue;
        }
        const Subword& sw = vocab.subword(id);
        if (sw.word_initial) {
            out.push_back(' ');
        }
        out += sw.bytes;
    }
    return out;
}

namespace detail {

// Printable, unambiguous rendering of a subword for the vocab file. The
// marker becomes U+2581; every byte outside plain printable ASCII is
// hex-escaped, so a literal U+2581 byte sequence in data cannot collide.
inline std::string escape_subword(const Subword& sw) {
    std::string out;
    if (sw.word_initial) {
        out += "\xE2\x96\x81";
    }
    bool first = true;
    for (unsigned char c : sw.bytes) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\t') {
            out += "\\t";
        } else if (c == '\r') {
            out += "\\r";
        } else if (c < 0x20 || c >= 0x7F || (first && !sw.word_initial && c == '<')) {
            static const char* hex = "0123456789ABCDEF";
            out += "\\x";
            out += hex[c >> 4];
            out += hex[c & 0xF];
        } else {
            out.push_back(static_cast<char>(c));
        }
        first = false;
    }
    return out;
}

inline Subword unescape_subword(const std::string& line) {
    Subword sw;
    std::size_t i = 0;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xE2 &&
        static_cast<unsigned char>(line[1]) == 0x96 &&
        static_cast<unsigned char>(line[2]) == 0x81) {
        sw.word_initial = true;
        i = 3;
    }
    while (i < line.size()) {
        const char c = line[i];
        if (c != '\\') {
            sw.bytes.push_back(c);
            ++i;
            continue;
        }
        if (i + 1 >= line.size()) {
            throw DataError("vocab file: dangling escape in '" + line + "'");
        }
        const char e = line[i + 1];
        if (e == '\\') {
            sw.bytes.push_back('\\');
            i += 2;
        } else if (e == 'n') {
            sw.bytes.push_back('\n');
            i += 2;
        } else if (e == 't') {
            sw.bytes.push_back('\t');
            i += 2;
        } else if (e == 'r') {
            sw.bytes.push_back('\r');
            i += 2;
        } else if (e == 'x' && i + 3 < line.size()) {
            const auto hexval = [&](char h) -> int {
                if (h >= '0' && h <= '9') return h - '0';
                if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                throw DataError("vocab file: bad hex escape in '" + line + "'");
            };
            sw.bytes.push_back(
                static_cast<char>(hexval(line[i + 2]) * 16 + hexval(line[i + 3])));
            i += 4;
        } else {
            throw DataError("vocab file: unknown escape in '" + line + "'");
        }
    }
    return sw;
}

}  // namespace detail

// One UTF-8 text file: header `dtrf-bpe v1 <V>`, one subword per line in
// id order (specials first), a `#merges` sentinel, then `left<TAB>right`
// pairs in rank order.
inline void save_vocabulary(const std::string& path, const Vocabulary& vocab,
                            const MergeTable& merges) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write vocabulary file: " + path);
    }
    out << "dtrf-bpe v1 " << vocab.size() << "\n";
    for (int id = 0; id < vocab.size(); ++id) {
        if (vocab.is_special(id)) {
            out << Vocabulary::special_name(id) << "\n";
        } else {
            out << detail::escape_subword(vocab.subword(id)) << "\n";
        }
    }
    out << "#merges\n";
    for (const auto& [l, r] : merges.merges) {
        out << detail::escape_subword(vocab.subword(l)) << "\t"
            << detail::escape_subword(vocab.subword(r)) << "\n";
    }
    if (!out) {
        throw IoError("failed writing vocabulary file: " + path);
    }
}

inline std::pair<Vocabulary, MergeTable> load_vocabulary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open vocabulary file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("vocab file: missing header");
    }
    std::istringstream header(line);
    std::string magic, version;
    int v = 0;
    header >> magic >> version >> v;
    if (magic != "dtrf-bpe" || version != "v1" || v < Vocabulary::kNumSpecial + Vocabulary::kNumBase) {
        throw DataError("vocab file: bad header '" + line + "'");
    }
    Vocabulary vocab;
    for (int id = 0; id < v; ++id) {
        if (!std::getline(in, line)) {
            throw DataError("vocab file: expected " + std::to_string(v) + " entries, got " +
                            std::to_string(id));
        }
        if (id < Vocabulary::kNumSpecial) {
            if (line != Vocabulary::special_name(id)) {
                throw DataError("vocab file: line " + std::to_string(id + 2) +
                                " should be control token " + Vocabulary::special_name(id));
            }
            continue;
        }
        const Subword sw = detail::unescape_subword(line);
        if (id < Vocabulary::kNumSpecial + Vocabulary::kNumBase) {
            // base alphabet is implied by construction; verify it matches
            if (!(vocab.subword(id) == sw)) {
                throw DataError("vocab file: line " + std::to_string(id + 2) +
                                " does not match the base alphabet");
            }
        } else {
            if (vocab.find(sw) != -1) {
                throw DataError("vocab file: duplicate subword at line " + std::to_string(id + 2));
            }
            vocab.add(sw);
        }
    }
    if (!std::getline(in, line) || line != "#merges") {
        throw DataError("vocab file: missing #merges sentinel");
    }
    MergeTable merges;
    int expected_id = merges.merged_id_base;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("vocab file: merge line without tab: '" + line + "'");
        }
        const Subword l = detail::unescape_subword(line.substr(0, tab));
        const Subword r = detail::unescape_subword(line.substr(tab + 1));
        const int lid = vocab.find(l), rid = vocab.find(r);
        if (lid == -1 || rid == -1) {
            throw DataError("vocab file: merge references unknown subword: '" + line + "'");
        }
        const int mid = vocab.find(Subword{l.word_initial, l.bytes + r.bytes});
        if (mid != expected_id) {
            throw DataError("vocab file: merge order does not match vocabulary order at '" +
                            line + "'");
        }
        merges.merges.emplace_back(lid, rid);
        ++expected_id;
    }
    if (expected_id != vocab.size()) {
        throw DataError("vocab file: " + std::to_string(vocab.size() - expected_id) +
                        " merged subwords lack merge rules");
    }
    return {std::move(vocab), std::move(merges)};
}

}  // namespace dtrf
