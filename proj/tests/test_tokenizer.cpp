#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "dtrf/common.hpp"
#include "dtrf/tokenizer.hpp"

using namespace dtrf;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("bpe learns the most frequent pair first") {
    // "aaabdaaabac": the pair (a,a) occurs 4 times, more than any other.
    // Limit the vocabulary so exactly one merge is learned.
    const int base = Vocabulary::kNumSpecial + Vocabulary::kNumBase;
    auto [vocab, merges] = learn_bpe({"aaabdaaabac"}, base + 1);

    REQUIRE(merges.size() == 1);
    const auto& [l, r] = merges.merges[0];
    REQUIRE(vocab.subword(l).bytes == "a");
    REQUIRE(vocab.subword(r).bytes == "a");
    const int z = merges.merged_id_base;
    REQUIRE(vocab.subword(z).bytes == "aa");

    // Greedy left-to-right application: Z a b d Z a b a c
    const int a = vocab.byte_id('a'), b = vocab.byte_id('b'), c = vocab.byte_id('c'),
              d = vocab.byte_id('d');
    REQUIRE(encode("aaabdaaabac", vocab, merges) == TokenSeq{z, a, b, d, z, a, b, a, c});
    // and the spec'd fragment
    REQUIRE(encode("aaab", vocab, merges) == TokenSeq{z, a, b});
}

TEST_CASE("single character corpus learns nothing") {
    const int base = Vocabulary::kNumSpecial + Vocabulary::kNumBase;
    auto [vocab, merges] = learn_bpe({"x"}, base + 50);
    REQUIRE(merges.size() == 0);
    REQUIRE(vocab.size() == base);
}

TEST_CASE("learn_bpe validates its inputs") {
    REQUIRE_THROWS_AS(learn_bpe({}, 1000), ConfigError);
    REQUIRE_THROWS_AS(learn_bpe({"", ""}, 1000), ConfigError);
    REQUIRE_THROWS_AS(learn_bpe({"abc"}, 10), ConfigError);
}

TEST_CASE("encode basics") {
    auto [vocab, merges] = learn_bpe({"the cat sat on the mat"}, 300);
    SECTION("empty input") {
        REQUIRE(encode("", vocab, merges).empty());
    }
    SECTION("ids in range, no specials") {
        const TokenSeq ids = encode("the cat sat", vocab, merges);
        for (int id : ids) {
            REQUIRE(id >= Vocabulary::kNumSpecial);
            REQUIRE(id < vocab.size());
        }
    }
    SECTION("unseen bytes fall back to the byte alphabet") {
        const std::string weird = "caf\xC3\xA9 \x01\xFF";
        REQUIRE(decode(encode(weird, vocab, merges), vocab) == weird);
    }
}

TEST_CASE("decode basics") {
    auto [vocab, merges] = learn_bpe({"hello world"}, 300);
    SECTION("empty") {
        REQUIRE(decode({}, vocab).empty());
    }
    SECTION("specials are stripped") {
        TokenSeq ids = encode("hello", vocab, merges);
        ids.push_back(vocab.controls().delta);
        ids.insert(ids.begin(), vocab.controls().alpha);
        REQUIRE(decode(ids, vocab) == "hello");
    }
    SECTION("out of range id") {
        REQUIRE_THROWS_AS(decode({vocab.size()}, vocab), DataError);
        REQUIRE_THROWS_AS(decode({-1}, vocab), DataError);
    }
}

TEST_CASE("roundtrip on training corpus text") {
    const std::vector<std::string> corpus = {"the quick brown fox", "jumps over the lazy dog",
                                             "pack my box with five dozen liquor jugs"};
    auto [vocab, merges] = learn_bpe(corpus, 400);
    for (const auto& doc : corpus) {
        REQUIRE(decode(encode(doc, vocab, merges), vocab) == doc);
    }
}

TEST_CASE("roundtrip holds for random byte strings") {
    auto [vocab, merges] = learn_bpe({"some plain text to learn a few merges from, text text"},
                                     320);
    SeededRng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t len = rng.next_below(40);
        std::string s;
        for (std::size_t i = 0; i < len; ++i) {
            s.push_back(static_cast<char>(rng.next_below(256)));
        }
        const TokenSeq ids = encode(s, vocab, merges);
        for (int id : ids) {
            REQUIRE_FALSE(vocab.is_special(id));
        }
        REQUIRE(decode(ids, vocab) == s);
    }
}

TEST_CASE("learning is deterministic and serialization is byte identical") {
    const std::vector<std::string> corpus = {"abab abab cdcd", "abab cdcd cd ab",
                                             "tabs\tand\nnewlines stay put"};
    auto [v1, m1] = learn_bpe(corpus, 300);
    auto [v2, m2] = learn_bpe(corpus, 300);
    REQUIRE(m1.merges == m2.merges);

    const std::string p1 = temp_path("dtrf_vocab_a.bpe");
    const std::string p2 = temp_path("dtrf_vocab_b.bpe");
    save_vocabulary(p1, v1, m1);
    save_vocabulary(p2, v2, m2);
    REQUIRE(read_file(p1) == read_file(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("vocabulary file roundtrip preserves behaviour") {
    const std::vector<std::string> corpus = {"weird bytes: \x7F\x80\x81 and\ttabs",
                                             "weird bytes survive, bytes do"};
    auto [vocab, merges] = learn_bpe(corpus, 310);
    const std::string path = temp_path("dtrf_vocab_rt.bpe");
    save_vocabulary(path, vocab, merges);
    auto [loaded_vocab, loaded_merges] = load_vocabulary(path);

    REQUIRE(loaded_vocab.size() == vocab.size());
    REQUIRE(loaded_merges.merges == merges.merges);
    for (const auto& doc : corpus) {
        REQUIRE(encode(doc, loaded_vocab, loaded_merges) == encode(doc, vocab, merges));
    }
    // header sanity
    const std::string contents = read_file(path);
    REQUIRE(contents.rfind("dtrf-bpe v1 " + std::to_string(vocab.size()), 0) == 0);
    REQUIRE(contents.find("#merges") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("corrupt vocabulary files are rejected") {
    const std::string path = temp_path("dtrf_vocab_bad.bpe");
    {
        std::ofstream out(path, std::ios::binary);
        out << "not-a-vocab v9 12\n";
    }
    REQUIRE_THROWS_AS(load_vocabulary(path), DataError);
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(load_vocabulary(path), IoError);
}

TEST_CASE("word boundary marker keeps multiple spaces intact") {
    auto [vocab, merges] = learn_bpe({"a a  b"}, 300);
    REQUIRE(decode(encode("a  b", vocab, merges), vocab) == "a  b");
    REQUIRE(decode(encode("  leading", vocab, merges), vocab) == "  leading");
    REQUIRE(decode(encode("trailing  ", vocab, merges), vocab) == "trailing  ");
}
