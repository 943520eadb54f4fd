#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dtrf/common.hpp"
#include "dtrf/rouge.hpp"
#include "oracles.hpp"

using namespace dtrf;

TEST_CASE("rouge tokenization lowercases and splits on non-alphanumerics") {
    REQUIRE(rouge_tokenize("The, cat! sat?") == std::vector<std::string>{"the", "cat", "sat"});
    REQUIRE(rouge_tokenize("a1-b2  c3") == std::vector<std::string>{"a1", "b2", "c3"});
    REQUIRE(rouge_tokenize("...") == std::vector<std::string>{});
    REQUIRE(rouge_tokenize("") == std::vector<std::string>{});
}

TEST_CASE("rouge_n hand-computed pairs") {
    // 1. the spec'd 0.8 case
    auto s = rouge_n("the cat", "the cat sat", 1);
    REQUIRE(s.precision == Catch::Approx(1.0));
    REQUIRE(s.recall == Catch::Approx(2.0 / 3.0));
    REQUIRE(s.f1 == Catch::Approx(0.8).margin(1e-6));

    // 2. same pair, bigrams: overlap {the cat} of cand 1, ref 2
    s = rouge_n("the cat", "the cat sat", 2);
    REQUIRE(s.precision == Catch::Approx(1.0));
    REQUIRE(s.recall == Catch::Approx(0.5));
    REQUIRE(s.f1 == Catch::Approx(2.0 / 3.0).margin(1e-6));

    // 3. identical texts
    s = rouge_n("a b c", "a b c", 1);
    REQUIRE(s.f1 == Catch::Approx(1.0));
    s = rouge_n("a b c", "a b c", 2);
    REQUIRE(s.f1 == Catch::Approx(1.0));

    // 4. disjoint vocabularies
    s = rouge_n("a b", "c d", 1);
    REQUIRE(s.precision == 0.0);
    REQUIRE(s.recall == 0.0);
    REQUIRE(s.f1 == 0.0);

    // 5. clipping: candidate repeats a word the reference has once
    s = rouge_n("a a a", "a", 1);
    REQUIRE(s.precision == Catch::Approx(1.0 / 3.0));
    REQUIRE(s.recall == Catch::Approx(1.0));
    REQUIRE(s.f1 == Catch::Approx(0.5).margin(1e-6));

    // 6. mirror of 5
    s = rouge_n("a", "a a a", 1);
    REQUIRE(s.precision == Catch::Approx(1.0));
    REQUIRE(s.recall == Catch::Approx(1.0 / 3.0));
    REQUIRE(s.f1 == Catch::Approx(0.5).margin(1e-6));

    // 7. partial clip: counts {a:2, b:1} vs {a:2}
    s = rouge_n("a b a", "a a", 1);
    REQUIRE(s.precision == Catch::Approx(2.0 / 3.0));
    REQUIRE(s.recall == Catch::Approx(1.0));
    REQUIRE(s.f1 == Catch::Approx(0.8).margin(1e-6));

    // 8. bigram clipping: cand {ab:2, ba:1}, ref {ba:1, ab:1}
    s = rouge_n("a b a b", "b a b", 2);
    REQUIRE(s.precision == Catch::Approx(2.0 / 3.0));
    REQUIRE(s.recall == Catch::Approx(1.0));
    REQUIRE(s.f1 == Catch::Approx(0.8).margin(1e-6));

    // 9. case and punctuation do not matter
    s = rouge_n("The, cat!", "the cat", 1);
    REQUIRE(s.f1 == Catch::Approx(1.0));

    // 10. numbers count as tokens
    s = rouge_n("a1 b2", "a1 c3", 1);
    REQUIRE(s.precision == Catch::Approx(0.5));
    REQUIRE(s.recall == Catch::Approx(0.5));
    REQUIRE(s.f1 == Catch::Approx(0.5).margin(1e-6));

    // 11. unigram overlap ignores order entirely
    s = rouge_n("x y z", "z y x", 1);
    REQUIRE(s.f1 == Catch::Approx(1.0));

    // 12. empty candidate scores zero, not an error
    s = rouge_n("", "a b", 1);
    REQUIRE(s.f1 == 0.0);
    s = rouge_n("a b", "", 1);
    REQUIRE(s.f1 == 0.0);

    REQUIRE_THROWS_AS(rouge_n("a", "a", 3), ConfigError);
}

TEST_CASE("rouge_l hand-computed pairs") {
    // candidate "a c e" against "a b c d e": LCS 3
    auto s = rouge_l("a c e", "a b c d e");
    REQUIRE(s.precision == Catch::Approx(1.0));
    REQUIRE(s.recall == Catch::Approx(3.0 / 5.0));
    REQUIRE(s.f1 == Catch::Approx(0.75).margin(1e-6));

    s = rouge_l("same text here", "same text here");
    REQUIRE(s.precision == Catch::Approx(1.0));
    REQUIRE(s.recall == Catch::Approx(1.0));
    REQUIRE(s.f1 == Catch::Approx(1.0));

    // reversal leaves an LCS of exactly one token
    s = rouge_l("a b c d", "d c b a");
    REQUIRE(s.precision == Catch::Approx(0.25));
    REQUIRE(s.recall == Catch::Approx(0.25));

    s = rouge_l("", "a");
    REQUIRE(s.f1 == 0.0);
}

TEST_CASE("rouge_l agrees with brute-force subsequence enumeration") {
    SeededRng rng(404);
    const std::vector<std::string> alphabet{"a", "b", "c", "d"};
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t la = rng.next_below(11);
        const std::size_t lb = rng.next_below(11);
        std::vector<std::string> ta, tb;
        std::string sa, sb;
        for (std::size_t i = 0; i < la; ++i) {
            ta.push_back(alphabet[rng.next_below(alphabet.size())]);
            sa += (i ? " " : "") + ta.back();
        }
        for (std::size_t i = 0; i < lb; ++i) {
            tb.push_back(alphabet[rng.next_below(alphabet.size())]);
            sb += (i ? " " : "") + tb.back();
        }
        const std::size_t expected = oracles::brute_force_lcs(ta, tb);
        const auto s = rouge_l(sa, sb);
        if (la == 0 || lb == 0) {
            REQUIRE(s.f1 == 0.0);
            continue;
        }
        REQUIRE(s.precision == Catch::Approx(double(expected) / double(la)).margin(1e-12));
        REQUIRE(s.recall == Catch::Approx(double(expected) / double(lb)).margin(1e-12));
    }
}

TEST_CASE("rouge scores are bounded and swap-symmetric") {
    SeededRng rng(55);
    const std::vector<std::string> alphabet{"u", "v", "w", "x", "y"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string a, b;
        const std::size_t la = 1 + rng.next_below(12), lb = 1 + rng.next_below(12);
        for (std::size_t i = 0; i < la; ++i) {
            a += (i ? " " : "") + alphabet[rng.next_below(alphabet.size())];
        }
        for (std::size_t i = 0; i < lb; ++i) {
            b += (i ? " " : "") + alphabet[rng.next_below(alphabet.size())];
        }
        for (int n = 1; n <= 2; ++n) {
            const auto ab = rouge_n(a, b, n);
            const auto ba = rouge_n(b, a, n);
            REQUIRE(ab.precision == Catch::Approx(ba.recall).margin(1e-12));
            REQUIRE(ab.recall == Catch::Approx(ba.precision).margin(1e-12));
            REQUIRE(ab.f1 == Catch::Approx(ba.f1).margin(1e-12));
            REQUIRE(ab.f1 <= std::max(ab.precision, ab.recall) + 1e-12);
            for (double v : {ab.precision, ab.recall, ab.f1}) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
        }
    }
}

TEST_CASE("corpus aggregation is a per-field mean and order free") {
    const std::vector<std::pair<std::string, std::string>> pairs{{"a b", "a b"},
                                                                 {"x y", "p q"}};
    const auto c = corpus_rouge(pairs);
    REQUIRE(c.rouge1.f1 == Catch::Approx(0.5));

    const auto single = corpus_rouge({{"the cat", "the cat sat"}});
    REQUIRE(single.rouge1.f1 == Catch::Approx(0.8).margin(1e-6));

    const std::vector<std::pair<std::string, std::string>> swapped{{"x y", "p q"},
                                                                   {"a b", "a b"}};
    const auto d = corpus_rouge(swapped);
    REQUIRE(c.rouge1.f1 == Catch::Approx(d.rouge1.f1));
    REQUIRE(c.rougeL.f1 == Catch::Approx(d.rougeL.f1));

    REQUIRE_THROWS_AS(corpus_rouge({}), ConfigError);
}

TEST_CASE("evaluation report and bottom csv") {
    namespace fs = std::filesystem;
    std::vector<PairEval> evals;
    evals.push_back(evaluate_pair("good", "a b c", "a b c"));
    evals.push_back(evaluate_pair("bad", "x, \"quoted\"", "a b c"));

    const std::string report_path = (fs::temp_directory_path() / "dtrf_report.json").string();
    write_eval_report(report_path, evals);
    std::ifstream in(report_path);
    nlohmann::json report = nlohmann::json::parse(in);
    REQUIRE(report["pairs"].size() == 2);
    REQUIRE(report["corpus"]["rouge1"]["f1"].get<double>() == Catch::Approx(0.5));
    REQUIRE(report["pairs"][0]["id"] == "good");

    const std::string csv_path = (fs::temp_directory_path() / "dtrf_bottom.csv").string();
    write_bottom_csv(csv_path, evals, 0.5);
    std::ifstream csv(csv_path);
    std::string header, row, extra;
    REQUIRE(std::getline(csv, header));
    REQUIRE(header == "id,rouge_l_f1,candidate,reference");
    REQUIRE(std::getline(csv, row));
    REQUIRE(row.find("\"bad\"") != std::string::npos);
    REQUIRE(row.find("\"\"quoted\"\"") != std::string::npos);
    REQUIRE_FALSE(std::getline(csv, extra));

    std::remove(report_path.c_str());
    std::remove(csv_path.c_str());
}
