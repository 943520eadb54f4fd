#include <catch2/catch_amalgamated.hpp>

#include "dtrf/common.hpp"
#include "dtrf/sequence.hpp"

using namespace dtrf;

namespace {

SequenceLimits desk_limits() {
    SequenceLimits l;
    l.max_source_tokens = 400;
    l.max_summary_tokens = 100;
    l.n_ctx = 512;
    return l;
}

void check_invariants(const EncodedTriple& t, const SequenceLimits& limits) {
    const ControlTokens c;
    REQUIRE(t.S.size() == t.P.size());
    REQUIRE(t.S.size() == t.Q.size());
    REQUIRE(t.S.size() <= limits.n_ctx);
    REQUIRE(t.S.front() == c.alpha);
    REQUIRE(t.S[t.summary_start] == c.beta);
    REQUIRE(t.S.back() == c.delta);
    for (std::size_t i = 0; i < t.S.size(); ++i) {
        REQUIRE(t.P[i] >= 0);
        REQUIRE(static_cast<std::size_t>(t.P[i]) < limits.n_ctx);
        REQUIRE(t.Q[i] == (i < t.summary_start ? kSegSource : kSegSummary));
        if (i > 0 && !limits.literal_delta_position) {
            // positions reset exactly once, at the summary start
            const bool resets = t.P[i] == 0;
            REQUIRE(resets == (i == t.summary_start));
        }
    }
}

}  // namespace

TEST_CASE("training triple matches the reference pattern") {
    // x = [A, B], y = [C] with A=10, B=11, C=12
    const ControlTokens c;
    const auto t = build_training_triple({10, 11}, {12}, desk_limits());
    REQUIRE(t.S == TokenSeq{c.alpha, 10, 11, c.beta, 12, c.delta});
    REQUIRE(t.P == std::vector<int>{0, 1, 2, 0, 1, 2});
    REQUIRE(t.Q == std::vector<int>{kSegSource, kSegSource, kSegSource, kSegSummary, kSegSummary,
                                    kSegSummary});
    REQUIRE(t.summary_start == 3);
    REQUIRE(t.summary_token_count == 1);
}

TEST_CASE("literal delta position flag reproduces the trailing zero") {
    auto limits = desk_limits();
    limits.literal_delta_position = true;
    const auto t = build_training_triple({10, 11}, {12}, limits);
    REQUIRE(t.P == std::vector<int>{0, 1, 2, 0, 1, 0});
}

TEST_CASE("source is clipped to the token limit") {
    TokenSeq x(500, 7);
    auto limits = desk_limits();
    limits.n_ctx = 600;
    const auto t = build_training_triple(x, {9}, limits);
    // alpha + 400 source tokens + beta + y + delta
    REQUIRE(t.summary_start == 401);
    REQUIRE(t.S.size() == 404);
    for (std::size_t i = 1; i <= 400; ++i) {
        REQUIRE(t.S[i] == 7);
    }
}

TEST_CASE("degenerate inputs raise data errors") {
    REQUIRE_THROWS_AS(build_training_triple({10}, {}, desk_limits()), DataError);
    REQUIRE_THROWS_AS(build_training_triple({}, {12}, desk_limits()), DataError);
    REQUIRE_THROWS_AS(build_inference_prefix({}, desk_limits()), DataError);
}

TEST_CASE("context overflow trims the source, never the summary") {
    SequenceLimits limits;
    limits.max_source_tokens = 400;
    limits.max_summary_tokens = 100;
    limits.n_ctx = 32;
    TokenSeq x(100, 5);
    TokenSeq y(20, 6);
    const auto t = build_training_triple(x, y, limits);
    REQUIRE(t.S.size() == limits.n_ctx);
    REQUIRE(t.summary_token_count == 20);
    // source got 32 - 20 - 3 = 9 tokens
    REQUIRE(t.summary_start == 10);
    check_invariants(t, limits);
}

TEST_CASE("inference prefix basics") {
    const ControlTokens c;
    const auto t = build_inference_prefix({10}, desk_limits());
    REQUIRE(t.S == TokenSeq{c.alpha, 10, c.beta});
    REQUIRE(t.P == std::vector<int>{0, 1, 0});
    REQUIRE(t.Q == std::vector<int>{kSegSource, kSegSource, kSegSummary});
    REQUIRE(t.summary_start == 2);
}

TEST_CASE("inference prefix preserves generation headroom") {
    SequenceLimits limits;
    limits.max_source_tokens = 400;
    limits.max_summary_tokens = 20;
    limits.n_ctx = 64;
    TokenSeq x(200, 5);
    const auto t = build_inference_prefix(x, limits);
    // |prefix| + max_summary_tokens must fit n_ctx
    REQUIRE(t.S.size() + limits.max_summary_tokens <= limits.n_ctx);
    REQUIRE(t.S.size() == 64 - 20);
}

TEST_CASE("training triple prefix equals the inference prefix") {
    SeededRng rng(99);
    auto limits = desk_limits();
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + rng.next_below(120);
        const std::size_t k = 1 + rng.next_below(60);
        TokenSeq x, y;
        for (std::size_t i = 0; i < m; ++i) {
            x.push_back(static_cast<int>(10 + rng.next_below(50)));
        }
        for (std::size_t i = 0; i < k; ++i) {
            y.push_back(static_cast<int>(10 + rng.next_below(50)));
        }
        const auto full = build_training_triple(x, y, limits);
        const auto prefix = build_inference_prefix(x, limits);
        check_invariants(full, limits);

        REQUIRE(full.S.size() == prefix.S.size() + k + 1);
        for (std::size_t i = 0; i < prefix.S.size(); ++i) {
            REQUIRE(full.S[i] == prefix.S[i]);
            REQUIRE(full.P[i] == prefix.P[i]);
            REQUIRE(full.Q[i] == prefix.Q[i]);
        }
    }
}

TEST_CASE("triple invariants hold across random lengths and tight contexts") {
    SeededRng rng(123);
    for (int trial = 0; trial < 300; ++trial) {
        SequenceLimits limits;
        limits.max_source_tokens = 1 + rng.next_below(80);
        limits.max_summary_tokens = 1 + rng.next_below(40);
        limits.n_ctx = 16 + rng.next_below(100);
        const std::size_t m = 1 + rng.next_below(150);
        const std::size_t k = 1 + rng.next_below(80);
        TokenSeq x(m, 5), y(k, 6);
        const std::size_t effective_summary = std::min(k, limits.max_summary_tokens);
        // the triple needs alpha/beta/delta plus at least one source token
        if (effective_summary + 4 > limits.n_ctx) {
            REQUIRE_THROWS_AS(build_training_triple(x, y, limits), DataError);
            continue;
        }
        const auto t = build_training_triple(x, y, limits);
        check_invariants(t, limits);
        REQUIRE(t.summary_token_count == effective_summary);
    }
}
