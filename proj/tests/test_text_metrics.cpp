#include "releval/text_metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace releval;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> list) {
    return {list.begin(), list.end()};
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len) {
    static const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "cat", "dog", "12"};
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::string> out(len(rng));
    for (auto& t : out) {
        t = pool[pick(rng)];
    }
    return out;
}

} // namespace

TEST_CASE("normalize_tokenize strips punctuation and lowercases") {
    CHECK(normalize_tokenize("The cat, sat.") == toks({"the", "cat", "sat"}));
    CHECK(normalize_tokenize("").empty());
    CHECK(normalize_tokenize("BP 120/80 mmHg") == toks({"bp", "120", "80", "mmhg"}));
    CHECK(normalize_tokenize("  --- ").empty());
    CHECK(normalize_tokenize("a-b_c") == toks({"a", "b", "c"}));
}

TEST_CASE("rouge_n fixtures") {
    auto same = toks({"a", "b", "c"});
    auto r = rouge_n(same, same, 1);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);

    auto s = rouge_n(toks({"a", "b", "c"}), toks({"a", "c", "d"}), 1);
    CHECK(s.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    auto d = rouge_n(toks({"a", "b"}), toks({"c", "d"}), 2);
    CHECK(d.precision == 0.0);
    CHECK(d.recall == 0.0);
    CHECK(d.f1 == 0.0);
}

TEST_CASE("rouge_n clips repeated candidate n-grams") {
    auto s = rouge_n(toks({"the", "the", "the"}), toks({"the", "cat"}), 1);
    CHECK(s.precision == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rouge_l fixtures") {
    auto s = rouge_l(toks({"a", "b", "c", "d"}), toks({"a", "c", "d"}));
    CHECK(s.precision == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.f1 == doctest::Approx(6.0 / 7.0).epsilon(1e-12));

    auto same = toks({"x", "y"});
    auto id = rouge_l(same, same);
    CHECK(id.f1 == 1.0);

    auto empty_ref = rouge_l(toks({"x"}), {});
    CHECK(empty_ref.precision == 0.0);
    CHECK(empty_ref.recall == 0.0);
    CHECK(empty_ref.f1 == 0.0);
}

TEST_CASE("bleu identity and empty candidate") {
    auto sent = toks({"the", "cat", "sat", "on", "mat"});
    CHECK(bleu(sent, sent) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(bleu({}, toks({"a"})) == 0.0);
    CHECK(bleu(toks({"a"}), {}) == 0.0);
    // short identity still 1: orders without candidate n-grams drop out
    auto one = toks({"x"});
    CHECK(bleu(one, one) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bleu floor smoothing, worked example") {
    // cand = [the, the, the], ref = [the, cat]
    // p1 = 1/3 (clipped); p2: 0 matches of 2 bigrams -> 1/4; p3: 0 of 1 -> 1/2;
    // no 4-grams; BP = 1 since cand is longer. bleu = (1/24)^(1/3)
    double expected = std::cbrt(1.0 / 24.0);
    CHECK(bleu(toks({"the", "the", "the"}), toks({"the", "cat"})) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bleu brevity penalty") {
    // cand = [a, b], ref = [a, b, c]: p1 = 1, p2 = 1, BP = exp(1 - 3/2)
    double expected = std::exp(1.0 - 1.5);
    CHECK(bleu(toks({"a", "b"}), toks({"a", "b", "c"})) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("precision/recall swap symmetry") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        auto a = random_tokens(rng, 8);
        auto b = random_tokens(rng, 8);
        for (int n = 1; n <= 3; ++n) {
            auto ab = rouge_n(a, b, n);
            auto ba = rouge_n(b, a, n);
            CHECK(ab.precision == doctest::Approx(ba.recall).epsilon(1e-12));
            CHECK(ab.recall == doctest::Approx(ba.precision).epsilon(1e-12));
        }
    }
}

TEST_CASE("scores stay in range and f1 bounded by max(p, r)") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 300; ++i) {
        auto a = random_tokens(rng, 10);
        auto b = random_tokens(rng, 10);
        for (auto s : {rouge_n(a, b, 1), rouge_n(a, b, 2), rouge_l(a, b)}) {
            CHECK(s.precision >= 0.0);
            CHECK(s.precision <= 1.0);
            CHECK(s.recall >= 0.0);
            CHECK(s.recall <= 1.0);
            CHECK(s.f1 >= 0.0);
            CHECK(s.f1 <= std::max(s.precision, s.recall) + 1e-12);
        }
        double v = bleu(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
        if (!a.empty()) {
            CHECK(bleu(a, a) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(rouge_n(a, a, 1).f1 == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(rouge_l(a, a).f1 == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("rouge-1 is bag-of-tokens: candidate permutation invariant") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 100; ++i) {
        auto a = random_tokens(rng, 10);
        auto b = random_tokens(rng, 10);
        auto shuffled = a;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto s1 = rouge_n(a, b, 1);
        auto s2 = rouge_n(shuffled, b, 1);
        CHECK(s1.precision == s2.precision);
        CHECK(s1.recall == s2.recall);
        CHECK(s1.f1 == s2.f1);
    }
}

TEST_CASE("determinism: identical inputs, bit-identical outputs") {
    std::mt19937_64 rng(17);
    auto a = random_tokens(rng, 12);
    auto b = random_tokens(rng, 12);
    CHECK(rouge_n(a, b, 2).f1 == rouge_n(a, b, 2).f1);
    CHECK(rouge_l(a, b).f1 == rouge_l(a, b).f1);
    CHECK(bleu(a, b) == bleu(a, b));
}

TEST_CASE("ngram_metric takes the max over references") {
    std::vector<std::string> refs = {"totally different words", "the cat sat"};
    CHECK(ngram_metric("rouge1", "the cat sat", refs) == doctest::Approx(1.0));
    CHECK(ngram_metric("bleu", "the cat sat", refs) == doctest::Approx(1.0));
    CHECK(ngram_metric("rouge1", "anything", {}) == 0.0);
}
