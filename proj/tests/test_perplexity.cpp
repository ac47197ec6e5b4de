#include "releval/perplexity.hpp"

#include "mock_backends.hpp"
#include "releval/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace releval;
using releval::testing::ConstantLm;
using releval::testing::RiggedLm;

namespace {

std::vector<TokenLogprob> tokens_for(const std::string& text, double per_token) {
    std::vector<TokenLogprob> out;
    for (char c : text) {
        out.push_back({std::string(1, c), per_token, 1});
    }
    return out;
}

} // namespace

TEST_CASE("perplexity worked fixture: abcd at logprob_sum = -8 ln 2") {
    auto tokens = tokens_for("abcd", -2.0 * std::log(2.0));
    auto s = perplexity_family(tokens, "abcd");
    CHECK(s.n_words == 1);
    CHECK(s.n_bytes == 4);
    CHECK(s.bits_per_byte == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.byte_perplexity == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(s.word_perplexity == doctest::Approx(256.0).epsilon(1e-12));
}

TEST_CASE("probability-1 continuation has unit perplexities") {
    auto tokens = tokens_for("ab", 0.0);
    auto s = perplexity_family(tokens, "ab");
    CHECK(s.word_perplexity == 1.0);
    CHECK(s.byte_perplexity == 1.0);
    CHECK(s.bits_per_byte == 0.0);
}

TEST_CASE("byte perplexity equals 2^bits_per_byte") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> lp(-3.0, -0.01);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text = "word another thing";
        std::vector<TokenLogprob> tokens;
        for (char c : text) {
            tokens.push_back({std::string(1, c), lp(rng), 1});
        }
        auto s = perplexity_family(tokens, text);
        double rel = std::abs(s.byte_perplexity - std::exp2(s.bits_per_byte)) /
                     s.byte_perplexity;
        CHECK(rel < 1e-12);
    }
}

TEST_CASE("decreasing any token logprob increases all perplexities") {
    auto tokens = tokens_for("abc def", -0.7);
    auto base = perplexity_family(tokens, "abc def");
    tokens[3].logprob -= 0.5;
    auto worse = perplexity_family(tokens, "abc def");
    CHECK(worse.word_perplexity > base.word_perplexity);
    CHECK(worse.byte_perplexity > base.byte_perplexity);
    CHECK(worse.bits_per_byte > base.bits_per_byte);
}

TEST_CASE("single-byte single-word reference: word and byte perplexity agree") {
    auto tokens = tokens_for("a", -1.3);
    auto s = perplexity_family(tokens, "a");
    CHECK(s.n_words == s.n_bytes);
    CHECK(s.word_perplexity == doctest::Approx(s.byte_perplexity).epsilon(1e-15));
}

TEST_CASE("perplexity_family error paths") {
    CHECK_THROWS_AS(perplexity_family(tokens_for("x", -1.0), ""), InvalidRequest);
    CHECK_THROWS_AS(perplexity_family(tokens_for("xy", -1.0), "yx"), TokenizationMismatch);
    CHECK_THROWS_AS(perplexity_family(tokens_for(" ", -1.0), " "), InvalidRequest);
}

TEST_CASE("repeated scoring of a fixed backend is identical") {
    ConstantLm lm(-0.25);
    auto once = lm.score_continuation("q", "stable");
    for (int i = 0; i < 5; ++i) {
        auto again = lm.score_continuation("q", "stable");
        CHECK(again == once);
    }
}

TEST_CASE("pick_option argmax and tie-break") {
    auto a = pick_option({-1.0, -2.0, -3.0, -0.5}, 3);
    CHECK(a.chosen_index == 3);
    CHECK(a.correct);

    auto tie = pick_option({-1.0, -1.0}, 1);
    CHECK(tie.chosen_index == 0);
    CHECK_FALSE(tie.correct);

    CHECK_THROWS_AS(pick_option({-1.0}, 0), InvalidRequest);
    CHECK_THROWS_AS(pick_option({-1.0, -2.0}, 5), InvalidRequest);
}

TEST_CASE("adding a constant to every option leaves the choice unchanged") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> lp(-8.0, -0.1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> lps{lp(rng), lp(rng), lp(rng), lp(rng)};
        auto base = pick_option(lps, 0);
        double shift = lp(rng);
        std::vector<double> shifted;
        for (double v : lps) {
            shifted.push_back(v + shift);
        }
        CHECK(pick_option(shifted, 0).chosen_index == base.chosen_index);
    }
}

TEST_CASE("score_mcqa_item prefers the rigged gold option") {
    // Glisson's capsule: gold is option index 1 ("Liver.")
    std::vector<std::string> options{"Spleen.", "Liver.", "Kidney.", "Lung."};
    RiggedLm lm([&](const std::string&, const std::string& continuation) {
        return continuation == " Liver." ? -0.5 : -4.0;
    });
    auto outcome = score_mcqa_item(lm, "The Glisson's capsule covers:", options, 1);
    CHECK(outcome.chosen_index == 1);
    CHECK(outcome.correct);
    CHECK(outcome.option_logprobs.size() == 4);
}

TEST_CASE("score_mcqa_item uses the fixed prompt template") {
    std::string seen_context;
    RiggedLm lm([&](const std::string& context, const std::string&) {
        seen_context = context;
        return -1.0;
    });
    std::vector<std::string> options{"a", "b"};
    score_mcqa_item(lm, "What?", options, 0);
    CHECK(seen_context == "Question:\nWhat?\nAnswer:");
    CHECK(mcqa_prompt("q") == "Question:\nq\nAnswer:");
}

TEST_CASE("byte normalization flips a length bias") {
    // unnormalized: the longer option wins; per byte: the shorter one
    RiggedLm lm([](const std::string&, const std::string& continuation) {
        return continuation == " bb" ? -1.0 : -0.8;
    });
    std::vector<std::string> options{"bb", "c"};
    auto raw = score_mcqa_item(lm, "q", options, 0, false);
    auto norm = score_mcqa_item(lm, "q", options, 0, true);
    CHECK(raw.chosen_index == 1);   // -0.8 > -1.0
    CHECK(norm.chosen_index == 0);  // -1/3 > -0.8/2
}

TEST_CASE("mcqa_accuracy fixtures") {
    auto make = [](bool correct) {
        McqaOutcome o;
        o.correct = correct;
        return o;
    };
    std::vector<McqaOutcome> mixed{make(true), make(true), make(false), make(false)};
    auto s = mcqa_accuracy(mixed);
    CHECK(s.accuracy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.std_error == doctest::Approx(0.25).epsilon(1e-12));

    std::vector<McqaOutcome> all{make(true), make(true)};
    auto s1 = mcqa_accuracy(all);
    CHECK(s1.accuracy == 1.0);
    CHECK(s1.std_error == 0.0);

    std::vector<McqaOutcome> none{make(false), make(false)};
    auto s0 = mcqa_accuracy(none);
    CHECK(s0.accuracy == 0.0);
    CHECK(s0.std_error == 0.0);

    CHECK_THROWS_AS(mcqa_accuracy({}), InvalidRequest);
}
