#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "cartoonqa/metrics.hpp"
#include "cartoonqa/stemmer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace cartoonqa;

namespace {

TokenizedPair pair_of(const std::string& cand, const std::string& ref) {
    return TokenizedPair::from_texts(cand, ref);
}

}  // namespace

TEST_CASE("tokenization is lowercase, punctuation-stripped, whitespace-split") {
    CHECK(tokenize("The CAT, sat!") == std::vector<std::string>{"the", "cat", "sat"});
    CHECK(tokenize("red-hat") == std::vector<std::string>{"red", "hat"});
    CHECK(tokenize("  ") == std::vector<std::string>{});
    CHECK(tokenize("?!?") == std::vector<std::string>{});
}

TEST_CASE("porter stemmer known vectors") {
    CHECK(porter_stem("cats") == "cat");
    CHECK(porter_stem("caresses") == "caress");
    CHECK(porter_stem("ponies") == "poni");
    CHECK(porter_stem("agreed") == "agre");
    CHECK(porter_stem("plastered") == "plaster");
    CHECK(porter_stem("motoring") == "motor");
    CHECK(porter_stem("sing") == "sing");
    CHECK(porter_stem("conflated") == "conflat");
    CHECK(porter_stem("hopping") == "hop");
    CHECK(porter_stem("hoping") == "hope");
    CHECK(porter_stem("happy") == "happi");
    CHECK(porter_stem("sky") == "sky");
    CHECK(porter_stem("relational") == "relat");
    CHECK(porter_stem("rational") == "ration");
    CHECK(porter_stem("adjustment") == "adjust");
    CHECK(porter_stem("adoption") == "adopt");
    CHECK(porter_stem("probate") == "probat");
    CHECK(porter_stem("cease") == "ceas");
    CHECK(porter_stem("controll") == "control");
    CHECK(porter_stem("a") == "a");
}

TEST_CASE("bleu worked examples") {
    const auto p = pair_of("the cat sat", "the cat sat on the mat");
    CHECK(bleu_n(p, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(bleu_n(p, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(bleu_n(p, 3) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    for (int n : {1, 2, 3})
        CHECK(bleu_n(pair_of("same text here", "same text here"), n) == doctest::Approx(1.0));
    CHECK(bleu_n(pair_of("", "the cat"), 1) == 0.0);
    CHECK(bleu_n(pair_of("dog", "the cat"), 1) == 0.0);  // zero precision, no smoothing
    CHECK(bleu_n(pair_of("the", "the cat"), 2) == 0.0);  // candidate too short for bigrams
    CHECK_THROWS_AS(bleu_n(pair_of("a", "a"), 4), std::invalid_argument);
}

TEST_CASE("brevity penalty never rewards shortening") {
    // prefixes of the reference keep all precisions at 1, so BLEU == BP
    const std::vector<std::string> ref_tokens{"a", "b", "c", "d", "e", "f"};
    double prev = 0.0;
    for (std::size_t len = 1; len <= ref_tokens.size(); ++len) {
        TokenizedPair p;
        p.candidate_tokens.assign(ref_tokens.begin(), ref_tokens.begin() + len);
        p.reference_tokens = ref_tokens;
        const double score = bleu_n(p, 1);
        CHECK(score >= prev);
        CHECK(score == doctest::Approx(brevity_penalty(len, ref_tokens.size())));
        prev = score;
    }
}

TEST_CASE("rouge worked examples") {
    const auto p = pair_of("the cat sat", "the cat sat on the mat");
    CHECK(rouge(p, RougeVariant::r1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rouge(p, RougeVariant::rl) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(rouge(pair_of("dog", "cat"), RougeVariant::r1) == 0.0);
    CHECK(rouge(pair_of("dog", "cat"), RougeVariant::r2) == 0.0);  // no bigrams on 1-word texts
    CHECK(rouge(pair_of("dog", "cat"), RougeVariant::rl) == 0.0);
    CHECK(rouge(pair_of("", "cat"), RougeVariant::rl) == 0.0);
    CHECK(rouge(pair_of("a donut", "a donut"), RougeVariant::r2) == doctest::Approx(1.0));
}

TEST_CASE("exhaustive small-instance oracle agreement for ROUGE-L and BLEU counts") {
    const std::vector<std::string> alphabet{"a", "b", "c"};
    std::vector<std::vector<std::string>> sequences{{}};
    std::vector<std::vector<std::string>> frontier{{}};
    for (int len = 1; len <= 4; ++len) {
        std::vector<std::vector<std::string>> next;
        for (const auto& seq : frontier)
            for (const auto& sym : alphabet) {
                auto longer = seq;
                longer.push_back(sym);
                next.push_back(longer);
            }
        sequences.insert(sequences.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    REQUIRE(sequences.size() == 121);  // 1 + 3 + 9 + 27 + 81

    for (const auto& cand : sequences) {
        for (const auto& ref : sequences) {
            TokenizedPair p{cand, ref};
            CHECK(lcs_length(cand, ref) == oracles::lcs(cand, ref));
            if (!ref.empty())
                CHECK(rouge(p, RougeVariant::rl) ==
                      doctest::Approx(oracles::rouge_l_f1(cand, ref)).epsilon(1e-12));
            for (int n = 1; n <= 3; ++n) {
                const auto got = clipped_ngram_counts(cand, ref, n);
                const auto want = oracles::clipped_counts(cand, ref, n);
                CHECK(got.first == want.first);
                CHECK(got.second == want.second);
            }
            if (!cand.empty() && !ref.empty())
                CHECK(bleu_n(p, 2) == doctest::Approx(oracles::bleu(cand, ref, 2)).epsilon(1e-12));
        }
    }
}

TEST_CASE("meteor formula cases") {
    SUBCASE("identical m-token texts score 1 - 0.5/m^3") {
        CHECK(meteor(pair_of("a b c d", "a b c d")) == doctest::Approx(0.9921875).epsilon(1e-12));
        CHECK(meteor(pair_of("one", "one")) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(meteor(pair_of("x y", "x y")) == doctest::Approx(1.0 - 0.5 / 8).epsilon(1e-12));
    }
    SUBCASE("zero overlap scores zero") {
        CHECK(meteor(pair_of("dog barks", "cat sleeps quietly")) == 0.0);
    }
    SUBCASE("stem stage matches inflected forms") {
        CHECK(meteor(pair_of("cats", "cat")) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("synonym stage consults the table") {
        SynonymTable table;
        table.add("couch", "sofa");
        CHECK(meteor(pair_of("couch", "sofa"), table) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(meteor(pair_of("couch", "sofa")) == 0.0);  // default table is empty
    }
    SUBCASE("fragmentation penalty bites reordered matches") {
        const double contiguous = meteor(pair_of("a b c", "a b c"));
        const double scrambled = meteor(pair_of("c a b", "a b c"));
        CHECK(scrambled < contiguous);
    }
}

TEST_CASE("meteor agrees with the staged-alignment oracle on random pairs") {
    std::mt19937 rng(40);
    const std::vector<std::string> vocab{"cat", "cats", "hat",  "red",  "blue",
                                         "runs", "running", "dog", "sleeps", "happy"};
    for (int trial = 0; trial < 300; ++trial) {
        auto draw = [&](int max_len) {
            std::vector<std::string> out;
            const int len = 1 + static_cast<int>(rng() % max_len);
            for (int i = 0; i < len; ++i) out.push_back(vocab[rng() % vocab.size()]);
            return out;
        };
        const auto cand = draw(6);
        const auto ref = draw(6);
        const TokenizedPair p{cand, ref};
        const auto want = oracles::meteor(cand, ref);
        CHECK(meteor(p) == doctest::Approx(want.score).epsilon(1e-9));
    }
}

TEST_CASE("bert score greedy matching against the brute-force matrix") {
    SUBCASE("hand-built 3x2 fixture") {
        std::vector<TokenEmbedding> cand{{"t0", {1.0, 0.0, 0.0}},
                                         {"t1", {0.6, 0.8, 0.0}},
                                         {"t2", {0.0, 1.0, 0.0}}};
        std::vector<TokenEmbedding> ref{{"r0", {0.8, 0.6, 0.0}}, {"r1", {0.0, 0.0, 1.0}}};
        const BertScoreResult got = bert_score_from_embeddings(cand, ref);
        const auto want = oracles::bert_greedy({{1.0, 0.0, 0.0}, {0.6, 0.8, 0.0}, {0.0, 1.0, 0.0}},
                                               {{0.8, 0.6, 0.0}, {0.0, 0.0, 1.0}});
        CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-12));
        CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-12));
        CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
    }
    SUBCASE("identical texts under the mock embedder give F1 = 1") {
        MockProvider mock;
        const BertScoreResult r = bert_score("a red hat", "a red hat", mock);
        CHECK(r.f1 == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("orthogonal single tokens give 0") {
        std::vector<TokenEmbedding> cand{{"a", {1.0, 0.0}}};
        std::vector<TokenEmbedding> ref{{"b", {0.0, 1.0}}};
        CHECK(bert_score_from_embeddings(cand, ref).f1 == 0.0);
    }
    SUBCASE("dimension mismatch is a protocol violation") {
        std::vector<TokenEmbedding> cand{{"a", {1.0, 0.0}}};
        std::vector<TokenEmbedding> ref{{"b", {1.0}}};
        CHECK_THROWS_AS(bert_score_from_embeddings(cand, ref), ProviderError);
    }
}

TEST_CASE("judge snapping: levels, ties, idempotence") {
    CHECK(snap_to_level(0.6) == 0.5);
    CHECK(snap_to_level(0.625) == 0.5);  // exact tie goes low
    CHECK(snap_to_level(0.125) == 0.0);
    CHECK(snap_to_level(0.875) == 0.75);
    CHECK(snap_to_level(1.4) == 1.0);
    CHECK(snap_to_level(-0.3) == 0.0);
    for (double level : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        CHECK(snap_to_level(level) == level);
        CHECK(is_judge_level(level));
    }
    CHECK_FALSE(is_judge_level(0.6));
}

TEST_CASE("judge parses replies and snaps off-scale numbers") {
    Sample s;
    s.id = "s1";
    s.question = "what colour?";
    s.ground_truth = "red";
    s.question_type = QuestionType::colour_counting;
    ImageAsset img;
    img.bytes = fixtures::tiny_png(1);
    s.images.push_back(img);

    const std::string tmpl =
        "Q: {question}\nType: {answer_type}\nRef: {reference}\nPred: {predicted}\nscore:";

    fixtures::ScriptedProvider provider;
    SUBCASE("exact level") {
        provider.add_rule("Pred:", "1.0");
        const JudgeScore js = judge(s, "red", provider, tmpl);
        CHECK(js.score == 1.0);
        CHECK_FALSE(js.snapped);
    }
    SUBCASE("off-scale reply snaps and flags") {
        provider.add_rule("Pred:", "The score is 0.6");
        const JudgeScore js = judge(s, "red", provider, tmpl);
        CHECK(js.score == 0.5);
        CHECK(js.snapped);
    }
    SUBCASE("tie resolves to the lower level") {
        provider.add_rule("Pred:", "0.625");
        CHECK(judge(s, "red", provider, tmpl).score == 0.5);
    }
    SUBCASE("empty prediction scores 0 without a provider call") {
        const JudgeScore js = judge(s, "  ", provider, tmpl);
        CHECK(js.score == 0.0);
        CHECK(provider.chat_calls == 0);
    }
    SUBCASE("reply without a number is unparseable") {
        provider.add_rule("Pred:", "excellent answer!");
        CHECK_THROWS_AS(judge(s, "red", provider, tmpl), JudgeReplyUnparseable);
    }
}

TEST_CASE("average accuracy") {
    CHECK(average_accuracy({1.0, 0.75, 0.5, 1.0}) == doctest::Approx(0.8125).epsilon(1e-15));
    CHECK(average_accuracy({0.42}) == doctest::Approx(0.42));
    CHECK_THROWS_AS(average_accuracy({}), std::invalid_argument);
    CHECK_THROWS_AS(average_accuracy({1.5}), std::invalid_argument);

    SUBCASE("a 160-score fixture reproduces the 0.8375 headline mean") {
        // 134 ones and 26 zeros: 134/160 = 0.8375
        std::vector<double> scores(134, 1.0);
        scores.insert(scores.end(), 26, 0.0);
        REQUIRE(scores.size() == 160);
        CHECK(average_accuracy(scores) == doctest::Approx(0.8375).epsilon(1e-12));
    }

    SUBCASE("order invariance") {
        std::vector<double> scores{0.0, 0.25, 1.0, 0.75, 0.5, 1.0};
        const double forward = average_accuracy(scores);
        std::mt19937 rng(5);
        for (int i = 0; i < 10; ++i) {
            std::shuffle(scores.begin(), scores.end(), rng);
            CHECK(average_accuracy(scores) == doctest::Approx(forward).epsilon(1e-15));
        }
    }
}

TEST_CASE("relative delta reproduces the headline pairs") {
    CHECK(format_delta(relative_delta(0.8187, 0.8375)) == "-2.24%");
    CHECK(format_delta(relative_delta(0.8313, 0.8375)) == "-0.74%");
    CHECK(format_delta(relative_delta(0.8250, 0.8375)) == "-1.49%");
    CHECK(format_delta(relative_delta(0.8403, 0.8819)) == "-4.72%");
    CHECK(format_delta(relative_delta(0.8819, 0.8819)) == "0%");
    CHECK(format_delta(relative_delta(0.9, 0.8)) == "+12.50%");
    CHECK_THROWS_AS(relative_delta(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("metric outputs stay in [0,1] on random text pairs") {
    std::mt19937 rng(77);
    const std::vector<std::string> vocab{"a", "red", "hat", "cat", "sofa", "two", "happy"};
    MockProvider mock;
    for (int trial = 0; trial < 60; ++trial) {
        auto draw = [&](int max_len) {
            std::string text;
            const int len = 1 + static_cast<int>(rng() % max_len);
            for (int i = 0; i < len; ++i) {
                if (i) text += " ";
                text += vocab[rng() % vocab.size()];
            }
            return text;
        };
        const auto scores = lexical_scores(draw(5), draw(5), mock);
        for (const auto& [name, value] : scores) {
            CHECK(value >= 0.0);
            CHECK(value <= 1.0);
        }
    }
}

TEST_CASE("evaluation summary keeps the exact mean invariant") {
    const std::vector<double> scores{1.0, 0.5, 0.75};
    const std::vector<std::map<std::string, double>> lexical(3, {{"BLEU-1", 0.5}});
    const EvaluationSummary summary = EvaluationSummary::build(scores, lexical);
    CHECK(summary.n == 3);
    CHECK(summary.average == doctest::Approx((1.0 + 0.5 + 0.75) / 3).epsilon(1e-15));
    CHECK(summary.per_metric.at("BLEU-1") == doctest::Approx(0.5));
    const json j = summary;
    const EvaluationSummary back = j.get<EvaluationSummary>();
    CHECK(back.average == summary.average);
    CHECK(back.scores == summary.scores);
}
