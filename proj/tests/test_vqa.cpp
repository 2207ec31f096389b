#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "svlr/rng.hpp"
#include "svlr/vqa.hpp"

using namespace svlr;

namespace {

// a sample with handpicked tokens/options on top of a generated image
QASample crafted_sample(const fixtures::TinyWorld& world) {
    QASample qa = world.corpus->qa_train.front();
    return qa;
}

}  // namespace

TEST_CASE("mention extraction filters by part of speech and dedups") {
    auto world = fixtures::tiny_world(21);
    const auto& corpus = *world.corpus;
    QASample qa = crafted_sample(world);
    const WordId noun = corpus.ontology.objects.front();
    const WordId adj = corpus.ontology.attributes.front();
    const WordId other = corpus.vocab.id("what");

    qa.tokens = {{other, Pos::kOther, 1}, {noun, Pos::kNoun, 2}, {noun, Pos::kNoun, 3},
                 {adj, Pos::kAdj, 4}};
    qa.options = {{adj}, {other}};
    qa.correct = 0;

    const Mentions m = extract_mentions(qa, 0, corpus.vocab);
    CHECK(m.nouns == std::vector<WordId>{noun});       // deduplicated
    CHECK(m.adjectives == std::vector<WordId>{adj});   // option adj merged, deduplicated

    // an option with no nouns or adjectives leaves only question words
    const Mentions m1 = extract_mentions(qa, 1, corpus.vocab);
    CHECK(m1.nouns == std::vector<WordId>{noun});
    CHECK(m1.adjectives == std::vector<WordId>{adj});

    // no nouns or adjectives anywhere -> both sets empty
    qa.tokens = {{other, Pos::kOther, 1}};
    qa.options = {{other}, {other}};
    const Mentions m2 = extract_mentions(qa, 0, corpus.vocab);
    CHECK(m2.nouns.empty());
    CHECK(m2.adjectives.empty());
}

TEST_CASE("positional fallback fills untagged bins") {
    auto world = fixtures::tiny_world(22);
    const auto& corpus = *world.corpus;
    QASample qa = crafted_sample(world);
    const WordId noun = corpus.ontology.objects.front();
    const WordId noun2 = corpus.ontology.objects.back();
    const WordId other = corpus.vocab.id("the");
    qa.tokens = {{other, Pos::kOther, 0}, {noun, Pos::kNoun, 0}, {other, Pos::kOther, 0},
                 {noun2, Pos::kNoun, 0}, {other, Pos::kOther, 0}};
    const auto bins = effective_bins(qa);
    CHECK(bins == std::vector<int>{1, 2, 4, 3, 4});
}

TEST_CASE("attention with no mentions is uniform") {
    auto world = fixtures::tiny_world(23);
    const auto& corpus = *world.corpus;
    QASample qa = crafted_sample(world);
    qa.tokens = {{corpus.vocab.id("what"), Pos::kOther, 1}};
    qa.options = {{corpus.vocab.id("the")}, {corpus.vocab.id("is")}};
    qa.correct = 0;
    const AttentionMap map = attention_scores(qa, 0, corpus, *world.model);
    const double uniform = 1.0 / static_cast<double>(qa.region_ids.size());
    for (double w : map.weights) CHECK(w == doctest::Approx(uniform));
}

TEST_CASE("single-region attention weight is one") {
    auto world = fixtures::tiny_world(24);
    const auto& corpus = *world.corpus;
    QASample qa = crafted_sample(world);
    qa.region_ids.resize(1);
    const AttentionMap map = attention_scores(qa, 0, corpus, *world.model);
    REQUIRE(map.weights.size() == 1);
    CHECK(map.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("attention matches the naive loop and stays normalized") {
    for (int round = 0; round < 20; ++round) {
        auto world = fixtures::tiny_world(500 + round);
        const auto& corpus = *world.corpus;
        const QASample& qa = corpus.qa_train[round % corpus.qa_train.size()];
        const std::size_t option = static_cast<std::size_t>(round) % qa.options.size();

        const AttentionMap map = attention_scores(qa, option, corpus, *world.model);
        const auto want = refimpl::attention(*world.model, corpus, qa, option, NetMode::kEval);
        double total = 0.0;
        for (std::size_t r = 0; r < map.weights.size(); ++r) {
            CHECK(map.raw[r] == doctest::Approx(want.raw[r]).epsilon(1e-9));
            CHECK(map.weights[r] == doctest::Approx(want.weights[r]).epsilon(1e-9));
            CHECK(map.weights[r] >= 0.0);
            total += map.weights[r];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("attention depends on the candidate answer") {
    auto world = fixtures::tiny_world(25);
    const auto& corpus = *world.corpus;
    // find a what-question whose options differ in their adjective
    for (const auto& qa : corpus.qa_train) {
        if (qa.question_template == "yesno") continue;
        const AttentionMap a = attention_scores(qa, qa.correct, corpus, *world.model);
        const std::size_t other = qa.correct == 0 ? 1 : 0;
        const AttentionMap b = attention_scores(qa, other, corpus, *world.model);
        double diff = 0.0;
        for (std::size_t r = 0; r < a.weights.size(); ++r) diff += std::fabs(a.weights[r] - b.weights[r]);
        CHECK(diff > 1e-12);
        return;
    }
    FAIL("no what-question in the tiny corpus");
}

TEST_CASE("image representation pools scores by attention") {
    for (int round = 0; round < 10; ++round) {
        auto world = fixtures::tiny_world(600 + round);
        const auto& corpus = *world.corpus;
        auto& model = *world.model;
        const QASample& qa = corpus.qa_train[round % corpus.qa_train.size()];

        SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);
        const Tensor attn = attention_weights(ctx, qa.correct);
        const Tensor f_img = image_representation(ctx, attn);
        const auto want = refimpl::image_representation(model, corpus, qa, qa.correct, NetMode::kEval);
        REQUIRE(f_img.numel() == want.size());
        for (std::size_t k = 0; k < want.size(); ++k) {
            CHECK(f_img.at(k) == doctest::Approx(want[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("one region with full weight reproduces its score row") {
    auto world = fixtures::tiny_world(26);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    QASample qa = crafted_sample(world);
    qa.region_ids.resize(1);
    SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Tensor one = Tensor::from({1}, {1.0});
    const Tensor f_img = image_representation(ctx, one);
    const std::size_t n_obj = corpus.ontology.objects.size();
    for (std::size_t k = 0; k < n_obj; ++k) {
        CHECK(f_img.at(k) == doctest::Approx(ctx.s_obj.at(0, k)).epsilon(1e-12));
    }
    for (std::size_t k = 0; k < corpus.ontology.attributes.size(); ++k) {
        CHECK(f_img.at(n_obj + k) == doctest::Approx(ctx.s_atr.at(0, k)).epsilon(1e-12));
    }
}

TEST_CASE("equal attention over two regions averages their rows") {
    auto world = fixtures::tiny_world(27);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    QASample qa = crafted_sample(world);
    qa.region_ids.resize(2);
    SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Tensor half = Tensor::from({2}, {0.5, 0.5});
    const Tensor f_img = image_representation(ctx, half);
    for (std::size_t k = 0; k < corpus.ontology.objects.size(); ++k) {
        CHECK(f_img.at(k) ==
              doctest::Approx(0.5 * (ctx.s_obj.at(0, k) + ctx.s_obj.at(1, k))).epsilon(1e-12));
    }
}

TEST_CASE("question representation: bins, zero blocks, order-freeness") {
    auto world = fixtures::tiny_world(28);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    const std::size_t d = model.config.embed_dim;
    QASample qa = crafted_sample(world);
    const WordId w1 = corpus.ontology.objects[0];
    const WordId w2 = corpus.ontology.objects[1];

    // all tokens in bin 1 leaves bins 2..4 zero
    qa.tokens = {{w1, Pos::kNoun, 1}, {w2, Pos::kNoun, 1}};
    {
        SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);
        const Tensor q = question_representation(ctx);
        REQUIRE(q.numel() == 4 * d);
        for (std::size_t i = d; i < 4 * d; ++i) CHECK(q.at(i) == 0.0);
    }

    // permuting tokens inside a bin changes nothing
    qa.tokens = {{w2, Pos::kNoun, 1}, {w1, Pos::kNoun, 1}};
    SampleContext ctx2 = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Tensor q2 = question_representation(ctx2);

    qa.tokens = {{w1, Pos::kNoun, 1}, {w2, Pos::kNoun, 1}};
    SampleContext ctx1 = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Tensor q1 = question_representation(ctx1);
    for (std::size_t i = 0; i < q1.numel(); ++i) {
        CHECK(q1.at(i) == doctest::Approx(q2.at(i)).epsilon(1e-12));
    }

    // single-token bins concatenate the raw embeddings
    qa.tokens = {{w1, Pos::kNoun, 1}, {w2, Pos::kNoun, 2}};
    SampleContext ctx3 = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Tensor q3 = question_representation(ctx3);
    const auto ref = refimpl::embed_words(model, corpus.vocab, {w1, w2});
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(q3.at(i) == doctest::Approx(ref[0][i]).epsilon(1e-9));
        CHECK(q3.at(d + i) == doctest::Approx(ref[1][i]).epsilon(1e-9));
    }
}

TEST_CASE("answer representation averages and rejects empty options") {
    auto world = fixtures::tiny_world(29);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    QASample qa = crafted_sample(world);
    const WordId w = corpus.ontology.attributes[0];
    qa.options = {{w}, {w, w}, {}};

    SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Tensor one = answer_representation(ctx, 0);
    const Tensor dup = answer_representation(ctx, 1);
    const auto ref = refimpl::embed_words(model, corpus.vocab, {w});
    for (std::size_t i = 0; i < one.numel(); ++i) {
        CHECK(one.at(i) == doctest::Approx(ref[0][i]).epsilon(1e-9));
        CHECK(dup.at(i) == doctest::Approx(one.at(i)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(answer_representation(ctx, 2), ContractError);
}

TEST_CASE("triplet scores match the naive pipeline in both modes") {
    for (int round = 0; round < 10; ++round) {
        auto world = fixtures::tiny_world(700 + round,
                                          round % 2 ? ShareMode::kMultitask : ShareMode::kSvlr);
        const auto& corpus = *world.corpus;
        auto& model = *world.model;
        std::vector<const QASample*> samples = {&corpus.qa_train[0], &corpus.qa_train[1]};
        std::vector<std::pair<std::size_t, std::size_t>> triplets;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            for (std::size_t o = 0; o < samples[s]->options.size(); ++o) triplets.emplace_back(s, o);
        }
        const NetMode mode = round % 3 == 0 ? NetMode::kTrain : NetMode::kEval;

        // take a pristine copy: train mode moves the running moments
        std::vector<std::pair<std::string, BatchNormState>> pristine;
        for (const auto& name : model.params.bn_names()) {
            pristine.emplace_back(name, model.params.bn_state(name));
        }
        const auto want = refimpl::triplet_scores(model, corpus, samples, triplets, mode);

        std::vector<SampleContext> ctxs = make_sample_contexts(samples, corpus, model, mode);
        const Tensor got = score_triplets(ctxs, triplets, model, mode);
        for (const auto& [name, st] : pristine) model.params.bn_state(name) = st;

        REQUIRE(got.numel() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(got.at(i) == doctest::Approx(want[i]).epsilon(1e-8));
        }
    }
}

TEST_CASE("zero readout weights zero every triplet score") {
    auto world = fixtures::tiny_world(30);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    for (auto& v : model.params.at("vqa.w3").mutable_data()) v = 0.0;
    const QASample& qa = corpus.qa_train.front();
    for (std::size_t o = 0; o < qa.options.size(); ++o) {
        CHECK(score_triplet(qa, o, corpus, model) == 0.0);
    }
}

TEST_CASE("identical option content scores identically") {
    auto world = fixtures::tiny_world(31);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    QASample qa = corpus.qa_train.front();
    qa.options[1] = qa.options[0];
    const double a = score_triplet(qa, 0, corpus, model);
    const double b = score_triplet(qa, 1, corpus, model);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("answer loss hand cases and naive agreement") {
    // one sample, one negative, equal scores, margin 1 -> loss 1: equal
    // scores arise from duplicated option content
    auto world = fixtures::tiny_world(32);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    QASample qa = corpus.qa_train.front();
    qa.options.resize(2);
    qa.options[1] = qa.options[0];
    qa.correct = 0;
    std::vector<const QASample*> batch = {&qa};
    const Tensor loss = answer_loss(batch, corpus, model, 1.0, NetMode::kEval);
    CHECK(loss.value() == doctest::Approx(1.0).epsilon(1e-9));

    // margin satisfied by a huge negative margin -> zero
    const Tensor zero = answer_loss(batch, corpus, model, -1e9, NetMode::kEval);
    CHECK(zero.value() == 0.0);

    for (int round = 0; round < 10; ++round) {
        auto w2 = fixtures::tiny_world(800 + round);
        std::vector<const QASample*> b2 = {&w2.corpus->qa_train[0], &w2.corpus->qa_train[1],
                                           &w2.corpus->qa_train[2]};
        const Tensor got = answer_loss(b2, *w2.corpus, *w2.model, 1.0, NetMode::kEval);
        const double want = refimpl::answer_loss(*w2.model, *w2.corpus, b2, 1.0, NetMode::kEval);
        CHECK(got.value() == doctest::Approx(want).epsilon(1e-9));
        CHECK(got.value() >= 0.0);
    }
}

TEST_CASE("prediction is argmax with ties to the lowest index") {
    auto world = fixtures::tiny_world(33);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;

    QASample qa = corpus.qa_train.front();
    qa.options.resize(1);
    CHECK(predict(qa, corpus, model) == 0);

    // duplicated options tie, the lowest index wins
    QASample dup = corpus.qa_train.front();
    for (auto& opt : dup.options) opt = dup.options[2];
    CHECK(predict(dup, corpus, model) == 0);
}

TEST_CASE("zero-shot score agrees with the brute-force evaluation") {
    for (int round = 0; round < 20; ++round) {
        auto world = fixtures::tiny_world(900 + round);
        const auto& corpus = *world.corpus;
        const QASample& qa = corpus.qa_val[round % corpus.qa_val.size()];
        for (std::size_t o = 0; o < qa.options.size(); ++o) {
            const double got = zero_shot_score(qa, o, corpus, *world.model);
            const double want = refimpl::zero_shot_score(*world.model, corpus, qa, o);
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("zero-shot min gating: equal sides reduce to attention-weighted evidence") {
    auto world = fixtures::tiny_world(34);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;
    // question and answer with the same single noun: p_q == p_a per region
    QASample qa = corpus.qa_train.front();
    const WordId noun = corpus.ontology.objects.front();
    qa.tokens = {{noun, Pos::kNoun, 2}};
    qa.options = {{noun}, {corpus.vocab.id("what")}};
    qa.correct = 0;

    const double s = zero_shot_score(qa, 0, corpus, model);
    const AttentionMap att = attention_scores(qa, 0, corpus, model);
    double want = 0.0;
    for (std::size_t r = 0; r < att.weights.size(); ++r) want += att.weights[r] * att.raw[r];
    CHECK(s == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("attention dumps round-trip the map") {
    auto world = fixtures::tiny_world(35);
    const auto& corpus = *world.corpus;
    const QASample& qa = corpus.qa_val.front();
    const AttentionMap map = attention_scores(qa, qa.correct, corpus, *world.model);
    const auto file = std::filesystem::temp_directory_path() / "svlr_attn_dump.csv";
    write_attention_dump(qa, map, file);

    std::ifstream in(file);
    std::string line;
    std::getline(in, line);  // comment
    std::getline(in, line);  // header
    CHECK(line == "region,raw,weight");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == map.regions.size());
    std::filesystem::remove(file);
}
