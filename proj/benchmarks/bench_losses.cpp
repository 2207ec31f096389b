#include <benchmark/benchmark.h>

#include "svlr/recognition.hpp"
#include "svlr/synthworld.hpp"
#include "svlr/trainer.hpp"
#include "svlr/vqa.hpp"

using namespace svlr;

namespace {

const GeneratedCorpus& bench_corpus() {
    static GeneratedCorpus corpus = generate(WorldSpec::defaults());
    return corpus;
}

Model bench_model() {
    return init_model(ModelConfig::toy(), bench_corpus().ontology, 11);
}

}  // namespace

static void BM_object_loss_step(benchmark::State& state) {
    const auto& corpus = bench_corpus();
    Model model = bench_model();
    std::vector<const RegionSample*> regions;
    for (std::size_t i = 0; i < 32; ++i) regions.push_back(&corpus.recog_train[i]);
    const RegionBatch batch = make_region_batch(std::span<const RegionSample* const>(regions),
                                                corpus.ontology);
    for (auto _ : state) {
        model.params.zero_grads();
        Tape tape;
        Tensor loss = object_loss(batch, corpus.vocab, corpus.ontology, model, 1.0, NetMode::kTrain);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.value());
    }
}
BENCHMARK(BM_object_loss_step);

static void BM_attribute_loss_step(benchmark::State& state) {
    const auto& corpus = bench_corpus();
    Model model = bench_model();
    std::vector<const RegionSample*> regions;
    for (std::size_t i = 0; i < 32; ++i) regions.push_back(&corpus.recog_train[i]);
    const RegionBatch batch = make_region_batch(std::span<const RegionSample* const>(regions),
                                                corpus.ontology);
    for (auto _ : state) {
        model.params.zero_grads();
        Tape tape;
        Tensor loss = attribute_loss(batch, corpus.vocab, corpus.ontology, model, NetMode::kTrain);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.value());
    }
}
BENCHMARK(BM_attribute_loss_step);

static void BM_answer_loss_step(benchmark::State& state) {
    const auto& corpus = bench_corpus();
    Model model = bench_model();
    std::vector<const QASample*> batch;
    for (std::size_t i = 0; i < 8; ++i) batch.push_back(&corpus.qa_train[i]);
    for (auto _ : state) {
        model.params.zero_grads();
        Tape tape;
        Tensor loss = answer_loss(batch, corpus, model, 1.0, NetMode::kTrain);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.value());
    }
}
BENCHMARK(BM_answer_loss_step);

static void BM_predict(benchmark::State& state) {
    const auto& corpus = bench_corpus();
    Model model = bench_model();
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict(corpus.qa_val.front(), corpus, model));
    }
}
BENCHMARK(BM_predict);
