#include <memory>

#include "svlr/gradcheck.hpp"
#include "svlr/recognition.hpp"
#include "svlr/synthworld.hpp"
#include "svlr/trainer.hpp"
#include "svlr/vqa.hpp"

namespace svlr {

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double spread = 1.0, bool requires_grad = true) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(-spread, spread);
    return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

// Probes a tensor-valued op through a fixed random linear functional so
// every output coordinate influences the checked scalar.
Tensor probe(const Tensor& out, const Tensor& weights) { return sum(mul(out, weights)); }

struct SuiteEntry {
    std::string name;
    GradCheckOptions opts;
    std::function<GradInstance(Rng&)> make;
};

WorldSpec tiny_world_spec(std::uint64_t seed) {
    WorldSpec spec;
    spec.seed = seed;
    spec.leaf_objects = 4;
    spec.parent_objects = 2;
    spec.attribute_families = 2;
    spec.attributes_per_family = 3;
    spec.word_dim = 6;
    spec.region_dim = 6;
    spec.regions_per_image = 3;
    spec.options_per_question = 3;
    spec.yesno_fraction = 0.25;
    spec.recog_train_size = 16;
    spec.recog_val_per_class = 1;
    spec.recog_test_per_class = 1;
    spec.qa_train_size = 8;
    spec.qa_val_size = 2;
    spec.qa_test_size = 2;
    spec.synonym_pairs = 0;
    spec.groups.clear();
    return spec;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.word_dim = 6;
    cfg.region_dim = 6;
    cfg.hidden_dim = 5;
    cfg.embed_dim = 4;
    cfg.bimodal_dim = 8;
    return cfg;
}

struct TinySetup {
    std::shared_ptr<GeneratedCorpus> corpus;
    std::shared_ptr<Model> model;
    std::vector<std::pair<std::string, BatchNormState>> pristine_bn;
};

TinySetup make_tiny_setup(Rng& rng, ShareMode mode = ShareMode::kSvlr) {
    TinySetup setup;
    setup.corpus = std::make_shared<GeneratedCorpus>(generate(tiny_world_spec(rng.next_u64())));
    ModelConfig cfg = tiny_model_config();
    cfg.mode = mode;
    setup.model = std::make_shared<Model>(init_model(cfg, setup.corpus->ontology, rng.next_u64()));
    // gradients are checked at generic points: jitter every parameter so
    // zero-initialized biases and offsets do not pin activations to kinks
    for (const auto& name : setup.model->params.names()) {
        for (auto& v : setup.model->params.at(name).mutable_data()) v += rng.uniform(-0.25, 0.25);
    }
    for (const auto& name : setup.model->params.bn_names()) {
        setup.pristine_bn.emplace_back(name, setup.model->params.bn_state(name));
    }
    return setup;
}

void restore_bn(const TinySetup& setup) {
    for (const auto& [name, state] : setup.pristine_bn) {
        setup.model->params.bn_state(name) = state;
    }
}

std::vector<Tensor> all_params(Model& model) {
    std::vector<Tensor> out;
    for (const auto& name : model.params.names()) out.push_back(model.params.at(name));
    return out;
}

std::vector<SuiteEntry> build_suite() {
    std::vector<SuiteEntry> suite;
    const GradCheckOptions tight;       // rtol 1e-4
    GradCheckOptions loose;             // batch-norm and hinge paths
    loose.rtol = 1e-3;
    loose.atol = 1e-6;
    loose.max_resamples = 20;

    auto entry = [&suite](std::string name, GradCheckOptions opts,
                          std::function<GradInstance(Rng&)> make) {
        suite.push_back({std::move(name), opts, std::move(make)});
    };

    entry("add", tight, [](Rng& rng) {
        Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 3}, rng);
        Tensor c = rand_tensor({2, 3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(add(a, b), c); }, {a, b}};
    });
    entry("sub", tight, [](Rng& rng) {
        Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 3}, rng);
        Tensor c = rand_tensor({2, 3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(sub(a, b), c); }, {a, b}};
    });
    entry("mul", tight, [](Rng& rng) {
        Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 3}, rng);
        Tensor c = rand_tensor({2, 3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(mul(a, b), c); }, {a, b}};
    });
    entry("add_row", tight, [](Rng& rng) {
        Tensor x = rand_tensor({3, 4}, rng), r = rand_tensor({4}, rng);
        Tensor c = rand_tensor({3, 4}, rng, 1.0, false);
        return GradInstance{[=] { return probe(add_row(x, r), c); }, {x, r}};
    });
    entry("add_scalar", tight, [](Rng& rng) {
        Tensor x = rand_tensor({5}, rng), s = rand_tensor({1}, rng);
        Tensor c = rand_tensor({5}, rng, 1.0, false);
        return GradInstance{[=] { return probe(add_scalar(x, s), c); }, {x, s}};
    });
    entry("add_const", tight, [](Rng& rng) {
        Tensor x = rand_tensor({4}, rng);
        Tensor c = rand_tensor({4}, rng, 1.0, false);
        return GradInstance{[=] { return probe(add_const(x, 0.7), c); }, {x}};
    });
    entry("scale", tight, [](Rng& rng) {
        Tensor x = rand_tensor({4}, rng);
        Tensor c = rand_tensor({4}, rng, 1.0, false);
        return GradInstance{[=] { return probe(scale(x, -1.3), c); }, {x}};
    });
    entry("matmul", tight, [](Rng& rng) {
        Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
        return GradInstance{[=] { return sum(matmul(a, b)); }, {a, b}};
    });
    entry("matmul_probed", tight, [](Rng& rng) {
        Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
        Tensor c = rand_tensor({3, 2}, rng, 1.0, false);
        return GradInstance{[=] { return probe(matmul(a, b), c); }, {a, b}};
    });
    entry("transpose", tight, [](Rng& rng) {
        Tensor x = rand_tensor({3, 4}, rng);
        Tensor c = rand_tensor({4, 3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(transpose(x), c); }, {x}};
    });
    entry("matvec", tight, [](Rng& rng) {
        Tensor a = rand_tensor({3, 4}, rng), x = rand_tensor({4}, rng);
        Tensor c = rand_tensor({3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(matvec(a, x), c); }, {a, x}};
    });
    entry("dot", tight, [](Rng& rng) {
        Tensor a = rand_tensor({5}, rng), b = rand_tensor({5}, rng);
        return GradInstance{[=] { return dot(a, b); }, {a, b}};
    });
    entry("row", tight, [](Rng& rng) {
        Tensor x = rand_tensor({3, 4}, rng);
        Tensor c = rand_tensor({4}, rng, 1.0, false);
        return GradInstance{[=] { return probe(row(x, 1), c); }, {x}};
    });
    entry("slice_rows", tight, [](Rng& rng) {
        Tensor x = rand_tensor({4, 3}, rng);
        Tensor c = rand_tensor({2, 3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(slice_rows(x, 1, 2), c); }, {x}};
    });
    entry("element", tight, [](Rng& rng) {
        Tensor x = rand_tensor({6}, rng);
        return GradInstance{[=] { return element(x, 2); }, {x}};
    });
    entry("concat", tight, [](Rng& rng) {
        Tensor a = rand_tensor({3}, rng), b = rand_tensor({2}, rng);
        Tensor c = rand_tensor({5}, rng, 1.0, false);
        return GradInstance{[=] { return probe(concat({a, b}), c); }, {a, b}};
    });
    entry("stack_rows", tight, [](Rng& rng) {
        Tensor a = rand_tensor({4}, rng), b = rand_tensor({4}, rng);
        Tensor c = rand_tensor({2, 4}, rng, 1.0, false);
        return GradInstance{[=] { return probe(stack_rows({a, b}), c); }, {a, b}};
    });
    entry("relu", tight, [](Rng& rng) {
        Tensor x = rand_tensor({2, 4}, rng);
        Tensor c = rand_tensor({2, 4}, rng, 1.0, false);
        return GradInstance{[=] { return probe(relu(x), c); }, {x}};
    });
    entry("sigmoid", tight, [](Rng& rng) {
        Tensor x = rand_tensor({5}, rng, 2.0);
        Tensor c = rand_tensor({5}, rng, 1.0, false);
        return GradInstance{[=] { return probe(sigmoid(x), c); }, {x}};
    });
    entry("log_sigmoid", tight, [](Rng& rng) {
        Tensor x = rand_tensor({5}, rng, 2.0);
        Tensor c = rand_tensor({5}, rng, 1.0, false);
        return GradInstance{[=] { return probe(log_sigmoid(x), c); }, {x}};
    });
    entry("softmax", tight, [](Rng& rng) {
        Tensor x = rand_tensor({5}, rng, 2.0);
        Tensor c = rand_tensor({5}, rng, 1.0, false);
        return GradInstance{[=] { return probe(softmax(x), c); }, {x}};
    });
    entry("max_elem", tight, [](Rng& rng) {
        Tensor x = rand_tensor({6}, rng);
        return GradInstance{[=] { return max_elem(x); }, {x}};
    });
    entry("rowwise_max", tight, [](Rng& rng) {
        Tensor x = rand_tensor({3, 4}, rng);
        Tensor c = rand_tensor({3}, rng, 1.0, false);
        return GradInstance{[=] { return probe(rowwise_max(x), c); }, {x}};
    });
    entry("sum", tight, [](Rng& rng) {
        Tensor x = rand_tensor({2, 3}, rng);
        return GradInstance{[=] { return sum(x); }, {x}};
    });
    entry("mean", tight, [](Rng& rng) {
        Tensor x = rand_tensor({2, 3}, rng);
        return GradInstance{[=] { return mean(x); }, {x}};
    });
    entry("batch_norm_train", loose, [](Rng& rng) {
        Tensor x = rand_tensor({4, 3}, rng);
        Tensor scale_t = rand_tensor({3}, rng, 0.5);
        Tensor offset = rand_tensor({3}, rng, 0.5);
        Tensor c = rand_tensor({4, 3}, rng, 1.0, false);
        auto fwd = [=] {
            BatchNormState state = BatchNormState::init(3);
            return probe(batch_norm(x, scale_t, offset, state, NetMode::kTrain), c);
        };
        return GradInstance{fwd, {x, scale_t, offset}};
    });
    entry("batch_norm_eval", tight, [](Rng& rng) {
        Tensor x = rand_tensor({3, 3}, rng);
        Tensor scale_t = rand_tensor({3}, rng, 0.5);
        Tensor offset = rand_tensor({3}, rng, 0.5);
        Tensor c = rand_tensor({3, 3}, rng, 1.0, false);
        BatchNormState state = BatchNormState::init(3);
        for (auto& v : state.running_mean) v = rng.uniform(-0.5, 0.5);
        for (auto& v : state.running_var) v = rng.uniform(0.5, 1.5);
        auto fwd = [=] {
            BatchNormState s = state;
            return probe(batch_norm(x, scale_t, offset, s, NetMode::kEval), c);
        };
        return GradInstance{fwd, {x, scale_t, offset}};
    });
    entry("composite_chain", tight, [](Rng& rng) {
        Tensor x = rand_tensor({2, 4}, rng);
        Tensor w1 = rand_tensor({4, 3}, rng);
        Tensor w2 = rand_tensor({3, 2}, rng);
        Tensor c = rand_tensor({2, 2}, rng, 1.0, false);
        return GradInstance{[=] { return probe(sigmoid(matmul(relu(matmul(x, w1)), w2)), c); },
                            {x, w1, w2}};
    });

    entry("embed_words", tight, [](Rng& rng) {
        auto setup = make_tiny_setup(rng);
        std::vector<WordId> ids = {0, 2, 4};
        Tensor c = rand_tensor({3, setup.model->config.embed_dim}, rng, 1.0, false);
        auto fwd = [setup, ids, c] {
            return probe(embed_words(ids, setup.corpus->vocab, *setup.model), c);
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });
    entry("embed_regions_train", loose, [](Rng& rng) {
        auto setup = make_tiny_setup(rng);
        const Tensor feats = rand_tensor({3, setup.model->config.region_dim}, rng, 1.0, false);
        Tensor c = rand_tensor({3, setup.model->config.embed_dim}, rng, 1.0, false);
        auto fwd = [setup, feats, c] {
            restore_bn(setup);
            return probe(embed_regions(feats, Head::kObject, *setup.model, NetMode::kTrain), c);
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });
    entry("object_loss", loose, [](Rng& rng) {
        auto setup = make_tiny_setup(rng);
        auto batch = std::make_shared<RegionBatch>(make_region_batch(
            std::vector<RegionSample>(setup.corpus->recog_train.begin(),
                                      setup.corpus->recog_train.begin() + 4),
            setup.corpus->ontology));
        auto fwd = [setup, batch] {
            restore_bn(setup);
            return object_loss(*batch, setup.corpus->vocab, setup.corpus->ontology, *setup.model,
                               1.0, NetMode::kTrain);
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });
    entry("attribute_loss", loose, [](Rng& rng) {
        auto setup = make_tiny_setup(rng);
        auto batch = std::make_shared<RegionBatch>(make_region_batch(
            std::vector<RegionSample>(setup.corpus->recog_train.begin(),
                                      setup.corpus->recog_train.begin() + 4),
            setup.corpus->ontology));
        auto fwd = [setup, batch] {
            restore_bn(setup);
            return attribute_loss(*batch, setup.corpus->vocab, setup.corpus->ontology, *setup.model,
                                  NetMode::kTrain);
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });
    entry("score_triplet", loose, [](Rng& rng) {
        auto setup = make_tiny_setup(rng);
        auto fwd = [setup] {
            restore_bn(setup);
            std::vector<SampleContext> ctxs;
            std::vector<std::pair<std::size_t, std::size_t>> triplets;
            for (std::size_t s = 0; s < 3; ++s) {
                ctxs.push_back(make_sample_context(setup.corpus->qa_train.at(s), *setup.corpus,
                                                   *setup.model, NetMode::kTrain));
                for (std::size_t o = 0; o < setup.corpus->qa_train.at(s).options.size(); ++o) {
                    triplets.emplace_back(s, o);
                }
            }
            return sum(score_triplets(ctxs, triplets, *setup.model, NetMode::kTrain));
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });
    entry("answer_loss", loose, [](Rng& rng) {
        auto setup = make_tiny_setup(rng);
        auto fwd = [setup] {
            restore_bn(setup);
            std::vector<const QASample*> batch = {&setup.corpus->qa_train.at(0),
                                                  &setup.corpus->qa_train.at(1),
                                                  &setup.corpus->qa_train.at(2)};
            return answer_loss(batch, *setup.corpus, *setup.model, 1.0, NetMode::kTrain);
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });
    entry("answer_loss_multitask", loose, [](Rng& rng) {
        auto setup = make_tiny_setup(rng, ShareMode::kMultitask);
        auto fwd = [setup] {
            restore_bn(setup);
            std::vector<const QASample*> batch = {&setup.corpus->qa_train.at(0),
                                                  &setup.corpus->qa_train.at(1),
                                                  &setup.corpus->qa_train.at(2)};
            return answer_loss(batch, *setup.corpus, *setup.model, 1.0, NetMode::kTrain);
        };
        return GradInstance{fwd, all_params(*setup.model)};
    });

    return suite;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, int rounds) {
    std::vector<GradCheckReport> reports;
    Rng rng(seed);
    for (const auto& e : build_suite()) {
        GradCheckReport combined;
        combined.name = e.name;
        combined.pass = true;
        for (int r = 0; r < rounds; ++r) {
            Rng round_rng = rng.fork(static_cast<std::uint64_t>(r) + 101);
            const GradCheckReport rep = check_gradient(e.name, e.make, round_rng, e.opts);
            combined.coords_checked += rep.coords_checked;
            combined.coords_skipped += rep.coords_skipped;
            combined.resamples += rep.resamples;
            combined.max_rel_err = std::max(combined.max_rel_err, rep.max_rel_err);
            if (!rep.pass) {
                combined.pass = false;
                combined.note = rep.note;
            }
        }
        reports.push_back(std::move(combined));
    }
    return reports;
}

}  // namespace svlr
