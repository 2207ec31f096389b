#include "svlr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "svlr/config.hpp"
#include "svlr/recognition.hpp"
#include "svlr/rng.hpp"
#include "svlr/vqa.hpp"

namespace svlr {

std::string arm_str(Arm a) {
    switch (a) {
        case Arm::kVqaOnly: return "vqa_only";
        case Arm::kGenomeOnly: return "genome_only";
        case Arm::kJointMultitask: return "joint_multitask";
        case Arm::kJointSvlr: return "joint_svlr";
        case Arm::kZeroShot: return "zero_shot";
    }
    return "joint_svlr";
}

Arm arm_from(const std::string& s) {
    if (s == "vqa_only") return Arm::kVqaOnly;
    if (s == "genome_only") return Arm::kGenomeOnly;
    if (s == "joint_multitask") return Arm::kJointMultitask;
    if (s == "joint_svlr") return Arm::kJointSvlr;
    if (s == "zero_shot") return Arm::kZeroShot;
    throw ParseError("unknown arm '" + s + "'");
}

double lr_at(std::size_t step, const LrSchedule& schedule) {
    const std::size_t decays = schedule.interval == 0 ? 0 : step / schedule.interval;
    return schedule.init * std::pow(schedule.decay, static_cast<double>(decays));
}

RunConfig RunConfig::defaults_for(Arm arm) {
    RunConfig cfg;
    cfg.arm = arm;
    switch (arm) {
        case Arm::kVqaOnly:
            cfg.alpha_ans = 1.0;
            cfg.alpha_obj = 0.0;
            cfg.alpha_atr = 0.0;
            break;
        case Arm::kGenomeOnly:
        case Arm::kZeroShot:
            cfg.alpha_ans = 0.0;
            cfg.alpha_obj = 1.0;
            cfg.alpha_atr = 1.0;
            break;
        case Arm::kJointMultitask:
        case Arm::kJointSvlr:
            cfg.alpha_ans = 1.0;
            cfg.alpha_obj = 0.1;
            cfg.alpha_atr = 0.1;
            break;
    }
    cfg.model.mode = arm == Arm::kJointMultitask ? ShareMode::kMultitask : ShareMode::kSvlr;
    return cfg;
}

AdamState AdamState::init(const ParamStore& params) {
    AdamState s;
    for (const auto& name : params.names()) {
        s.m.emplace(name, std::vector<double>(params.at(name).numel(), 0.0));
        s.v.emplace(name, std::vector<double>(params.at(name).numel(), 0.0));
    }
    return s;
}

namespace {

void adam_update(Model& model, AdamState& opt, double lr, double weight_decay) {
    opt.step++;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (const auto& name : model.params.names()) {
        Tensor& p = model.params.at(name);
        auto& theta = p.mutable_data();
        if (!p.has_grad()) {
            // A loss-untouched parameter sees only its decay term. Keeping
            // it out of the moment estimates matters: Adam would normalize
            // the lone decay gradient to full lr-sized steps and march the
            // parameter to zero within a few thousand steps.
            if (weight_decay != 0.0) {
                for (auto& t : theta) t -= lr * weight_decay * t;
            }
            continue;
        }
        const auto& grad = p.grad();
        auto& m = opt.m.at(name);
        auto& v = opt.v.at(name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad[i] + weight_decay * theta[i];
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
}

void dump_diagnostics(const Model& model, const StepStats& stats, const std::filesystem::path& file) {
    std::ofstream out(file);
    out << "loss_total " << stats.loss_total << "\n";
    out << "loss_ans " << stats.loss_ans << "\n";
    out << "loss_obj " << stats.loss_obj << "\n";
    out << "loss_atr " << stats.loss_atr << "\n";
    for (const auto& name : model.params.names()) {
        const Tensor& p = model.params.at(name);
        double norm = 0.0, gnorm = 0.0;
        for (double x : p.data()) norm += x * x;
        if (p.has_grad())
            for (double g : p.grad()) gnorm += g * g;
        out << name << " |theta|=" << std::sqrt(norm) << " |grad|=" << std::sqrt(gnorm) << "\n";
    }
}

}  // namespace

StepStats joint_step(Model& model, const GeneratedCorpus& corpus,
                     const std::vector<const RegionSample*>& recog_batch,
                     const std::vector<const QASample*>& qa_batch,
                     const RunConfig& cfg, double alpha_ans, double alpha_obj, double alpha_atr,
                     AdamState& opt) {
    StepStats stats;
    stats.lr = lr_at(opt.step, cfg.lr);
    model.params.zero_grads();

    {
        Tape tape;
        Tensor total = Tensor::scalar(0.0);
        // a zero weight skips the task entirely, so its batch-norm
        // running moments stay untouched as well
        if (alpha_obj != 0.0 || alpha_atr != 0.0) {
            const RegionBatch batch = make_region_batch(
                std::span<const RegionSample* const>(recog_batch), corpus.ontology);
            if (alpha_obj != 0.0) {
                const Tensor l = object_loss(batch, corpus.vocab, corpus.ontology, model,
                                             cfg.eta_obj, NetMode::kTrain);
                stats.loss_obj = l.value();
                total = add(total, scale(l, alpha_obj));
            }
            if (alpha_atr != 0.0) {
                const Tensor l = attribute_loss(batch, corpus.vocab, corpus.ontology, model,
                                                NetMode::kTrain);
                stats.loss_atr = l.value();
                total = add(total, scale(l, alpha_atr));
            }
        }
        if (alpha_ans != 0.0) {
            const Tensor l = answer_loss(qa_batch, corpus, model, cfg.eta_ans, NetMode::kTrain);
            stats.loss_ans = l.value();
            total = add(total, scale(l, alpha_ans));
        }
        stats.loss_total = total.value();
        if (!std::isfinite(stats.loss_total)) {
            throw NumericError("joint_step: non-finite loss");
        }
        tape.backward(total);
    }

    adam_update(model, opt, stats.lr, cfg.weight_decay);
    return stats;
}

double recognition_top1(Model& model, const GeneratedCorpus& corpus,
                        const std::vector<RegionSample>& split, bool closed) {
    if (split.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& r : split) {
        const Tensor scores = object_scores(r.features, corpus.vocab, corpus.ontology, model,
                                            NetMode::kEval);
        std::size_t best = 0;
        for (std::size_t k = 1; k < scores.numel(); ++k)
            if (scores.at(k) > scores.at(best)) best = k;
        const WordId pred = corpus.ontology.objects[best];
        const auto truth = closed ? hypernym_closure(r.objects, corpus.ontology) : r.objects;
        for (WordId t : truth) {
            if (t == pred) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
}

double attribute_top1(Model& model, const GeneratedCorpus& corpus,
                      const std::vector<RegionSample>& split) {
    if (split.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& r : split) {
        const Tensor scores = attribute_scores(r.features, corpus.vocab, corpus.ontology, model,
                                               NetMode::kEval);
        std::size_t best = 0;
        for (std::size_t k = 1; k < scores.numel(); ++k)
            if (scores.at(k) > scores.at(best)) best = k;
        const WordId pred = corpus.ontology.attributes[best];
        for (WordId t : r.attributes) {
            if (t == pred) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
}

namespace {

double vqa_val_accuracy(Model& model, const GeneratedCorpus& corpus, bool zero_shot) {
    if (corpus.qa_val.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& qa : corpus.qa_val) {
        const std::size_t pred =
            zero_shot ? zero_shot_predict(qa, corpus, model) : predict(qa, corpus, model);
        if (pred == qa.correct) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(corpus.qa_val.size());
}

std::vector<const RegionSample*> draw_regions(const GeneratedCorpus& corpus, std::size_t m, Rng& rng) {
    std::vector<const RegionSample*> out;
    const auto idx = rng.sample_indices(corpus.recog_train.size(), m);
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(&corpus.recog_train[i]);
    return out;
}

std::vector<const QASample*> draw_questions(const GeneratedCorpus& corpus, std::size_t p, Rng& rng) {
    std::vector<const QASample*> out;
    const auto idx = rng.sample_indices(corpus.qa_train.size(), p);
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(&corpus.qa_train[i]);
    return out;
}

}  // namespace

RunArtifacts run_arm(const RunConfig& cfg, const GeneratedCorpus& corpus,
                     const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const bool zero_shot_eval = cfg.arm == Arm::kZeroShot;

    Model model = init_model(cfg.model, corpus.ontology, cfg.seed);
    AdamState opt = AdamState::init(model.params);
    Rng batch_rng = Rng(cfg.seed).fork(17);

    RunArtifacts artifacts;
    auto log_row = [&](std::size_t step, const StepStats& stats) {
        MetricRow row;
        row.step = step;
        row.lr = lr_at(step, cfg.lr);
        row.loss_total = stats.loss_total;
        row.loss_ans = stats.loss_ans;
        row.loss_obj = stats.loss_obj;
        row.loss_atr = stats.loss_atr;
        row.vqa_val_acc = vqa_val_accuracy(model, corpus, zero_shot_eval);
        row.obj_top1 = recognition_top1(model, corpus, corpus.recog_val);
        row.atr_acc = attribute_top1(model, corpus, corpus.recog_val);
        artifacts.metrics.push_back(row);
    };

    log_row(0, StepStats{});

    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        double a_ans = cfg.alpha_ans, a_obj = cfg.alpha_obj, a_atr = cfg.alpha_atr;
        if (step < cfg.pretrain_steps) {
            a_ans = 0.0;
            a_obj = 1.0;
            a_atr = 1.0;
        }
        // batches are drawn independently of the weights so a given seed
        // replays the same data order in every arm
        const auto regions = draw_regions(corpus, std::min(cfg.batch_regions, corpus.recog_train.size()),
                                          batch_rng);
        const auto questions = draw_questions(corpus, std::min(cfg.batch_questions, corpus.qa_train.size()),
                                              batch_rng);
        StepStats stats;
        try {
            stats = joint_step(model, corpus, regions, questions, cfg, a_ans, a_obj, a_atr, opt);
        } catch (const NumericError&) {
            dump_diagnostics(model, stats, out_dir / "diagnostic.txt");
            throw;
        }
        if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.total_steps) {
            log_row(step + 1, stats);
        }
    }

    artifacts.checkpoint = out_dir / "final.ckpt";
    save_checkpoint(model, artifacts.checkpoint);
    artifacts.metrics_csv = out_dir / "metrics.csv";
    write_metrics_csv(artifacts.metrics, artifacts.metrics_csv);
    artifacts.final_vqa_val_acc = artifacts.metrics.back().vqa_val_acc;
    artifacts.final_obj_top1 = artifacts.metrics.back().obj_top1;
    return artifacts;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "step,lr,loss_total,loss_ans,loss_obj,loss_atr,vqa_val_acc,obj_top1,atr_acc\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                      r.step, r.lr, r.loss_total, r.loss_ans, r.loss_obj, r.loss_atr,
                      r.vqa_val_acc, r.obj_top1, r.atr_acc);
        out << buf << "\n";
    }
}

RunConfig RunConfig::from_file(const std::filesystem::path& file) {
    KvFile kv = KvFile::load(file);
    const Arm arm = arm_from(kv.get_str("arm", "joint_svlr"));
    RunConfig cfg = RunConfig::defaults_for(arm);
    cfg.alpha_ans = kv.get_double("alpha_ans", cfg.alpha_ans);
    cfg.alpha_obj = kv.get_double("alpha_obj", cfg.alpha_obj);
    cfg.alpha_atr = kv.get_double("alpha_atr", cfg.alpha_atr);
    cfg.eta_ans = kv.get_double("eta_ans", cfg.eta_ans);
    cfg.eta_obj = kv.get_double("eta_obj", cfg.eta_obj);
    cfg.batch_regions = kv.get_size("batch_regions", cfg.batch_regions);
    cfg.batch_questions = kv.get_size("batch_questions", cfg.batch_questions);
    cfg.lr.init = kv.get_double("lr_init", cfg.lr.init);
    cfg.lr.decay = kv.get_double("lr_decay", cfg.lr.decay);
    cfg.total_steps = kv.get_size("total_steps", cfg.total_steps);
    // default keeps two decays per run regardless of budget
    cfg.lr.interval = kv.get_size("lr_interval", std::max<std::size_t>(1, cfg.total_steps / 4));
    cfg.weight_decay = kv.get_double("weight_decay", cfg.weight_decay);
    cfg.eval_interval = kv.get_size("eval_interval", cfg.eval_interval);
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.pretrain_steps = kv.get_size("pretrain_steps", cfg.pretrain_steps);
    cfg.model.word_dim = kv.get_size("word_dim", cfg.model.word_dim);
    cfg.model.region_dim = kv.get_size("region_dim", cfg.model.region_dim);
    cfg.model.hidden_dim = kv.get_size("hidden_dim", cfg.model.hidden_dim);
    cfg.model.embed_dim = kv.get_size("embed_dim", cfg.model.embed_dim);
    cfg.model.bimodal_dim = kv.get_size("bimodal_dim", cfg.model.bimodal_dim);
    kv.require_fully_consumed();
    return cfg;
}

void RunConfig::write_file(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "arm = " << arm_str(arm) << "\n";
    out << "alpha_ans = " << alpha_ans << "\n";
    out << "alpha_obj = " << alpha_obj << "\n";
    out << "alpha_atr = " << alpha_atr << "\n";
    out << "eta_ans = " << eta_ans << "\n";
    out << "eta_obj = " << eta_obj << "\n";
    out << "batch_regions = " << batch_regions << "\n";
    out << "batch_questions = " << batch_questions << "\n";
    out << "lr_init = " << lr.init << "\n";
    out << "lr_decay = " << lr.decay << "\n";
    out << "lr_interval = " << lr.interval << "\n";
    out << "weight_decay = " << weight_decay << "\n";
    out << "total_steps = " << total_steps << "\n";
    out << "eval_interval = " << eval_interval << "\n";
    out << "seed = " << seed << "\n";
    out << "pretrain_steps = " << pretrain_steps << "\n";
    out << "word_dim = " << model.word_dim << "\n";
    out << "region_dim = " << model.region_dim << "\n";
    out << "hidden_dim = " << model.hidden_dim << "\n";
    out << "embed_dim = " << model.embed_dim << "\n";
    out << "bimodal_dim = " << model.bimodal_dim << "\n";
}

}  // namespace svlr
