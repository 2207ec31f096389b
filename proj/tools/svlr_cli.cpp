#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "svlr/evalkit.hpp"
#include "svlr/gradcheck.hpp"
#include "svlr/recognition.hpp"
#include "svlr/synthworld.hpp"
#include "svlr/trainer.hpp"
#include "svlr/vqa.hpp"

namespace fs = std::filesystem;
using namespace svlr;

namespace {

int cmd_synth(const std::string& spec_file, const std::string& out_dir) {
    const WorldSpec spec = spec_file.empty() ? WorldSpec::defaults() : WorldSpec::from_file(spec_file);
    const GeneratedCorpus corpus = generate(spec);
    write_corpus(corpus, out_dir);
    spec.write_file(fs::path(out_dir) / "world.txt");
    std::cout << "wrote corpus to " << out_dir << ": " << corpus.vocab.size() << " words, "
              << corpus.recog_train.size() << " train regions, " << corpus.qa_train.size()
              << " train questions\n";
    return 0;
}

int cmd_train(const std::string& config_file, const std::string& corpus_dir,
              const std::string& out_dir) {
    const RunConfig cfg = RunConfig::from_file(config_file);
    const GeneratedCorpus corpus = read_corpus(corpus_dir);
    const RunArtifacts artifacts = run_arm(cfg, corpus, out_dir);
    std::cout << "arm " << arm_str(cfg.arm) << " finished: vqa_val_acc="
              << artifacts.final_vqa_val_acc << " obj_top1=" << artifacts.final_obj_top1 << "\n";
    std::cout << "checkpoint: " << artifacts.checkpoint.string() << "\n";
    std::cout << "metrics: " << artifacts.metrics_csv.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_file, const std::string& baseline_file,
             const std::string& corpus_dir, const std::string& report_dir,
             const std::string& split_name, std::size_t dump_limit) {
    const GeneratedCorpus corpus = read_corpus(corpus_dir);
    Model model = load_checkpoint(ckpt_file);
    fs::create_directories(report_dir);
    const auto& split = split_name == "val" ? corpus.qa_val : corpus.qa_test;

    const AccuracyReport acc = vqa_accuracy(model, corpus, split);
    write_accuracy_csv(acc, fs::path(report_dir) / "accuracy.csv");
    std::cout << "vqa " << split_name << " accuracy: " << acc.overall << " over " << acc.total
              << " samples\n";
    const double obj_raw = recognition_top1(model, corpus, corpus.recog_test, false);
    const double obj_closed = recognition_top1(model, corpus, corpus.recog_test, true);
    std::cout << "recognition test top-1: raw=" << obj_raw << " closed=" << obj_closed << "\n";

    if (!baseline_file.empty()) {
        Model baseline = load_checkpoint(baseline_file);
        const TransferGrid grid = transfer_grid(baseline, model, corpus, {10.0, 1e300}, {20.0, 1e300});
        write_transfer_grid_csv(grid, fs::path(report_dir) / "transfer_grid.csv");
        std::ofstream excl(fs::path(report_dir) / "transfer_grid_excluded.txt");
        for (WordId w : grid.excluded) excl << corpus.vocab.word(w) << "\n";
        std::cout << "transfer grid written (" << grid.excluded.size() << " classes excluded)\n";
    }

    // attention protocol: model maps against planted reference plus the
    // center-focused baseline, swept over center-correlation thresholds
    std::vector<Heatmap14> model_maps, ref_maps, center_maps;
    const Heatmap14 center = center_baseline();
    const fs::path dump_dir = fs::path(report_dir) / "attention";
    fs::create_directories(dump_dir);
    std::size_t dumped = 0;
    for (const auto& qa : split) {
        const AttentionMap map = attention_scores(qa, qa.correct, corpus, model);
        model_maps.push_back(to_heatmap14(map, corpus));
        ref_maps.push_back(rect_heatmap(corpus.region_by_id(qa.relevant_region).rect));
        center_maps.push_back(center);
        if (dumped < dump_limit) {
            write_attention_dump(qa, map, dump_dir / ("qa_" + std::to_string(qa.id) + ".csv"));
            ++dumped;
        }
    }
    std::vector<double> thresholds;
    for (int t = -10; t <= 10; ++t) thresholds.push_back(static_cast<double>(t) / 10.0);
    const auto sweep = threshold_sweep({model_maps, center_maps}, ref_maps, center, thresholds);
    write_sweep_csv(sweep, {"model", "center"}, fs::path(report_dir) / "attention_sweep.csv");
    double mean_model = 0.0, mean_center = 0.0;
    for (std::size_t i = 0; i < ref_maps.size(); ++i) {
        mean_model += spearman(model_maps[i], ref_maps[i]);
        mean_center += spearman(center_maps[i], ref_maps[i]);
    }
    std::cout << "attention correlation vs planted relevance: model="
              << mean_model / static_cast<double>(ref_maps.size())
              << " center=" << mean_center / static_cast<double>(ref_maps.size()) << "\n";
    return 0;
}

int cmd_zeroshot(const std::string& ckpt_file, const std::string& corpus_dir,
                 const std::string& report_dir) {
    const GeneratedCorpus corpus = read_corpus(corpus_dir);
    Model model = load_checkpoint(ckpt_file);
    const AccuracyReport val = vqa_accuracy(model, corpus, corpus.qa_val, true);
    const AccuracyReport test = vqa_accuracy(model, corpus, corpus.qa_test, true);
    const double chance = corpus.qa_val.empty()
        ? 0.0 : 1.0 / static_cast<double>(corpus.qa_val.front().options.size());
    std::cout << "zero-shot val accuracy: " << val.overall << " (chance " << chance << ")\n";
    std::cout << "zero-shot test accuracy: " << test.overall << "\n";
    if (!report_dir.empty()) {
        fs::create_directories(report_dir);
        write_accuracy_csv(val, fs::path(report_dir) / "zeroshot_val.csv");
        write_accuracy_csv(test, fs::path(report_dir) / "zeroshot_test.csv");
    }
    return 0;
}

int cmd_probe(const std::string& ckpt_file, const std::string& corpus_dir,
              const std::string& words_arg, std::size_t k, const std::string& report_dir) {
    const GeneratedCorpus corpus = read_corpus(corpus_dir);
    Model model = load_checkpoint(ckpt_file);
    std::vector<NeighborList> lists;
    std::string word;
    std::istringstream in(words_arg);
    while (std::getline(in, word, ',')) {
        if (word.empty()) continue;
        lists.push_back(nn_probe(model, corpus.vocab, corpus.vocab.id(word), k));
    }
    for (const auto& list : lists) {
        std::cout << corpus.vocab.word(list.query) << "\n  base:";
        for (const auto& [w, d] : list.base_space) std::cout << " " << corpus.vocab.word(w);
        std::cout << "\n  svlr:";
        for (const auto& [w, d] : list.svlr_space) std::cout << " " << corpus.vocab.word(w);
        std::cout << "\n";
    }
    if (!report_dir.empty()) {
        fs::create_directories(report_dir);
        write_neighbors_csv(lists, corpus.vocab, fs::path(report_dir) / "neighbors.csv");
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int rounds) {
    const auto reports = run_gradcheck_suite(seed, rounds);
    bool all_pass = true;
    for (const auto& r : reports) {
        std::printf("%-24s %s  max_rel_err=%.3e  coords=%zu\n", r.name.c_str(),
                    r.pass ? "ok" : "FAIL", r.max_rel_err, r.coords_checked);
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"svlr: joint vision-language representation trainer on a synthetic benchmark"};
    app.require_subcommand(1);

    std::string spec_file, corpus_dir, out_dir, config_file, ckpt_file, baseline_file;
    std::string report_dir, words_arg, split_name = "test";
    std::size_t k = 5, dump_limit = 50;
    std::uint64_t seed = 1;
    int rounds = 20;

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--spec", spec_file, "world spec file (defaults used when omitted)");
    synth->add_option("--out", out_dir, "output corpus directory")->required();

    auto* train = app.add_subcommand("train", "train one experimental arm");
    train->add_option("--config", config_file, "run config file")->required();
    train->add_option("--corpus", corpus_dir, "corpus directory")->required();
    train->add_option("--out", out_dir, "output directory for checkpoint and metrics")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and emit report CSVs");
    eval->add_option("--checkpoint", ckpt_file, "model checkpoint")->required();
    eval->add_option("--baseline", baseline_file, "baseline checkpoint for the transfer grid");
    eval->add_option("--corpus", corpus_dir, "corpus directory")->required();
    eval->add_option("--report", report_dir, "report output directory")->required();
    eval->add_option("--split", split_name, "qa split to evaluate (val|test)");
    eval->add_option("--dump-attention", dump_limit, "number of per-sample attention dumps");

    auto* zeroshot = app.add_subcommand("zeroshot", "recognition-only scoring of the qa splits");
    zeroshot->add_option("--checkpoint", ckpt_file, "model checkpoint")->required();
    zeroshot->add_option("--corpus", corpus_dir, "corpus directory")->required();
    zeroshot->add_option("--report", report_dir, "optional report directory");

    auto* probe = app.add_subcommand("probe", "nearest-neighbor probe of the word spaces");
    probe->add_option("--checkpoint", ckpt_file, "model checkpoint")->required();
    probe->add_option("--corpus", corpus_dir, "corpus directory")->required();
    probe->add_option("--words", words_arg, "comma-separated query words")->required();
    probe->add_option("--k", k, "neighbors per query");
    probe->add_option("--report", report_dir, "optional report directory");

    auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
    gradcheck->add_option("--seed", seed, "suite seed");
    gradcheck->add_option("--rounds", rounds, "random draws per check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(spec_file, out_dir);
        if (train->parsed()) return cmd_train(config_file, corpus_dir, out_dir);
        if (eval->parsed()) {
            if (split_name != "val" && split_name != "test") {
                std::cerr << "error: --split must be val or test\n";
                return 2;
            }
            return cmd_eval(ckpt_file, baseline_file, corpus_dir, report_dir, split_name, dump_limit);
        }
        if (zeroshot->parsed()) return cmd_zeroshot(ckpt_file, corpus_dir, report_dir);
        if (probe->parsed()) return cmd_probe(ckpt_file, corpus_dir, words_arg, k, report_dir);
        if (gradcheck->parsed()) return cmd_gradcheck(seed, rounds);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
