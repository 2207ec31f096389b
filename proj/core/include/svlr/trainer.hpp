#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "svlr/corpus.hpp"
#include "svlr/model.hpp"
#include "svlr/synthworld.hpp"

namespace svlr {

enum class Arm { kVqaOnly, kGenomeOnly, kJointMultitask, kJointSvlr, kZeroShot };

std::string arm_str(Arm a);
Arm arm_from(const std::string& s);

struct LrSchedule {
    double init = 1e-3;
    double decay = 0.5;
    std::size_t interval = 24000;  // steps per decay
};

// init * decay^floor(step / interval)
double lr_at(std::size_t step, const LrSchedule& schedule);

struct RunConfig {
    Arm arm = Arm::kJointSvlr;
    double alpha_ans = 1.0;
    double alpha_obj = 0.1;
    double alpha_atr = 0.1;
    double eta_ans = 1.0;
    double eta_obj = 1.0;
    std::size_t batch_regions = 200;    // M
    std::size_t batch_questions = 50;   // P
    LrSchedule lr;
    double weight_decay = 1e-5;
    std::size_t total_steps = 600;
    std::size_t eval_interval = 100;
    std::uint64_t seed = 1;
    std::size_t pretrain_steps = 0;     // recognition-only steps before the arm's loss mix
    ModelConfig model;

    // The loss mix each arm uses; single-task arms zero the other
    // weights, joint arms keep the side task at 0.1.
    static RunConfig defaults_for(Arm arm);
    static RunConfig from_file(const std::filesystem::path& file);
    void write_file(const std::filesystem::path& file) const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::unordered_map<std::string, std::vector<double>> m;
    std::unordered_map<std::string, std::vector<double>> v;

    static AdamState init(const ParamStore& params);
};

struct StepStats {
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_ans = 0.0;
    double loss_obj = 0.0;
    double loss_atr = 0.0;
};

// One optimization step of the weighted joint objective: forward the
// active losses, one backward pass, weight decay added to the gradients,
// Adam update at the scheduled rate.
StepStats joint_step(Model& model, const GeneratedCorpus& corpus,
                     const std::vector<const RegionSample*>& recog_batch,
                     const std::vector<const QASample*>& qa_batch,
                     const RunConfig& cfg, double alpha_ans, double alpha_obj, double alpha_atr,
                     AdamState& opt);

struct MetricRow {
    std::size_t step = 0;
    double lr = 0.0;
    double loss_total = 0.0, loss_ans = 0.0, loss_obj = 0.0, loss_atr = 0.0;
    double vqa_val_acc = 0.0;
    double obj_top1 = 0.0;
    double atr_acc = 0.0;
};

struct RunArtifacts {
    std::filesystem::path checkpoint;
    std::filesystem::path metrics_csv;
    std::vector<MetricRow> metrics;
    double final_vqa_val_acc = 0.0;
    double final_obj_top1 = 0.0;
};

// Trains one experimental arm to completion, logging metrics every
// eval_interval steps (step 0 carries the initial evaluation) and
// writing the final checkpoint. Deterministic given config and corpus.
RunArtifacts run_arm(const RunConfig& cfg, const GeneratedCorpus& corpus,
                     const std::filesystem::path& out_dir);

// Eval helpers shared by run_arm and the report tooling.
double recognition_top1(Model& model, const GeneratedCorpus& corpus,
                        const std::vector<RegionSample>& split, bool closed = false);
double attribute_top1(Model& model, const GeneratedCorpus& corpus,
                      const std::vector<RegionSample>& split);

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& file);

}  // namespace svlr
