#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svlr/corpus.hpp"
#include "svlr/model.hpp"
#include "svlr/vqa.hpp"

namespace svlr {

inline constexpr std::size_t kHeatmapSide = 14;
inline constexpr std::size_t kHeatmapCells = kHeatmapSide * kHeatmapSide;

// Sum-normalized nonnegative 14x14 grid, row-major.
using Heatmap14 = std::array<double, kHeatmapCells>;

struct AccuracyReport {
    double overall = 0.0;
    std::size_t total = 0;
    std::map<std::string, double> by_template;
    std::map<std::string, std::size_t> counts;
};

// Fraction of samples whose predicted option index equals the labelled
// one, overall and per question template.
AccuracyReport vqa_accuracy(Model& model, const GeneratedCorpus& corpus,
                            const std::vector<QASample>& split, bool zero_shot = false);

struct TransferCell {
    double baseline_acc = 0.0;   // mean per-class accuracy of the baseline
    double delta = 0.0;          // mean per-class accuracy change
    std::size_t class_count = 0;
};

struct TransferGrid {
    std::vector<double> qa_bin_edges;     // row bin upper bounds, last is +inf
    std::vector<double> recog_bin_edges;  // column bin upper bounds
    std::vector<std::vector<TransferCell>> cells;  // [row][col]
    std::vector<WordId> excluded;         // classes absent from the test split
};

// Per-class top-1 accuracy difference between two checkpoints on the
// recognition test split, aggregated into train-frequency cells.
TransferGrid transfer_grid(Model& baseline, Model& contender, const GeneratedCorpus& corpus,
                           const std::vector<double>& qa_bin_edges,
                           const std::vector<double>& recog_bin_edges);

// Spreads each region's weight uniformly over its mask cells, sums
// overlaps, renormalizes to total 1.
Heatmap14 to_heatmap14(const AttentionMap& map, const GeneratedCorpus& corpus);
Heatmap14 rect_heatmap(const GridRect& rect);

// Rank correlation with mid-rank ties. Zero-variance input raises
// ContractError (the correlation is undefined).
double spearman(const Heatmap14& a, const Heatmap14& b);

// Isotropic Gaussian at the grid center; sigma in cell units.
Heatmap14 center_baseline(double sigma = 3.5);

struct SweepRow {
    double threshold = 0.0;
    std::size_t subset_size = 0;
    std::vector<std::optional<double>> mean_correlation;  // one entry per model
};

// For each threshold, restricts to samples whose reference map correlates
// with the center map at most that much, then reports each model's mean
// correlation with the reference on that subset. Empty subsets stay absent.
std::vector<SweepRow> threshold_sweep(const std::vector<std::vector<Heatmap14>>& model_maps,
                                      const std::vector<Heatmap14>& reference_maps,
                                      const Heatmap14& center_map,
                                      const std::vector<double>& thresholds);

struct NeighborList {
    WordId query = 0;
    std::vector<std::pair<WordId, double>> base_space;  // (word, cosine distance)
    std::vector<std::pair<WordId, double>> svlr_space;
};

// Nearest neighbors under cosine distance after mean-centering each
// embedding space over the whole vocabulary; the query is excluded.
NeighborList nn_probe(Model& model, const Vocabulary& vocab, WordId query, std::size_t k);

// CSV emitters for the plot data.
void write_accuracy_csv(const AccuracyReport& report, const std::filesystem::path& file);
void write_transfer_grid_csv(const TransferGrid& grid, const std::filesystem::path& file);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& model_names,
                     const std::filesystem::path& file);
void write_neighbors_csv(const std::vector<NeighborList>& lists, const Vocabulary& vocab,
                         const std::filesystem::path& file);

}  // namespace svlr
