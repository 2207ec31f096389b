#pragma once

#include <span>
#include <string>
#include <vector>

#include "svlr/corpus.hpp"
#include "svlr/model.hpp"

namespace svlr {

// Training view of a set of regions: stacked base features plus
// hypernym-closed object label sets and raw attribute sets.
struct RegionBatch {
    Tensor features;                              // [M x region_dim], frozen
    std::vector<std::vector<WordId>> object_labels;     // closed sets H_j
    std::vector<std::vector<WordId>> attribute_labels;  // sets T_j

    std::size_t size() const { return object_labels.size(); }
};

// Applies the hypernym closure to every region's object labels.
RegionBatch make_region_batch(std::span<const RegionSample* const> regions, const Ontology& ont);
RegionBatch make_region_batch(const std::vector<RegionSample>& regions, const Ontology& ont);

// Inner-product category scores for one region: s_o[k] = <f_o(R), c_k>
// over all of O (object head) or T (attribute head).
Tensor category_scores(const Tensor& embedded, Head head, const Vocabulary& vocab,
                       const Ontology& ont, Model& model);
Tensor object_scores(const std::vector<double>& region_features, const Vocabulary& vocab,
                     const Ontology& ont, Model& model, NetMode mode);
Tensor attribute_scores(const std::vector<double>& region_features, const Vocabulary& vocab,
                        const Ontology& ont, Model& model, NetMode mode);

// Margin ranking loss over object categories: every label in H_j (and
// hence its hypernyms) must outscore every non-label by the margin. The
// inner normalizer is 1/|O| even though the sum has |O \ H_j| terms.
Tensor object_loss(const RegionBatch& batch, const Vocabulary& vocab, const Ontology& ont,
                   Model& model, double margin, NetMode mode);

// Per-attribute weighted binary cross-entropy, positives weighted by
// (1 - gamma_t) and negatives by gamma_t where gamma_t is the fraction
// of batch regions carrying attribute t. Minimized, so the printed
// log-likelihood sum enters negated.
Tensor attribute_loss(const RegionBatch& batch, const Vocabulary& vocab, const Ontology& ont,
                      Model& model, NetMode mode);

// Open-vocabulary classification: scores a region against an arbitrary
// word list, sorted by descending score, ties by ascending word id.
std::vector<std::pair<WordId, double>> classify_region(const std::vector<double>& region_features,
                                                       const std::vector<WordId>& label_set,
                                                       const Vocabulary& vocab, Model& model,
                                                       Head head = Head::kObject);

}  // namespace svlr
