#include "svlr/recognition.hpp"

#include <algorithm>

namespace svlr {

RegionBatch make_region_batch(std::span<const RegionSample* const> regions, const Ontology& ont) {
    if (regions.empty()) throw ContractError("region batch must not be empty");
    RegionBatch batch;
    std::vector<std::vector<double>> rows;
    rows.reserve(regions.size());
    for (const RegionSample* r : regions) {
        rows.push_back(r->features);
        batch.object_labels.push_back(hypernym_closure(r->objects, ont));
        auto attrs = r->attributes;
        std::sort(attrs.begin(), attrs.end());
        attrs.erase(std::unique(attrs.begin(), attrs.end()), attrs.end());
        batch.attribute_labels.push_back(std::move(attrs));
    }
    batch.features = Tensor::from_rows(rows);
    return batch;
}

RegionBatch make_region_batch(const std::vector<RegionSample>& regions, const Ontology& ont) {
    std::vector<const RegionSample*> ptrs;
    ptrs.reserve(regions.size());
    for (const auto& r : regions) ptrs.push_back(&r);
    return make_region_batch(std::span<const RegionSample* const>(ptrs), ont);
}

Tensor category_scores(const Tensor& embedded, Head head, const Vocabulary& vocab,
                       const Ontology& ont, Model& model) {
    const auto& cats = head == Head::kObject ? ont.objects : ont.attributes;
    const Tensor vecs = class_vectors(cats, vocab, ont, model);  // [C x d_e]
    return matmul(embedded, transpose(vecs));                    // [M x C]
}

Tensor object_scores(const std::vector<double>& region_features, const Vocabulary& vocab,
                     const Ontology& ont, Model& model, NetMode mode) {
    const Tensor feats = Tensor::from({1, region_features.size()}, region_features);
    const Tensor emb = embed_regions(feats, Head::kObject, model, mode);
    return row(category_scores(emb, Head::kObject, vocab, ont, model), 0);
}

Tensor attribute_scores(const std::vector<double>& region_features, const Vocabulary& vocab,
                        const Ontology& ont, Model& model, NetMode mode) {
    const Tensor feats = Tensor::from({1, region_features.size()}, region_features);
    const Tensor emb = embed_regions(feats, Head::kAttribute, model, mode);
    return row(category_scores(emb, Head::kAttribute, vocab, ont, model), 0);
}

Tensor object_loss(const RegionBatch& batch, const Vocabulary& vocab, const Ontology& ont,
                   Model& model, double margin, NetMode mode) {
    const std::size_t m = batch.size();
    const std::size_t n_obj = ont.objects.size();
    for (const auto& labels : batch.object_labels) {
        if (labels.empty()) throw ContractError("object_loss: empty label set");
    }

    const Tensor emb = embed_regions(batch.features, Head::kObject, model, mode);
    const Tensor scores = category_scores(emb, Head::kObject, vocab, ont, model);  // [M x |O|]

    Tensor total = Tensor::scalar(0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const auto& labels = batch.object_labels[j];
        // 0/1 mask over O \ H_j, fixed w.r.t. parameters
        std::vector<double> mask(n_obj, 1.0);
        for (WordId l : labels) mask[ont.object_index(l)] = 0.0;
        const Tensor mask_t = Tensor::from({n_obj}, mask);

        const Tensor s_j = row(scores, j);
        Tensor region_sum = Tensor::scalar(0.0);
        for (WordId l : labels) {
            const Tensor s_l = element(s_j, ont.object_index(l));
            // max{0, margin + s_k - s_l} for every k, masked to O \ H_j
            const Tensor hinges = relu(add_const(add_scalar(s_j, scale(s_l, -1.0)), margin));
            region_sum = add(region_sum, sum(mul(hinges, mask_t)));
        }
        const double norm = 1.0 / (static_cast<double>(labels.size()) * static_cast<double>(n_obj));
        total = add(total, scale(region_sum, norm));
    }
    return scale(total, 1.0 / static_cast<double>(m));
}

Tensor attribute_loss(const RegionBatch& batch, const Vocabulary& vocab, const Ontology& ont,
                      Model& model, NetMode mode) {
    const std::size_t m = batch.size();
    if (m == 0) throw ContractError("attribute_loss: empty batch");
    const std::size_t n_attr = ont.attributes.size();

    // gamma_t: fraction of batch regions positive for attribute t
    std::vector<double> gamma(n_attr, 0.0);
    std::vector<double> positive(m * n_attr, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        for (WordId t : batch.attribute_labels[j]) {
            const std::size_t k = ont.attribute_index(t);
            positive[j * n_attr + k] = 1.0;
            gamma[k] += 1.0;
        }
    }
    for (auto& g : gamma) g /= static_cast<double>(m);

    std::vector<double> w_pos(m * n_attr), w_neg(m * n_attr);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < n_attr; ++k) {
            const bool pos = positive[j * n_attr + k] > 0.5;
            w_pos[j * n_attr + k] = pos ? (1.0 - gamma[k]) : 0.0;
            w_neg[j * n_attr + k] = pos ? 0.0 : gamma[k];
        }
    }

    const Tensor emb = embed_regions(batch.features, Head::kAttribute, model, mode);
    const Tensor scores = category_scores(emb, Head::kAttribute, vocab, ont, model);  // [M x |T|]

    // log sigma(s) for positives, log(1 - sigma(s)) = log sigma(-s) for negatives
    const Tensor pos_term = mul(Tensor::from({m, n_attr}, w_pos), log_sigmoid(scores));
    const Tensor neg_term = mul(Tensor::from({m, n_attr}, w_neg), log_sigmoid(scale(scores, -1.0)));
    return scale(sum(add(pos_term, neg_term)), -1.0 / static_cast<double>(m));
}

std::vector<std::pair<WordId, double>> classify_region(const std::vector<double>& region_features,
                                                       const std::vector<WordId>& label_set,
                                                       const Vocabulary& vocab, Model& model,
                                                       Head head) {
    if (label_set.empty()) throw ContractError("classify_region: empty label set");
    const Tensor feats = Tensor::from({1, region_features.size()}, region_features);
    const Tensor emb = embed_regions(feats, head, model, NetMode::kEval);
    const Tensor words = embed_words(label_set, vocab, model);   // open vocabulary: any word
    const Tensor scores = row(matmul(emb, transpose(words)), 0);

    std::vector<std::pair<WordId, double>> ranked;
    ranked.reserve(label_set.size());
    for (std::size_t i = 0; i < label_set.size(); ++i) ranked.emplace_back(label_set[i], scores.at(i));
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return ranked;
}

}  // namespace svlr
