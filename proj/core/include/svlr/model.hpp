#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "svlr/ontology.hpp"
#include "svlr/ops.hpp"
#include "svlr/rng.hpp"
#include "svlr/tensor.hpp"
#include "svlr/vocab.hpp"

namespace svlr {

// Joint SVLR shares the word network with recognition; the multitask
// baseline swaps recognition's class embeddings for free vectors h_y.
enum class ShareMode { kSvlr, kMultitask };

std::string share_mode_str(ShareMode m);
ShareMode share_mode_from(const std::string& s);

enum class Head { kObject, kAttribute };

struct ModelConfig {
    std::size_t word_dim = 16;
    std::size_t region_dim = 24;
    std::size_t hidden_dim = 24;   // first layer of the region networks
    std::size_t embed_dim = 8;     // shared embedding space
    std::size_t bimodal_dim = 40;  // joint question/image space
    ShareMode mode = ShareMode::kSvlr;

    std::size_t image_feature_dim(const Ontology& ont) const {
        return ont.objects.size() + ont.attributes.size();
    }
    std::size_t qa_feature_dim() const { return 5 * embed_dim; }  // 4 bins + answer

    // Dimensions used in the original setting: word vectors 300, region
    // hidden layer 2048, embeddings 300, bimodal space 2500.
    static ModelConfig paper_scale();
    // Small dimensions for the synthetic benchmark.
    static ModelConfig toy();
};

// Named trainable tensors plus batch-norm running state, grouped by
// sub-network prefix ("g.", "fo.", "fa.", "vqa.", "cls."). Insertion
// order is the iteration order everywhere, so runs replay exactly.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    BatchNormState& bn_state(const std::string& name);
    const BatchNormState& bn_state(const std::string& name) const;
    void add_bn_state(const std::string& name, std::size_t dim);

    const std::vector<std::string>& names() const { return order_; }
    const std::vector<std::string>& bn_names() const { return bn_order_; }

    void zero_grads();
    std::size_t total_parameters() const;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> params_;
    std::vector<std::string> bn_order_;
    std::unordered_map<std::string, BatchNormState> bn_;
};

struct Model {
    ModelConfig config;
    ParamStore params;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Builds every parameter of the model: word network g, region networks
// f_o / f_a, the triplet scorer, and (for the multitask baseline) the
// fixed per-category class vectors.
Model init_model(const ModelConfig& config, const Ontology& ont, std::uint64_t seed);

// g(w): two affine layers over the frozen base vector, ReLU after the
// first layer only, no batch norm. Rows of the result follow `ids`.
Tensor embed_words(const std::vector<WordId>& ids, const Vocabulary& vocab, Model& model);
Tensor embed_word(WordId id, const Vocabulary& vocab, Model& model);

// f_o / f_a: affine + batch norm + ReLU, twice. The heads share nothing.
Tensor embed_regions(const Tensor& features, Head head, Model& model, NetMode mode);
Tensor embed_region(const std::vector<double>& features, Head head, Model& model, NetMode mode);

// Class vectors for recognition scoring: g(y) under SVLR sharing, the
// free vectors h_y under the multitask baseline. `ids` must lie in O u T.
Tensor class_vectors(const std::vector<WordId>& ids, const Vocabulary& vocab,
                     const Ontology& ont, Model& model);

// Versioned binary checkpoint: every named parameter blob with its shape
// plus batch-norm running moments and the sharing mode flag.
void save_checkpoint(const Model& model, const std::filesystem::path& file);
Model load_checkpoint(const std::filesystem::path& file);

}  // namespace svlr
