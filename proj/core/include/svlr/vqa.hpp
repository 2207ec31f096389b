#pragma once

#include <filesystem>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svlr/corpus.hpp"
#include "svlr/model.hpp"

namespace svlr {

// Nouns and adjectives mentioned by a question/answer pair, in first-
// mention order with duplicates removed.
struct Mentions {
    std::vector<WordId> nouns;
    std::vector<WordId> adjectives;
};

// Question tokens plus the words of one candidate option. Question
// tokens carry their own part-of-speech tags; option words fall back to
// the vocabulary tag.
Mentions extract_mentions(const QASample& qa, std::size_t option, const Vocabulary& vocab);
Mentions question_mentions(const QASample& qa);
Mentions word_list_mentions(const std::vector<WordId>& words, const Vocabulary& vocab);

// Per-token bins, replacing untagged (bin 0) entries with the positional
// rule: leading pre-noun tokens -> 1, first noun -> 2, later nouns -> 3,
// everything after the first noun -> 4.
std::vector<int> effective_bins(const QASample& qa);

struct AttentionMap {
    std::vector<RegionId> regions;
    std::vector<double> raw;      // unnormalized region scores
    std::vector<double> weights;  // softmax-normalized, sum 1
};

// Raw score per region: max noun inner product against f_o plus max
// adjective inner product against f_a; an empty mention set contributes 0.
Tensor attention_raw(const Tensor& fo, const Tensor& fa,
                     const std::optional<Tensor>& noun_vecs,
                     const std::optional<Tensor>& adj_vecs);

// Shared per-sample forward state: region embeddings, category score
// matrices, and embeddings for every word any option can mention.
struct SampleContext {
    const QASample* qa = nullptr;
    const Vocabulary* vocab = nullptr;
    Tensor fo, fa;      // [R x d_e]
    Tensor s_obj;       // [R x |O|]
    Tensor s_atr;       // [R x |T|]
    std::vector<WordId> words;
    std::unordered_map<WordId, std::size_t> word_pos;
    Tensor word_emb;    // [U x d_e]
    Tensor question_rep;  // built lazily, shared across options
};

SampleContext make_sample_context(const QASample& qa, const GeneratedCorpus& corpus,
                                  Model& model, NetMode mode);

// Batched variant: the regions of every sample share one embedding pass,
// so train-mode batch norm sees the whole step's regions at once.
std::vector<SampleContext> make_sample_contexts(const std::vector<const QASample*>& batch,
                                                const GeneratedCorpus& corpus, Model& model,
                                                NetMode mode);

// Attention weights for one option (softmax over the sample's regions).
Tensor attention_weights(SampleContext& ctx, std::size_t option);
AttentionMap attention_scores(const QASample& qa, std::size_t option,
                              const GeneratedCorpus& corpus, Model& model);

// Attention-weighted average of the concatenated object and attribute
// score vectors across regions.
Tensor image_representation(const SampleContext& ctx, const Tensor& attn);

// Four per-bin means of word embeddings, concatenated in bin order;
// empty bins contribute zero blocks.
Tensor question_representation(SampleContext& ctx);

// Mean word embedding of the option's words.
Tensor answer_representation(SampleContext& ctx, std::size_t option);

// Scores for a batch of (sample, option) triplets; train mode batch-
// normalizes across the whole batch, eval mode uses running moments.
Tensor score_triplets(std::vector<SampleContext>& contexts,
                      const std::vector<std::pair<std::size_t, std::size_t>>& triplets,
                      Model& model, NetMode mode);
double score_triplet(const QASample& qa, std::size_t option, const GeneratedCorpus& corpus,
                     Model& model);

// Margin ranking loss over answer options, averaged over the N negatives
// of each of the P batch samples.
Tensor answer_loss(const std::vector<const QASample*>& batch, const GeneratedCorpus& corpus,
                   Model& model, double margin, NetMode mode);

// Eval-mode argmax over option scores; ties take the lowest index.
std::size_t predict(const QASample& qa, const GeneratedCorpus& corpus, Model& model);

// Recognition-only proxy score: attention from the full mention set
// gates the min of question-side and answer-side localization evidence.
double zero_shot_score(const QASample& qa, std::size_t option, const GeneratedCorpus& corpus,
                       Model& model);
std::size_t zero_shot_predict(const QASample& qa, const GeneratedCorpus& corpus, Model& model);

// One line per region: id, raw score, normalized weight.
void write_attention_dump(const QASample& qa, const AttentionMap& map,
                          const std::filesystem::path& file);

}  // namespace svlr
