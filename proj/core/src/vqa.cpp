#include "svlr/vqa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "svlr/recognition.hpp"

namespace svlr {

namespace {

void append_unique(std::vector<WordId>& out, WordId w) {
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
}

}  // namespace

Mentions extract_mentions(const QASample& qa, std::size_t option, const Vocabulary& vocab) {
    if (option >= qa.options.size()) throw ContractError("extract_mentions: option out of range");
    Mentions m;
    for (const auto& tok : qa.tokens) {
        if (tok.pos == Pos::kNoun) append_unique(m.nouns, tok.word);
        if (tok.pos == Pos::kAdj) append_unique(m.adjectives, tok.word);
    }
    for (WordId w : qa.options[option]) {
        if (vocab.pos(w) == Pos::kNoun) append_unique(m.nouns, w);
        if (vocab.pos(w) == Pos::kAdj) append_unique(m.adjectives, w);
    }
    return m;
}

Mentions question_mentions(const QASample& qa) {
    Mentions m;
    for (const auto& tok : qa.tokens) {
        if (tok.pos == Pos::kNoun) append_unique(m.nouns, tok.word);
        if (tok.pos == Pos::kAdj) append_unique(m.adjectives, tok.word);
    }
    return m;
}

Mentions word_list_mentions(const std::vector<WordId>& words, const Vocabulary& vocab) {
    Mentions m;
    for (WordId w : words) {
        if (vocab.pos(w) == Pos::kNoun) append_unique(m.nouns, w);
        if (vocab.pos(w) == Pos::kAdj) append_unique(m.adjectives, w);
    }
    return m;
}

std::vector<int> effective_bins(const QASample& qa) {
    std::vector<int> bins(qa.tokens.size());
    bool saw_noun = false;
    for (std::size_t i = 0; i < qa.tokens.size(); ++i) {
        const auto& tok = qa.tokens[i];
        if (tok.bin >= 1 && tok.bin <= 4) {
            bins[i] = tok.bin;
            if (tok.pos == Pos::kNoun) saw_noun = true;
            continue;
        }
        if (tok.pos == Pos::kNoun) {
            bins[i] = saw_noun ? 3 : 2;
            saw_noun = true;
        } else {
            bins[i] = saw_noun ? 4 : 1;
        }
    }
    return bins;
}

Tensor attention_raw(const Tensor& fo, const Tensor& fa,
                     const std::optional<Tensor>& noun_vecs,
                     const std::optional<Tensor>& adj_vecs) {
    const std::size_t r = fo.rows();
    Tensor noun_part = noun_vecs ? rowwise_max(matmul(fo, transpose(*noun_vecs)))
                                 : Tensor::zeros({r});
    Tensor adj_part = adj_vecs ? rowwise_max(matmul(fa, transpose(*adj_vecs)))
                               : Tensor::zeros({r});
    return add(noun_part, adj_part);
}

std::vector<SampleContext> make_sample_contexts(const std::vector<const QASample*>& batch,
                                                const GeneratedCorpus& corpus, Model& model,
                                                NetMode mode) {
    if (batch.empty()) throw ContractError("empty sample batch");
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> offsets;
    std::vector<WordId> words;
    for (const QASample* qa : batch) {
        if (qa->region_ids.empty()) throw ContractError("sample has no regions");
        offsets.push_back(rows.size());
        for (RegionId rid : qa->region_ids) rows.push_back(corpus.region_by_id(rid).features);
        for (const auto& tok : qa->tokens) append_unique(words, tok.word);
        for (const auto& opt : qa->options)
            for (WordId w : opt) append_unique(words, w);
    }

    const Tensor feats = Tensor::from_rows(rows);
    const Tensor fo_all = embed_regions(feats, Head::kObject, model, mode);
    const Tensor fa_all = embed_regions(feats, Head::kAttribute, model, mode);
    const Tensor s_obj_all = category_scores(fo_all, Head::kObject, corpus.vocab, corpus.ontology, model);
    const Tensor s_atr_all = category_scores(fa_all, Head::kAttribute, corpus.vocab, corpus.ontology, model);
    const Tensor word_emb = embed_words(words, corpus.vocab, model);
    std::unordered_map<WordId, std::size_t> word_pos;
    for (std::size_t i = 0; i < words.size(); ++i) word_pos[words[i]] = i;

    std::vector<SampleContext> contexts;
    contexts.reserve(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        SampleContext ctx;
        ctx.qa = batch[s];
        ctx.vocab = &corpus.vocab;
        const std::size_t n = batch[s]->region_ids.size();
        ctx.fo = slice_rows(fo_all, offsets[s], n);
        ctx.fa = slice_rows(fa_all, offsets[s], n);
        ctx.s_obj = slice_rows(s_obj_all, offsets[s], n);
        ctx.s_atr = slice_rows(s_atr_all, offsets[s], n);
        ctx.words = words;
        ctx.word_pos = word_pos;
        ctx.word_emb = word_emb;
        contexts.push_back(std::move(ctx));
    }
    return contexts;
}

SampleContext make_sample_context(const QASample& qa, const GeneratedCorpus& corpus,
                                  Model& model, NetMode mode) {
    return std::move(make_sample_contexts({&qa}, corpus, model, mode).front());
}

namespace {

std::optional<Tensor> mention_matrix(const SampleContext& ctx, const std::vector<WordId>& words) {
    if (words.empty()) return std::nullopt;
    std::vector<Tensor> rows;
    rows.reserve(words.size());
    for (WordId w : words) rows.push_back(row(ctx.word_emb, ctx.word_pos.at(w)));
    return stack_rows(rows);
}

}  // namespace

Tensor attention_weights(SampleContext& ctx, std::size_t option) {
    const Mentions m = extract_mentions(*ctx.qa, option, *ctx.vocab);
    const Tensor raw = attention_raw(ctx.fo, ctx.fa, mention_matrix(ctx, m.nouns),
                                     mention_matrix(ctx, m.adjectives));
    return softmax(raw);
}

AttentionMap attention_scores(const QASample& qa, std::size_t option,
                              const GeneratedCorpus& corpus, Model& model) {
    SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);
    const Mentions m = extract_mentions(qa, option, corpus.vocab);
    const Tensor raw = attention_raw(ctx.fo, ctx.fa, mention_matrix(ctx, m.nouns),
                                     mention_matrix(ctx, m.adjectives));
    const Tensor w = softmax(raw);
    AttentionMap map;
    map.regions = qa.region_ids;
    map.raw = raw.data();
    map.weights = w.data();
    return map;
}

Tensor image_representation(const SampleContext& ctx, const Tensor& attn) {
    if (attn.numel() != ctx.fo.rows()) {
        throw DimError("image_representation: attention does not cover the regions");
    }
    return concat({matvec(transpose(ctx.s_obj), attn), matvec(transpose(ctx.s_atr), attn)});
}

Tensor question_representation(SampleContext& ctx) {
    if (ctx.question_rep.defined()) return ctx.question_rep;
    const QASample& qa = *ctx.qa;
    const std::vector<int> bins = effective_bins(qa);
    const std::size_t u = ctx.words.size();

    std::vector<Tensor> parts;
    parts.reserve(4);
    const Tensor emb_t = transpose(ctx.word_emb);  // [d_e x U]
    for (int b = 1; b <= 4; ++b) {
        std::vector<double> weights(u, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < qa.tokens.size(); ++i) {
            if (bins[i] == b) {
                weights[ctx.word_pos.at(qa.tokens[i].word)] += 1.0;
                ++count;
            }
        }
        if (count == 0) {
            parts.push_back(Tensor::zeros({ctx.word_emb.cols()}));
            continue;
        }
        for (auto& w : weights) w /= static_cast<double>(count);
        parts.push_back(matvec(emb_t, Tensor::from({u}, weights)));
    }
    ctx.question_rep = concat(parts);
    return ctx.question_rep;
}

Tensor answer_representation(SampleContext& ctx, std::size_t option) {
    const auto& words = ctx.qa->options.at(option);
    if (words.empty()) throw ContractError("answer_representation: empty option");
    std::vector<double> weights(ctx.words.size(), 0.0);
    for (WordId w : words) weights[ctx.word_pos.at(w)] += 1.0 / static_cast<double>(words.size());
    return matvec(transpose(ctx.word_emb), Tensor::from({ctx.words.size()}, weights));
}

Tensor score_triplets(std::vector<SampleContext>& contexts,
                      const std::vector<std::pair<std::size_t, std::size_t>>& triplets,
                      Model& model, NetMode mode) {
    if (triplets.empty()) throw ContractError("score_triplets: empty batch");
    ParamStore& p = model.params;
    std::vector<Tensor> img_rows, qa_rows;
    img_rows.reserve(triplets.size());
    qa_rows.reserve(triplets.size());
    for (const auto& [ci, option] : triplets) {
        SampleContext& ctx = contexts.at(ci);
        const Tensor attn = attention_weights(ctx, option);
        img_rows.push_back(image_representation(ctx, attn));
        qa_rows.push_back(concat({question_representation(ctx), answer_representation(ctx, option)}));
    }
    const Tensor img = stack_rows(img_rows);
    const Tensor qa = stack_rows(qa_rows);
    const Tensor b1 = batch_norm(matmul(img, p.at("vqa.w1")), p.at("vqa.bn1.scale"),
                                 p.at("vqa.bn1.offset"), p.bn_state("vqa.bn1"), mode);
    const Tensor b2 = batch_norm(matmul(qa, p.at("vqa.w2")), p.at("vqa.bn2.scale"),
                                 p.at("vqa.bn2.offset"), p.bn_state("vqa.bn2"), mode);
    const Tensor bimodal = relu(add(b1, b2));
    const Tensor scores = matmul(bimodal, p.at("vqa.w3"));  // [n x 1]
    return row(transpose(scores), 0);                       // [n]
}

double score_triplet(const QASample& qa, std::size_t option, const GeneratedCorpus& corpus,
                     Model& model) {
    std::vector<SampleContext> ctxs;
    ctxs.push_back(make_sample_context(qa, corpus, model, NetMode::kEval));
    const Tensor s = score_triplets(ctxs, {{0, option}}, model, NetMode::kEval);
    return s.at(0);
}

Tensor answer_loss(const std::vector<const QASample*>& batch, const GeneratedCorpus& corpus,
                   Model& model, double margin, NetMode mode) {
    if (batch.empty()) throw ContractError("answer_loss: empty batch");
    std::vector<std::pair<std::size_t, std::size_t>> triplets;
    std::vector<std::size_t> first_row(batch.size());
    std::size_t n_negatives = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const QASample& qa = *batch[j];
        if (qa.options.size() < 2) throw ContractError("answer_loss: sample needs a negative option");
        first_row[j] = triplets.size();
        for (std::size_t o = 0; o < qa.options.size(); ++o) triplets.emplace_back(j, o);
        n_negatives = qa.options.size() - 1;  // option count fixed by config
    }
    std::vector<SampleContext> contexts = make_sample_contexts(batch, corpus, model, mode);

    const Tensor scores = score_triplets(contexts, triplets, model, mode);

    Tensor total = Tensor::scalar(0.0);
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const QASample& qa = *batch[j];
        const Tensor pos = element(scores, first_row[j] + qa.correct);
        for (std::size_t o = 0; o < qa.options.size(); ++o) {
            if (o == qa.correct) continue;
            const Tensor neg = element(scores, first_row[j] + o);
            total = add(total, relu(add_const(sub(neg, pos), margin)));
        }
    }
    const double norm = 1.0 / (static_cast<double>(n_negatives) * static_cast<double>(batch.size()));
    return scale(total, norm);
}

std::size_t predict(const QASample& qa, const GeneratedCorpus& corpus, Model& model) {
    std::vector<SampleContext> ctxs;
    ctxs.push_back(make_sample_context(qa, corpus, model, NetMode::kEval));
    std::vector<std::pair<std::size_t, std::size_t>> triplets;
    for (std::size_t o = 0; o < qa.options.size(); ++o) triplets.emplace_back(0, o);
    const Tensor scores = score_triplets(ctxs, triplets, model, NetMode::kEval);
    std::size_t best = 0;
    for (std::size_t o = 1; o < qa.options.size(); ++o)
        if (scores.at(o) > scores.at(best)) best = o;
    return best;
}

namespace {

// Question-side or answer-side localization evidence per region.
std::vector<double> side_scores(const SampleContext& ctx, const Mentions& m) {
    const std::size_t r = ctx.fo.rows();
    std::vector<double> out(r, 0.0);
    const auto noun_mat = mention_matrix(ctx, m.nouns);
    const auto adj_mat = mention_matrix(ctx, m.adjectives);
    if (noun_mat) {
        const Tensor s = rowwise_max(matmul(ctx.fo, transpose(*noun_mat)));
        for (std::size_t i = 0; i < r; ++i) out[i] += s.at(i);
    }
    if (adj_mat) {
        const Tensor s = rowwise_max(matmul(ctx.fa, transpose(*adj_mat)));
        for (std::size_t i = 0; i < r; ++i) out[i] += s.at(i);
    }
    return out;
}

}  // namespace

double zero_shot_score(const QASample& qa, std::size_t option, const GeneratedCorpus& corpus,
                       Model& model) {
    SampleContext ctx = make_sample_context(qa, corpus, model, NetMode::kEval);

    // attention over the full question+answer mention set
    const Tensor attn = attention_weights(ctx, option);

    const std::vector<double> p_q = side_scores(ctx, question_mentions(qa));
    const std::vector<double> p_a = side_scores(ctx, word_list_mentions(qa.options.at(option), corpus.vocab));

    double score = 0.0;
    for (std::size_t i = 0; i < attn.numel(); ++i) {
        score += attn.at(i) * std::min(p_q[i], p_a[i]);
    }
    return score;
}

std::size_t zero_shot_predict(const QASample& qa, const GeneratedCorpus& corpus, Model& model) {
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t o = 0; o < qa.options.size(); ++o) {
        const double s = zero_shot_score(qa, o, corpus, model);
        if (s > best_score) {
            best_score = s;
            best = o;
        }
    }
    return best;
}

void write_attention_dump(const QASample& qa, const AttentionMap& map,
                          const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "# qa " << qa.id << "\n";
    out << "region,raw,weight\n";
    char buf[96];
    for (std::size_t i = 0; i < map.regions.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g", map.regions[i], map.raw[i], map.weights[i]);
        out << buf << "\n";
    }
}

}  // namespace svlr
