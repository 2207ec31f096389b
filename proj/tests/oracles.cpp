#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace refimpl {

namespace {

const Vec& pdata(const Model& model, const std::string& name) {
    return model.params.at(name).data();
}

std::size_t pcols(const Model& model, const std::string& name) {
    return model.params.at(name).cols();
}

// y = x * W + b with W stored [in x out]
Vec affine(const Vec& x, const Vec& w, const Vec& b) {
    const std::size_t out_dim = b.size();
    const std::size_t in_dim = x.size();
    Vec y(out_dim, 0.0);
    for (std::size_t o = 0; o < out_dim; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < in_dim; ++i) acc += x[i] * w[i * out_dim + o];
        y[o] = acc;
    }
    return y;
}

void relu_inplace(Vec& x) {
    for (auto& v : x) v = v > 0.0 ? v : 0.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// batch norm over rows; train mode uses the batch moments
Mat bnorm(const Mat& x, const Vec& gamma, const Vec& beta, const Vec& run_mean,
          const Vec& run_var, NetMode mode) {
    const std::size_t b = x.size();
    const std::size_t d = gamma.size();
    Vec mu(d, 0.0), var(d, 0.0);
    if (mode == NetMode::kTrain) {
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < b; ++i) mu[j] += x[i][j];
            mu[j] /= static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) var[j] += (x[i][j] - mu[j]) * (x[i][j] - mu[j]);
            var[j] /= static_cast<double>(b);
        }
    } else {
        mu = run_mean;
        var = run_var;
    }
    Mat y(b, Vec(d));
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            y[i][j] = gamma[j] * (x[i][j] - mu[j]) / std::sqrt(var[j] + svlr::kBnEpsilon) + beta[j];
        }
    }
    return y;
}

double dot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Vec class_vector(const Model& model, const GeneratedCorpus& corpus, WordId cat) {
    if (model.config.mode == svlr::ShareMode::kSvlr) {
        return embed_words(model, corpus.vocab, {cat}).front();
    }
    const auto& ont = corpus.ontology;
    if (ont.is_object(cat)) {
        const std::size_t idx = ont.object_index(cat);
        const Vec& h = pdata(model, "cls.h_obj");
        const std::size_t d = pcols(model, "cls.h_obj");
        return Vec(h.begin() + idx * d, h.begin() + (idx + 1) * d);
    }
    const std::size_t idx = ont.attribute_index(cat);
    const Vec& h = pdata(model, "cls.h_atr");
    const std::size_t d = pcols(model, "cls.h_atr");
    return Vec(h.begin() + idx * d, h.begin() + (idx + 1) * d);
}

}  // namespace

Mat embed_words(const Model& model, const svlr::Vocabulary& vocab, const std::vector<WordId>& ids) {
    Mat out;
    out.reserve(ids.size());
    for (WordId id : ids) {
        Vec h = affine(vocab.base(id), pdata(model, "g.l1.w"), pdata(model, "g.l1.b"));
        relu_inplace(h);
        out.push_back(affine(h, pdata(model, "g.l2.w"), pdata(model, "g.l2.b")));
    }
    return out;
}

Mat embed_regions(const Model& model, const Mat& features, Head head, NetMode mode) {
    const std::string h = head == Head::kObject ? "fo" : "fa";
    Mat x;
    for (const auto& f : features) x.push_back(affine(f, pdata(model, h + ".l1.w"), pdata(model, h + ".l1.b")));
    const auto& bn1 = model.params.bn_state(h + ".bn1");
    x = bnorm(x, pdata(model, h + ".bn1.scale"), pdata(model, h + ".bn1.offset"),
              bn1.running_mean, bn1.running_var, mode);
    for (auto& r : x) relu_inplace(r);
    Mat y;
    for (const auto& r : x) y.push_back(affine(r, pdata(model, h + ".l2.w"), pdata(model, h + ".l2.b")));
    const auto& bn2 = model.params.bn_state(h + ".bn2");
    y = bnorm(y, pdata(model, h + ".bn2.scale"), pdata(model, h + ".bn2.offset"),
              bn2.running_mean, bn2.running_var, mode);
    for (auto& r : y) relu_inplace(r);
    return y;
}

Mat category_scores(const Model& model, const GeneratedCorpus& corpus, const Mat& emb, Head head) {
    const auto& cats = head == Head::kObject ? corpus.ontology.objects : corpus.ontology.attributes;
    Mat scores(emb.size(), Vec(cats.size(), 0.0));
    for (std::size_t k = 0; k < cats.size(); ++k) {
        const Vec cv = class_vector(model, corpus, cats[k]);
        for (std::size_t j = 0; j < emb.size(); ++j) scores[j][k] = dot(emb[j], cv);
    }
    return scores;
}

double object_loss(const Model& model, const GeneratedCorpus& corpus,
                   const std::vector<const svlr::RegionSample*>& regions, double margin,
                   NetMode mode) {
    const auto& ont = corpus.ontology;
    Mat feats;
    for (const auto* r : regions) feats.push_back(r->features);
    const Mat emb = embed_regions(model, feats, Head::kObject, mode);
    const Mat scores = category_scores(model, corpus, emb, Head::kObject);

    double total = 0.0;
    for (std::size_t j = 0; j < regions.size(); ++j) {
        const auto closed = closure(regions[j]->objects, ont);
        double region_total = 0.0;
        for (WordId l : closed) {
            const double s_l = scores[j][ont.object_index(l)];
            double pair_total = 0.0;
            for (std::size_t k = 0; k < ont.objects.size(); ++k) {
                if (closed.count(ont.objects[k])) continue;
                pair_total += std::max(0.0, margin + scores[j][k] - s_l);
            }
            region_total += pair_total / static_cast<double>(ont.objects.size());
        }
        total += region_total / static_cast<double>(closed.size());
    }
    return total / static_cast<double>(regions.size());
}

double attribute_loss(const Model& model, const GeneratedCorpus& corpus,
                      const std::vector<const svlr::RegionSample*>& regions, NetMode mode) {
    const auto& ont = corpus.ontology;
    const std::size_t m = regions.size();
    Mat feats;
    for (const auto* r : regions) feats.push_back(r->features);
    const Mat emb = embed_regions(model, feats, Head::kAttribute, mode);
    const Mat scores = category_scores(model, corpus, emb, Head::kAttribute);

    Vec gamma(ont.attributes.size(), 0.0);
    for (const auto* r : regions) {
        const std::set<WordId> attrs(r->attributes.begin(), r->attributes.end());
        for (WordId t : attrs) gamma[ont.attribute_index(t)] += 1.0;
    }
    for (auto& g : gamma) g /= static_cast<double>(m);

    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < ont.attributes.size(); ++k) {
            const bool positive = std::find(regions[j]->attributes.begin(), regions[j]->attributes.end(),
                                            ont.attributes[k]) != regions[j]->attributes.end();
            if (positive) {
                total += (1.0 - gamma[k]) * std::log(sigmoid(scores[j][k]));
            } else {
                total += gamma[k] * std::log(1.0 - sigmoid(scores[j][k]));
            }
        }
    }
    return -total / static_cast<double>(m);
}

namespace {

struct SideWords {
    std::vector<WordId> nouns, adjs;
};

void push_unique(std::vector<WordId>& v, WordId w) {
    if (std::find(v.begin(), v.end(), w) == v.end()) v.push_back(w);
}

SideWords mentions_of(const GeneratedCorpus& corpus, const QASample& qa, std::size_t option,
                      bool include_question, bool include_answer) {
    SideWords side;
    if (include_question) {
        for (const auto& tok : qa.tokens) {
            if (tok.pos == svlr::Pos::kNoun) push_unique(side.nouns, tok.word);
            if (tok.pos == svlr::Pos::kAdj) push_unique(side.adjs, tok.word);
        }
    }
    if (include_answer) {
        for (WordId w : qa.options.at(option)) {
            if (corpus.vocab.pos(w) == svlr::Pos::kNoun) push_unique(side.nouns, w);
            if (corpus.vocab.pos(w) == svlr::Pos::kAdj) push_unique(side.adjs, w);
        }
    }
    return side;
}

Mat qa_region_embeds(const Model& model, const GeneratedCorpus& corpus, const QASample& qa,
                     Head head, NetMode mode) {
    Mat feats;
    for (svlr::RegionId rid : qa.region_ids) feats.push_back(corpus.region_by_id(rid).features);
    return embed_regions(model, feats, head, mode);
}

Vec side_evidence(const Model& model, const GeneratedCorpus& corpus, const Mat& fo, const Mat& fa,
                  const SideWords& side) {
    const std::size_t r = fo.size();
    Vec out(r, 0.0);
    if (!side.nouns.empty()) {
        const Mat g = embed_words(model, corpus.vocab, side.nouns);
        for (std::size_t i = 0; i < r; ++i) {
            double best = -1e300;
            for (const auto& v : g) best = std::max(best, dot(fo[i], v));
            out[i] += best;
        }
    }
    if (!side.adjs.empty()) {
        const Mat g = embed_words(model, corpus.vocab, side.adjs);
        for (std::size_t i = 0; i < r; ++i) {
            double best = -1e300;
            for (const auto& v : g) best = std::max(best, dot(fa[i], v));
            out[i] += best;
        }
    }
    return out;
}

Vec softmax_vec(const Vec& raw) {
    double hi = raw[0];
    for (double v : raw) hi = std::max(hi, v);
    Vec out(raw.size());
    double z = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::exp(raw[i] - hi);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    return out;
}

}  // namespace

Attention attention(const Model& model, const GeneratedCorpus& corpus, const QASample& qa,
                    std::size_t option, NetMode mode) {
    const Mat fo = qa_region_embeds(model, corpus, qa, Head::kObject, mode);
    const Mat fa = qa_region_embeds(model, corpus, qa, Head::kAttribute, mode);
    const SideWords side = mentions_of(corpus, qa, option, true, true);
    Attention att;
    att.raw = side_evidence(model, corpus, fo, fa, side);
    att.weights = softmax_vec(att.raw);
    return att;
}

Vec image_representation(const Model& model, const GeneratedCorpus& corpus, const QASample& qa,
                         std::size_t option, NetMode mode) {
    const Mat fo = qa_region_embeds(model, corpus, qa, Head::kObject, mode);
    const Mat fa = qa_region_embeds(model, corpus, qa, Head::kAttribute, mode);
    const Attention att = attention(model, corpus, qa, option, mode);
    const Mat so = category_scores(model, corpus, fo, Head::kObject);
    const Mat sa = category_scores(model, corpus, fa, Head::kAttribute);
    Vec out(so[0].size() + sa[0].size(), 0.0);
    for (std::size_t r = 0; r < fo.size(); ++r) {
        for (std::size_t k = 0; k < so[r].size(); ++k) out[k] += att.weights[r] * so[r][k];
        for (std::size_t k = 0; k < sa[r].size(); ++k) out[so[r].size() + k] += att.weights[r] * sa[r][k];
    }
    return out;
}

namespace {

Vec question_rep(const Model& model, const GeneratedCorpus& corpus, const QASample& qa) {
    const std::size_t d = model.config.embed_dim;
    Vec out(4 * d, 0.0);
    // positional fallback for untagged tokens, mirroring the documented rule
    std::vector<int> bins(qa.tokens.size(), 0);
    bool saw_noun = false;
    for (std::size_t i = 0; i < qa.tokens.size(); ++i) {
        const auto& tok = qa.tokens[i];
        if (tok.bin >= 1 && tok.bin <= 4) {
            bins[i] = tok.bin;
            saw_noun = saw_noun || tok.pos == svlr::Pos::kNoun;
        } else if (tok.pos == svlr::Pos::kNoun) {
            bins[i] = saw_noun ? 3 : 2;
            saw_noun = true;
        } else {
            bins[i] = saw_noun ? 4 : 1;
        }
    }
    for (int b = 1; b <= 4; ++b) {
        std::vector<WordId> words;
        for (std::size_t i = 0; i < qa.tokens.size(); ++i) {
            if (bins[i] == b) words.push_back(qa.tokens[i].word);
        }
        if (words.empty()) continue;
        const Mat emb = embed_words(model, corpus.vocab, words);
        for (const auto& e : emb) {
            for (std::size_t j = 0; j < d; ++j) out[(b - 1) * d + j] += e[j] / static_cast<double>(words.size());
        }
    }
    return out;
}

Vec answer_rep(const Model& model, const GeneratedCorpus& corpus, const std::vector<WordId>& words) {
    const std::size_t d = model.config.embed_dim;
    Vec out(d, 0.0);
    const Mat emb = embed_words(model, corpus.vocab, words);
    for (const auto& e : emb) {
        for (std::size_t j = 0; j < d; ++j) out[j] += e[j] / static_cast<double>(words.size());
    }
    return out;
}

}  // namespace

Vec triplet_scores(const Model& model, const GeneratedCorpus& corpus,
                   const std::vector<const QASample*>& samples,
                   const std::vector<std::pair<std::size_t, std::size_t>>& triplets, NetMode mode) {
    // all samples' regions share one batch-norm batch, like the implementation
    Mat all_feats;
    std::vector<std::size_t> offsets;
    for (const QASample* qa : samples) {
        offsets.push_back(all_feats.size());
        for (svlr::RegionId rid : qa->region_ids) all_feats.push_back(corpus.region_by_id(rid).features);
    }
    const Mat fo_all = embed_regions(model, all_feats, Head::kObject, mode);
    const Mat fa_all = embed_regions(model, all_feats, Head::kAttribute, mode);

    Mat img_rows, qa_rows;
    for (const auto& [si, option] : triplets) {
        const QASample& qa = *samples[si];
        const std::size_t n = qa.region_ids.size();
        const Mat fo(fo_all.begin() + offsets[si], fo_all.begin() + offsets[si] + n);
        const Mat fa(fa_all.begin() + offsets[si], fa_all.begin() + offsets[si] + n);
        const SideWords side = mentions_of(corpus, qa, option, true, true);
        Attention att;
        att.raw = side_evidence(model, corpus, fo, fa, side);
        att.weights = softmax_vec(att.raw);
        const Mat so = category_scores(model, corpus, fo, Head::kObject);
        const Mat sa = category_scores(model, corpus, fa, Head::kAttribute);
        Vec img(so[0].size() + sa[0].size(), 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t k = 0; k < so[r].size(); ++k) img[k] += att.weights[r] * so[r][k];
            for (std::size_t k = 0; k < sa[r].size(); ++k) img[so[r].size() + k] += att.weights[r] * sa[r][k];
        }
        img_rows.push_back(std::move(img));
        Vec qrow = question_rep(model, corpus, qa);
        const Vec arow = answer_rep(model, corpus, qa.options.at(option));
        qrow.insert(qrow.end(), arow.begin(), arow.end());
        qa_rows.push_back(std::move(qrow));
    }
    Mat z1, z2;
    for (const auto& r : img_rows) {
        z1.push_back(affine(r, pdata(model, "vqa.w1"), Vec(model.config.bimodal_dim, 0.0)));
    }
    for (const auto& r : qa_rows) {
        z2.push_back(affine(r, pdata(model, "vqa.w2"), Vec(model.config.bimodal_dim, 0.0)));
    }
    const auto& bn1 = model.params.bn_state("vqa.bn1");
    const auto& bn2 = model.params.bn_state("vqa.bn2");
    z1 = bnorm(z1, pdata(model, "vqa.bn1.scale"), pdata(model, "vqa.bn1.offset"),
               bn1.running_mean, bn1.running_var, mode);
    z2 = bnorm(z2, pdata(model, "vqa.bn2.scale"), pdata(model, "vqa.bn2.offset"),
               bn2.running_mean, bn2.running_var, mode);
    Vec scores(triplets.size(), 0.0);
    const Vec& w3 = pdata(model, "vqa.w3");
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < model.config.bimodal_dim; ++j) {
            const double beta = z1[i][j] + z2[i][j];
            acc += (beta > 0.0 ? beta : 0.0) * w3[j];
        }
        scores[i] = acc;
    }
    return scores;
}

double answer_loss(const Model& model, const GeneratedCorpus& corpus,
                   const std::vector<const QASample*>& batch, double margin, NetMode mode) {
    std::vector<std::pair<std::size_t, std::size_t>> triplets;
    std::vector<std::size_t> first(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        first[j] = triplets.size();
        for (std::size_t o = 0; o < batch[j]->options.size(); ++o) triplets.emplace_back(j, o);
    }
    const Vec scores = triplet_scores(model, corpus, batch, triplets, mode);
    const std::size_t n = batch.front()->options.size() - 1;
    double total = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const double pos = scores[first[j] + batch[j]->correct];
        for (std::size_t o = 0; o < batch[j]->options.size(); ++o) {
            if (o == batch[j]->correct) continue;
            total += std::max(0.0, margin + scores[first[j] + o] - pos);
        }
    }
    return total / (static_cast<double>(n) * static_cast<double>(batch.size()));
}

double zero_shot_score(const Model& model, const GeneratedCorpus& corpus, const QASample& qa,
                       std::size_t option) {
    const Mat fo = qa_region_embeds(model, corpus, qa, Head::kObject, NetMode::kEval);
    const Mat fa = qa_region_embeds(model, corpus, qa, Head::kAttribute, NetMode::kEval);
    const Vec full_raw = side_evidence(model, corpus, fo, fa, mentions_of(corpus, qa, option, true, true));
    const Vec weights = softmax_vec(full_raw);
    const Vec pq = side_evidence(model, corpus, fo, fa, mentions_of(corpus, qa, option, true, false));
    const Vec pa = side_evidence(model, corpus, fo, fa, mentions_of(corpus, qa, option, false, true));
    double total = 0.0;
    for (std::size_t r = 0; r < weights.size(); ++r) {
        total += weights[r] * std::min(pq[r], pa[r]);
    }
    return total;
}

std::set<WordId> closure(const std::vector<WordId>& labels, const svlr::Ontology& ont) {
    std::set<WordId> reached(labels.begin(), labels.end());
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& [child, parent] : ont.hypernym_edges) {
            if (reached.count(child) && !reached.count(parent)) {
                reached.insert(parent);
                grew = true;
            }
        }
    }
    return reached;
}

double spearman(const svlr::Heatmap14& a, const svlr::Heatmap14& b) {
    const std::size_t n = a.size();
    auto ranks = [n](const svlr::Heatmap14& v) {
        Vec r(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t less = 0, equal = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (v[j] < v[i]) ++less;
                if (v[j] == v[i]) ++equal;
            }
            r[i] = static_cast<double>(less) + (static_cast<double>(equal) + 1.0) / 2.0;
        }
        return r;
    };
    const Vec ra = ranks(a), rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

svlr::Heatmap14 heatmap(const svlr::AttentionMap& map, const GeneratedCorpus& corpus) {
    svlr::Heatmap14 grid{};
    double total = 0.0;
    for (std::size_t y = 0; y < 14; ++y) {
        for (std::size_t x = 0; x < 14; ++x) {
            double cell = 0.0;
            for (std::size_t r = 0; r < map.regions.size(); ++r) {
                const svlr::GridRect rect = corpus.region_by_id(map.regions[r]).rect;
                const bool inside = static_cast<int>(x) >= rect.x0 && static_cast<int>(x) <= rect.x1 &&
                                    static_cast<int>(y) >= rect.y0 && static_cast<int>(y) <= rect.y1;
                if (inside) cell += map.weights[r] / static_cast<double>(rect.cell_count());
            }
            grid[y * 14 + x] = cell;
            total += cell;
        }
    }
    for (auto& v : grid) v /= total;
    return grid;
}

}  // namespace refimpl

namespace fixtures {

svlr::WorldSpec tiny_spec(std::uint64_t seed) {
    svlr::WorldSpec spec;
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
    spec.recog_test_per_class = 2;
    spec.qa_train_size = 12;
    spec.qa_val_size = 4;
    spec.qa_test_size = 4;
    spec.synonym_pairs = 0;
    spec.groups.clear();
    return spec;
}

svlr::ModelConfig tiny_model_config() {
    svlr::ModelConfig cfg;
    cfg.word_dim = 6;
    cfg.region_dim = 6;
    cfg.hidden_dim = 5;
    cfg.embed_dim = 4;
    cfg.bimodal_dim = 8;
    return cfg;
}

TinyWorld tiny_world(std::uint64_t seed, svlr::ShareMode mode) {
    TinyWorld world;
    world.corpus = std::make_shared<svlr::GeneratedCorpus>(svlr::generate(tiny_spec(seed)));
    svlr::ModelConfig cfg = tiny_model_config();
    cfg.mode = mode;
    world.model = std::make_shared<svlr::Model>(
        svlr::init_model(cfg, world.corpus->ontology, seed * 31 + 7));
    return world;
}

}  // namespace fixtures
