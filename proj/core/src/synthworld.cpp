#include "svlr/synthworld.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "svlr/config.hpp"
#include "svlr/rng.hpp"

namespace svlr {

WorldSpec WorldSpec::defaults() {
    WorldSpec s;
    s.groups = {
        {"rare_recog_common_qa", 3, 4, 180},
        {"common_both", 3, 270, 180},
        {"common_recog_rare_qa", 3, 270, 12},
        {"rare_both", 3, 4, 12},
    };
    return s;
}

void WorldSpec::validate() const {
    if (leaf_objects == 0 || attribute_families == 0 || attributes_per_family == 0) {
        throw ContractError("world spec: empty category sets");
    }
    if (parent_objects > 0 && leaf_objects % parent_objects != 0) {
        throw ContractError("world spec: leaf_objects must split evenly over parent_objects");
    }
    if (options_per_question < 2) {
        throw ContractError("world spec: need at least 2 answer options");
    }
    if (options_per_question > attributes_per_family) {
        throw ContractError("world spec: options_per_question exceeds attribute family size");
    }
    if (regions_per_image < 2) {
        throw ContractError("world spec: need at least 2 regions per image for batch norm");
    }
    if (regions_per_image > 14) {
        throw ContractError("world spec: at most 14 regions per image fit the attention grid");
    }
    if (yesno_fraction < 0.0 || whatobj_fraction < 0.0 || exists_fraction < 0.0 ||
        yesno_fraction + whatobj_fraction + exists_fraction > 1.0) {
        throw ContractError("world spec: template fractions outside [0,1]");
    }
    if (whatobj_fraction > 0.0) {
        if (regions_per_image < options_per_question) {
            throw ContractError(
                "world spec: object questions need regions_per_image >= options_per_question");
        }
        if (leaf_objects < options_per_question) {
            throw ContractError("world spec: object questions need enough leaf classes for options");
        }
    }
    std::size_t grouped = 0, recog = 0, qa = 0;
    for (const auto& g : groups) {
        grouped += g.class_count;
        recog += g.class_count * g.recog_train_per_class;
        qa += g.class_count * g.qa_train_per_class;
    }
    if (grouped > leaf_objects) {
        throw ContractError("world spec: frequency profile covers more classes than exist");
    }
    if (recog > recog_train_size) {
        throw ContractError("world spec: frequency profile exceeds recog_train_size");
    }
    if (qa > qa_train_size) {
        throw ContractError("world spec: frequency profile exceeds qa_train_size");
    }
    if (grouped == leaf_objects && (recog != recog_train_size || qa != qa_train_size)) {
        throw ContractError("world spec: profile covers all classes but totals differ from dataset sizes");
    }
    if (modes_per_class == 0) {
        throw ContractError("world spec: modes_per_class must be at least 1");
    }
    if (synonym_pairs > leaf_objects) {
        throw ContractError("world spec: more synonym pairs than leaf classes");
    }
}

namespace {

std::string num2(std::size_t i) {
    std::ostringstream out;
    out << (i < 10 ? "0" : "") << i;
    return out.str();
}

struct World {
    const WorldSpec* spec;
    Vocabulary vocab;
    Ontology ont;
    std::vector<WordId> leaves;             // leaf object word ids
    std::size_t confusable_count = 0;       // leading leaves in one visual cluster
    std::vector<std::vector<std::vector<double>>> leaf_modes;  // per leaf: sub-mode latents
    std::vector<std::vector<WordId>> families;  // attribute ids per family
    std::vector<WordId> family_words;       // "fam0", "fam1", ...
    WordId w_what, w_is, w_the, w_there, w_yes, w_no;
    std::vector<WordId> alias_of;           // leaf index -> alias word id (or 0)
    std::vector<bool> has_alias;
    std::vector<std::vector<double>> latents;   // per word id
    std::vector<double> mix;                // [region_dim x word_dim]
    RegionId next_region_id = 0;
    std::size_t next_image = 0;
};

std::vector<double> make_latent(std::size_t dim, Rng& rng) {
    return rng.normal_vec(dim, 0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
}

WordId add_word(World& w, const std::string& name, Pos pos, Rng& rng,
                const std::vector<double>* preset_latent = nullptr) {
    auto latent = preset_latent ? *preset_latent : make_latent(w.spec->word_dim, rng);
    auto code = make_latent(w.spec->word_dim, rng);  // arbitrary word identity
    std::vector<double> base(code.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        base[i] = w.spec->word_code_scale * code[i] + w.spec->word_semantic_mix * latent[i] +
                  rng.normal(0.0, w.spec->word_noise / std::sqrt(static_cast<double>(w.spec->word_dim)));
    }
    const WordId id = w.vocab.add(name, pos, std::move(base));
    w.latents.push_back(std::move(latent));
    return id;
}

std::vector<double> region_features(const World& w, WordId object, const std::vector<WordId>& attrs,
                                    Rng& rng) {
    const std::size_t wd = w.spec->word_dim;
    const std::size_t rd = w.spec->region_dim;
    std::vector<double> mixvec(wd, 0.0);
    // pick one of the object's visual sub-modes when it has them
    const std::vector<double>* obj_latent = &w.latents[object];
    for (std::size_t l = 0; l < w.leaves.size(); ++l) {
        if (w.leaves[l] == object && !w.leaf_modes[l].empty()) {
            obj_latent = &w.leaf_modes[l][rng.index(w.leaf_modes[l].size())];
            break;
        }
    }
    for (std::size_t i = 0; i < wd; ++i) mixvec[i] = (*obj_latent)[i];
    for (WordId a : attrs)
        for (std::size_t i = 0; i < wd; ++i) mixvec[i] += 0.7 * w.latents[a][i];
    std::vector<double> out(rd, 0.0);
    for (std::size_t i = 0; i < rd; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < wd; ++j) acc += w.mix[i * wd + j] * mixvec[j];
        out[i] = acc + rng.normal(0.0, w.spec->feature_noise / std::sqrt(static_cast<double>(rd)));
    }
    return out;
}

// Full-height column strips plus random widening. The strips partition
// the grid, so the union always covers it.
std::vector<GridRect> image_rects(std::size_t count, Rng& rng) {
    std::vector<GridRect> rects(count);
    const int width = 14;
    int x = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const int remaining_cols = width - x;
        const int remaining_regions = static_cast<int>(count - i);
        const int w = remaining_cols / remaining_regions;
        rects[i] = {x, 0, x + w - 1, 13};
        x += w;
    }
    for (auto& r : rects) {
        r.x0 = std::max(0, r.x0 - static_cast<int>(rng.index(2)));
        r.x1 = std::min(13, r.x1 + static_cast<int>(rng.index(2)));
    }
    return rects;
}

RegionSample make_recog_region(World& w, WordId leaf, const std::string& image, Rng& rng) {
    RegionSample r;
    r.id = w.next_region_id++;
    r.image = image;
    r.rect = {0, 0, 13, 13};
    std::vector<WordId> attrs;
    for (const auto& fam : w.families) attrs.push_back(fam[rng.index(fam.size())]);
    r.objects = {leaf};
    r.attributes = attrs;
    r.features = region_features(w, leaf, attrs, rng);
    return r;
}

std::vector<RegionSample> recog_split(World& w, const std::vector<std::size_t>& per_class,
                                      const std::string& image_prefix, Rng& rng) {
    std::vector<RegionSample> out;
    for (std::size_t c = 0; c < w.leaves.size(); ++c) {
        for (std::size_t k = 0; k < per_class[c]; ++k) {
            const std::string image = image_prefix + std::to_string(w.next_image / 4);
            ++w.next_image;
            out.push_back(make_recog_region(w, w.leaves[c], image, rng));
        }
    }
    // interleave classes so minibatches mix labels
    rng.shuffle(out);
    return out;
}

QASample make_qa_sample(World& w, std::uint32_t qa_id, std::size_t leaf_index,
                        std::vector<RegionSample>& region_pool, Rng& rng) {
    const WorldSpec& spec = *w.spec;
    const WordId object = w.leaves[leaf_index];
    enum class Kind { kYesNo, kWhatObject, kExists, kWhatAttr };
    const double u = rng.uniform();
    Kind kind = Kind::kWhatAttr;
    if (u < spec.yesno_fraction) {
        kind = Kind::kYesNo;
    } else if (u < spec.yesno_fraction + spec.whatobj_fraction) {
        kind = Kind::kWhatObject;
    } else if (u < spec.yesno_fraction + spec.whatobj_fraction + spec.exists_fraction) {
        kind = Kind::kExists;
    }
    const std::size_t fam_id = rng.index(w.families.size());
    const auto& family = w.families[fam_id];

    QASample qa;
    qa.id = qa_id;
    qa.image = "qimg" + std::to_string(qa_id);

    // the relevant region: the queried object, carrying the queried
    // attribute in the queried family and a random one elsewhere
    std::vector<WordId> relevant_attrs;
    const WordId answer_attr = family[rng.index(family.size())];
    for (std::size_t f = 0; f < w.families.size(); ++f) {
        if (f == fam_id) {
            relevant_attrs.push_back(answer_attr);
        } else {
            relevant_attrs.push_back(w.families[f][rng.index(w.families[f].size())]);
        }
    }

    // surface form of the object: planted synonym half the time
    WordId object_word = object;
    if (w.has_alias[leaf_index] && rng.uniform() < 0.5) object_word = w.alias_of[leaf_index];

    bool attr_present = true;  // for yes/no questions
    WordId asked_attr = answer_attr;
    std::vector<std::vector<WordId>> options;

    // distractor regions first: their objects double as the candidate
    // objects of "what is the <attr> thing" questions. Confusable-cluster
    // questions carry the sibling classes as hard negatives, so telling
    // the cluster members apart is what answering trains.
    std::vector<std::size_t> siblings;
    if (leaf_index < w.confusable_count) {
        for (std::size_t i = 0; i < w.confusable_count; ++i)
            if (i != leaf_index) siblings.push_back(i);
        if (siblings.size() > spec.regions_per_image - 1) {
            rng.shuffle(siblings);
            siblings.resize(spec.regions_per_image - 1);
        }
    }
    std::vector<std::size_t> distractor_leaves;
    if (kind == Kind::kWhatObject) {
        // distinct objects so each option is backed by exactly one region
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < w.leaves.size(); ++i)
            if (i != leaf_index && !(std::find(siblings.begin(), siblings.end(), i) != siblings.end()))
                pool.push_back(i);
        rng.shuffle(pool);
        distractor_leaves = siblings;
        distractor_leaves.insert(distractor_leaves.end(), pool.begin(),
                                 pool.begin() + spec.regions_per_image - 1 - siblings.size());
        rng.shuffle(distractor_leaves);
    } else {
        for (std::size_t i = 1; i < spec.regions_per_image; ++i) {
            std::size_t other = rng.index(w.leaves.size());
            while (other == leaf_index) other = rng.index(w.leaves.size());
            distractor_leaves.push_back(other);
        }
        // plant at least one sibling region in cluster questions
        if (!siblings.empty()) distractor_leaves[rng.index(distractor_leaves.size())] =
            siblings[rng.index(siblings.size())];
    }

    switch (kind) {
        case Kind::kYesNo: {
            attr_present = rng.uniform() < 0.5;
            if (!attr_present) {
                WordId other = family[rng.index(family.size())];
                while (other == answer_attr) other = family[rng.index(family.size())];
                asked_attr = other;
            }
            qa.question_template = "yesno";
            qa.tokens = {{w.w_is, Pos::kOther, 1},
                         {w.w_the, Pos::kOther, 4},
                         {object_word, Pos::kNoun, 2},
                         {asked_attr, Pos::kAdj, 3}};
            options.push_back({attr_present ? w.w_yes : w.w_no});
            options.push_back({attr_present ? w.w_no : w.w_yes});
            auto pool = family;
            std::erase(pool, asked_attr);
            rng.shuffle(pool);
            for (std::size_t i = 0; options.size() < spec.options_per_question; ++i) {
                options.push_back({pool[i]});
            }
            break;
        }
        case Kind::kExists: {
            // "is there a <attr> thing": answerable from pooled evidence
            attr_present = rng.uniform() < 0.5;
            if (!attr_present) {
                WordId other = family[rng.index(family.size())];
                while (other == answer_attr) other = family[rng.index(family.size())];
                asked_attr = other;
            }
            qa.question_template = "exists";
            qa.tokens = {{w.w_is, Pos::kOther, 1},
                         {w.w_there, Pos::kOther, 4},
                         {asked_attr, Pos::kAdj, 3}};
            options.push_back({attr_present ? w.w_yes : w.w_no});
            options.push_back({attr_present ? w.w_no : w.w_yes});
            auto pool = family;
            std::erase(pool, asked_attr);
            rng.shuffle(pool);
            for (std::size_t i = 0; options.size() < spec.options_per_question; ++i) {
                options.push_back({pool[i]});
            }
            break;
        }
        case Kind::kWhatObject: {
            // "what is the <attr> thing": the answer is the object word
            qa.question_template = "whatobj";
            qa.tokens = {{w.w_what, Pos::kOther, 1},
                         {w.w_is, Pos::kOther, 4},
                         {w.w_the, Pos::kOther, 4},
                         {answer_attr, Pos::kAdj, 3}};
            options.push_back({object_word});
            for (std::size_t i = 0; options.size() < spec.options_per_question; ++i) {
                options.push_back({w.leaves[distractor_leaves[i]]});
            }
            break;
        }
        case Kind::kWhatAttr: {
            qa.question_template = "what_" + w.vocab.word(w.family_words[fam_id]);
            qa.tokens = {{w.w_what, Pos::kOther, 1},
                         {w.family_words[fam_id], Pos::kOther, 4},
                         {w.w_is, Pos::kOther, 4},
                         {w.w_the, Pos::kOther, 4},
                         {object_word, Pos::kNoun, 2}};
            options.push_back({answer_attr});
            auto pool = family;
            std::erase(pool, answer_attr);
            rng.shuffle(pool);
            for (std::size_t i = 0; options.size() < spec.options_per_question; ++i) {
                options.push_back({pool[i]});
            }
            break;
        }
    }

    // place the correct option uniformly
    std::vector<std::size_t> order(options.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    qa.options.resize(options.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        qa.options[i] = options[order[i]];
        if (order[i] == 0) qa.correct = i;
    }

    // distractor regions avoid the queried family value, so pooled
    // evidence alone cannot answer
    const auto rects = image_rects(spec.regions_per_image, rng);
    std::vector<RegionSample> regions;
    RegionSample relevant;
    relevant.image = qa.image;
    relevant.objects = {object};
    relevant.attributes = relevant_attrs;
    regions.push_back(relevant);
    for (std::size_t i = 1; i < spec.regions_per_image; ++i) {
        RegionSample d;
        d.image = qa.image;
        d.objects = {w.leaves[distractor_leaves[i - 1]]};
        for (std::size_t f = 0; f < w.families.size(); ++f) {
            const auto& fam = w.families[f];
            WordId a = fam[rng.index(fam.size())];
            if (f == fam_id) {
                while (a == answer_attr ||
                       ((kind == Kind::kYesNo || kind == Kind::kExists) && a == asked_attr)) {
                    a = fam[rng.index(fam.size())];
                }
            }
            d.attributes.push_back(a);
        }
        regions.push_back(d);
    }
    rng.shuffle(regions);
    for (std::size_t i = 0; i < regions.size(); ++i) {
        auto& r = regions[i];
        r.id = w.next_region_id++;
        r.rect = rects[i];
        r.features = region_features(w, r.objects[0], r.attributes, rng);
        qa.region_ids.push_back(r.id);
        if (r.objects[0] == object) qa.relevant_region = r.id;
        region_pool.push_back(r);
    }
    return qa;
}

}  // namespace

GeneratedCorpus generate(const WorldSpec& spec) {
    spec.validate();
    GeneratedCorpus corpus;
    World w;
    w.spec = &spec;
    Rng root_rng(spec.seed);
    Rng vocab_rng = root_rng.fork(1);
    Rng recog_rng = root_rng.fork(2);
    Rng qa_rng = root_rng.fork(3);

    // vocabulary and ontology
    w.w_what = add_word(w, "what", Pos::kOther, vocab_rng);
    w.w_is = add_word(w, "is", Pos::kOther, vocab_rng);
    w.w_the = add_word(w, "the", Pos::kOther, vocab_rng);
    w.w_there = add_word(w, "there", Pos::kOther, vocab_rng);
    w.w_yes = add_word(w, "yes", Pos::kOther, vocab_rng);
    w.w_no = add_word(w, "no", Pos::kOther, vocab_rng);
    for (std::size_t f = 0; f < spec.attribute_families; ++f) {
        w.family_words.push_back(add_word(w, "fam" + std::to_string(f), Pos::kOther, vocab_rng));
    }
    // the leading profile group forms a tight visual cluster when asked to
    std::size_t confusable_count = 0;
    if (spec.rare_confusable_spread > 0.0 && !spec.groups.empty()) {
        confusable_count = spec.groups.front().class_count;
    }
    w.confusable_count = confusable_count;
    const auto cluster_center = make_latent(spec.word_dim, vocab_rng);
    for (std::size_t i = 0; i < spec.leaf_objects; ++i) {
        if (i < confusable_count) {
            auto latent = make_latent(spec.word_dim, vocab_rng);
            for (std::size_t k = 0; k < latent.size(); ++k) {
                latent[k] = cluster_center[k] + spec.rare_confusable_spread * latent[k];
            }
            w.leaves.push_back(add_word(w, "obj" + num2(i), Pos::kNoun, vocab_rng, &latent));
        } else {
            w.leaves.push_back(add_word(w, "obj" + num2(i), Pos::kNoun, vocab_rng));
        }
    }
    std::vector<WordId> parents;
    for (std::size_t i = 0; i < spec.parent_objects; ++i) {
        parents.push_back(add_word(w, "grp" + std::to_string(i), Pos::kNoun, vocab_rng));
    }
    WordId root_word = 0;
    if (spec.add_root) root_word = add_word(w, "entity", Pos::kNoun, vocab_rng);
    for (std::size_t f = 0; f < spec.attribute_families; ++f) {
        std::vector<WordId> fam;
        for (std::size_t i = 0; i < spec.attributes_per_family; ++i) {
            fam.push_back(add_word(w, "atr" + num2(f * spec.attributes_per_family + i), Pos::kAdj, vocab_rng));
        }
        w.families.push_back(std::move(fam));
    }
    w.has_alias.assign(spec.leaf_objects, false);
    w.alias_of.assign(spec.leaf_objects, 0);
    for (std::size_t i = 0; i < spec.synonym_pairs; ++i) {
        // alias a class the profile makes common in QA so the alignment
        // signal exists; fall back to the first leaves
        std::size_t target = i;
        if (!spec.groups.empty() && spec.groups.size() > 1) {
            std::size_t offset = spec.groups[0].class_count;  // start of second group
            if (offset + i < spec.leaf_objects) target = offset + i;
        }
        w.has_alias[target] = true;
        w.alias_of[target] = add_word(w, w.vocab.word(w.leaves[target]) + "syn", Pos::kNoun, vocab_rng);
    }

    w.ont.objects = w.leaves;
    w.ont.objects.insert(w.ont.objects.end(), parents.begin(), parents.end());
    if (spec.add_root) w.ont.objects.push_back(root_word);
    for (const auto& fam : w.families) {
        w.ont.attributes.insert(w.ont.attributes.end(), fam.begin(), fam.end());
    }
    if (spec.parent_objects > 0) {
        const std::size_t per_parent = spec.leaf_objects / spec.parent_objects;
        for (std::size_t i = 0; i < spec.leaf_objects; ++i) {
            w.ont.hypernym_edges.emplace_back(w.leaves[i], parents[i / per_parent]);
        }
        if (spec.add_root) {
            for (WordId p : parents) w.ont.hypernym_edges.emplace_back(p, root_word);
        }
    }

    w.mix.resize(spec.region_dim * spec.word_dim);
    for (auto& v : w.mix) v = vocab_rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.word_dim)));

    w.leaf_modes.resize(spec.leaf_objects);
    for (std::size_t l = 0; l < spec.leaf_objects; ++l) {
        for (std::size_t m = 0; m < spec.modes_per_class; ++m) {
            auto mode = w.latents[w.leaves[l]];
            const auto shift = make_latent(spec.word_dim, vocab_rng);
            for (std::size_t i = 0; i < mode.size(); ++i) mode[i] += spec.mode_spread * shift[i];
            w.leaf_modes[l].push_back(std::move(mode));
        }
    }

    // recognition splits: profiled train counts, fixed val/test counts
    std::vector<std::size_t> train_counts(spec.leaf_objects, 0);
    std::size_t assigned_classes = 0, assigned_regions = 0;
    for (const auto& g : spec.groups) {
        for (std::size_t k = 0; k < g.class_count; ++k) {
            train_counts[assigned_classes + k] = g.recog_train_per_class;
            assigned_regions += g.recog_train_per_class;
        }
        assigned_classes += g.class_count;
    }
    const std::size_t recog_filler = spec.leaf_objects - assigned_classes;
    std::size_t remaining = spec.recog_train_size - assigned_regions;
    for (std::size_t k = 0; k < recog_filler; ++k) {
        const std::size_t share = remaining / (recog_filler - k);
        train_counts[assigned_classes + k] = share;
        remaining -= share;
    }

    corpus.recog_train = recog_split(w, train_counts, "gimg_tr", recog_rng);
    corpus.recog_val = recog_split(w, std::vector<std::size_t>(spec.leaf_objects, spec.recog_val_per_class),
                                   "gimg_va", recog_rng);
    corpus.recog_test = recog_split(w, std::vector<std::size_t>(spec.leaf_objects, spec.recog_test_per_class),
                                    "gimg_te", recog_rng);

    // QA splits: profiled train counts per class, round-robin val/test
    std::vector<std::size_t> qa_counts(spec.leaf_objects, 0);
    assigned_classes = 0;
    std::size_t assigned_qa = 0;
    for (const auto& g : spec.groups) {
        for (std::size_t k = 0; k < g.class_count; ++k) {
            qa_counts[assigned_classes + k] = g.qa_train_per_class;
            assigned_qa += g.qa_train_per_class;
        }
        assigned_classes += g.class_count;
    }
    const std::size_t qa_filler = spec.leaf_objects - assigned_classes;
    remaining = spec.qa_train_size - assigned_qa;
    for (std::size_t k = 0; k < qa_filler; ++k) {
        const std::size_t share = remaining / (qa_filler - k);
        qa_counts[assigned_classes + k] = share;
        remaining -= share;
    }

    std::uint32_t qa_id = 0;
    for (std::size_t c = 0; c < spec.leaf_objects; ++c) {
        for (std::size_t k = 0; k < qa_counts[c]; ++k) {
            corpus.qa_train.push_back(make_qa_sample(w, qa_id++, c, corpus.qa_regions, qa_rng));
        }
    }
    qa_rng.shuffle(corpus.qa_train);
    for (std::size_t k = 0; k < spec.qa_val_size; ++k) {
        corpus.qa_val.push_back(make_qa_sample(w, qa_id++, k % spec.leaf_objects, corpus.qa_regions, qa_rng));
    }
    for (std::size_t k = 0; k < spec.qa_test_size; ++k) {
        corpus.qa_test.push_back(make_qa_sample(w, qa_id++, k % spec.leaf_objects, corpus.qa_regions, qa_rng));
    }

    corpus.vocab = std::move(w.vocab);
    corpus.ontology = std::move(w.ont);
    corpus.rebuild_region_index();
    return corpus;
}

ClassCounts count_classes(const GeneratedCorpus& corpus) {
    ClassCounts counts;
    counts.recog_train.assign(corpus.ontology.objects.size(), 0);
    counts.qa_train.assign(corpus.ontology.objects.size(), 0);
    for (const auto& r : corpus.recog_train) {
        for (WordId o : r.objects) counts.recog_train[corpus.ontology.object_index(o)]++;
    }
    for (const auto& qa : corpus.qa_train) {
        const RegionSample& rel = corpus.region_by_id(qa.relevant_region);
        counts.qa_train[corpus.ontology.object_index(rel.objects.at(0))]++;
    }
    return counts;
}

namespace {

std::vector<FrequencyGroup> parse_groups(const std::string& text, const std::string& where) {
    std::vector<FrequencyGroup> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::istringstream fields(item);
        std::string name, c, r, q;
        if (!std::getline(fields, name, ':') || !std::getline(fields, c, ':') ||
            !std::getline(fields, r, ':') || !std::getline(fields, q, ':')) {
            throw ParseError(where + ": group entry '" + item + "' wants name:classes:recog:qa");
        }
        FrequencyGroup g;
        g.name = name;
        g.class_count = std::stoul(c);
        g.recog_train_per_class = std::stoul(r);
        g.qa_train_per_class = std::stoul(q);
        out.push_back(std::move(g));
    }
    return out;
}

std::string groups_to_string(const std::vector<FrequencyGroup>& groups) {
    std::ostringstream out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (i) out << ",";
        out << groups[i].name << ":" << groups[i].class_count << ":"
            << groups[i].recog_train_per_class << ":" << groups[i].qa_train_per_class;
    }
    return out.str();
}

}  // namespace

WorldSpec WorldSpec::from_file(const std::filesystem::path& file) {
    KvFile kv = KvFile::load(file);
    const WorldSpec d = WorldSpec::defaults();
    WorldSpec s;
    s.seed = kv.get_u64("seed", d.seed);
    s.leaf_objects = kv.get_size("leaf_objects", d.leaf_objects);
    s.parent_objects = kv.get_size("parent_objects", d.parent_objects);
    s.add_root = kv.get_u64("add_root", d.add_root ? 1 : 0) != 0;
    s.attribute_families = kv.get_size("attribute_families", d.attribute_families);
    s.attributes_per_family = kv.get_size("attributes_per_family", d.attributes_per_family);
    s.word_dim = kv.get_size("word_dim", d.word_dim);
    s.region_dim = kv.get_size("region_dim", d.region_dim);
    s.feature_noise = kv.get_double("feature_noise", d.feature_noise);
    s.modes_per_class = kv.get_size("modes_per_class", d.modes_per_class);
    s.mode_spread = kv.get_double("mode_spread", d.mode_spread);
    s.rare_confusable_spread = kv.get_double("rare_confusable_spread", d.rare_confusable_spread);
    s.word_code_scale = kv.get_double("word_code_scale", d.word_code_scale);
    s.word_semantic_mix = kv.get_double("word_semantic_mix", d.word_semantic_mix);
    s.word_noise = kv.get_double("word_noise", d.word_noise);
    s.regions_per_image = kv.get_size("regions_per_image", d.regions_per_image);
    s.options_per_question = kv.get_size("options_per_question", d.options_per_question);
    s.yesno_fraction = kv.get_double("yesno_fraction", d.yesno_fraction);
    s.whatobj_fraction = kv.get_double("whatobj_fraction", d.whatobj_fraction);
    s.exists_fraction = kv.get_double("exists_fraction", d.exists_fraction);
    s.recog_train_size = kv.get_size("recog_train_size", d.recog_train_size);
    s.recog_val_per_class = kv.get_size("recog_val_per_class", d.recog_val_per_class);
    s.recog_test_per_class = kv.get_size("recog_test_per_class", d.recog_test_per_class);
    s.qa_train_size = kv.get_size("qa_train_size", d.qa_train_size);
    s.qa_val_size = kv.get_size("qa_val_size", d.qa_val_size);
    s.qa_test_size = kv.get_size("qa_test_size", d.qa_test_size);
    s.synonym_pairs = kv.get_size("synonym_pairs", d.synonym_pairs);
    const std::string groups = kv.get_str("groups", groups_to_string(d.groups));
    s.groups = groups.empty() ? std::vector<FrequencyGroup>{} : parse_groups(groups, file.string());
    kv.require_fully_consumed();
    s.validate();
    return s;
}

void WorldSpec::write_file(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "seed = " << seed << "\n";
    out << "leaf_objects = " << leaf_objects << "\n";
    out << "parent_objects = " << parent_objects << "\n";
    out << "add_root = " << (add_root ? 1 : 0) << "\n";
    out << "attribute_families = " << attribute_families << "\n";
    out << "attributes_per_family = " << attributes_per_family << "\n";
    out << "word_dim = " << word_dim << "\n";
    out << "region_dim = " << region_dim << "\n";
    out << "feature_noise = " << feature_noise << "\n";
    out << "modes_per_class = " << modes_per_class << "\n";
    out << "mode_spread = " << mode_spread << "\n";
    out << "rare_confusable_spread = " << rare_confusable_spread << "\n";
    out << "word_code_scale = " << word_code_scale << "\n";
    out << "word_semantic_mix = " << word_semantic_mix << "\n";
    out << "word_noise = " << word_noise << "\n";
    out << "regions_per_image = " << regions_per_image << "\n";
    out << "options_per_question = " << options_per_question << "\n";
    out << "yesno_fraction = " << yesno_fraction << "\n";
    out << "whatobj_fraction = " << whatobj_fraction << "\n";
    out << "exists_fraction = " << exists_fraction << "\n";
    out << "recog_train_size = " << recog_train_size << "\n";
    out << "recog_val_per_class = " << recog_val_per_class << "\n";
    out << "recog_test_per_class = " << recog_test_per_class << "\n";
    out << "qa_train_size = " << qa_train_size << "\n";
    out << "qa_val_size = " << qa_val_size << "\n";
    out << "qa_test_size = " << qa_test_size << "\n";
    out << "synonym_pairs = " << synonym_pairs << "\n";
    out << "groups = " << groups_to_string(groups) << "\n";
}

}  // namespace svlr
