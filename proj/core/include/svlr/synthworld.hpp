#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svlr/corpus.hpp"

namespace svlr {

// Pins exact per-class train frequencies for a block of leaf object
// classes; the transfer analysis reads its cells straight off these.
struct FrequencyGroup {
    std::string name;
    std::size_t class_count = 0;
    std::size_t recog_train_per_class = 0;
    std::size_t qa_train_per_class = 0;
};

// Full description of the planted toy universe. A spec plus its seed
// determines both datasets bit-exactly.
struct WorldSpec {
    std::uint64_t seed = 7;

    std::size_t leaf_objects = 16;
    std::size_t parent_objects = 4;       // hypernym layer over the leaves
    bool add_root = false;                // extra hypernym level when true
    std::size_t attribute_families = 2;
    std::size_t attributes_per_family = 6;

    std::size_t word_dim = 16;
    std::size_t region_dim = 24;
    double feature_noise = 0.3;           // sigma on region base features
    // Each object class spreads over several visual sub-modes. A handful
    // of training regions only covers a few of them, which is what makes
    // low-frequency classes genuinely weak instead of merely undersampled.
    std::size_t modes_per_class = 1;
    double mode_spread = 0.8;
    // The first profile group's classes sit in one tight latent cluster:
    // mutual confusables that a handful of recognition samples cannot
    // separate but hundreds of question mentions can. 0 disables it.
    double rare_confusable_spread = 0.4;
    // Base word vectors combine an arbitrary per-word identity code with
    // a fraction of the word's visual latent. A small semantic mix forces
    // the word network to learn the word-to-visual map from supervision
    // instead of reading it off a shared linear relation.
    double word_code_scale = 0.0;
    double word_semantic_mix = 1.0;
    double word_noise = 0.05;             // extra jitter on word base vectors

    std::size_t regions_per_image = 6;
    std::size_t options_per_question = 6;
    double yesno_fraction = 0.15;
    double whatobj_fraction = 0.3;
    double exists_fraction = 0.2;    // remainder asks for an attribute

    std::size_t recog_train_size = 2124;
    std::size_t recog_val_per_class = 3;
    std::size_t recog_test_per_class = 12;
    std::size_t qa_train_size = 1392;
    std::size_t qa_val_size = 288;
    std::size_t qa_test_size = 288;

    std::size_t synonym_pairs = 1;

    std::vector<FrequencyGroup> groups;   // leading leaf classes, in order

    std::size_t object_count() const {
        return leaf_objects + parent_objects + (add_root ? 1 : 0);
    }
    std::size_t attribute_count() const {
        return attribute_families * attributes_per_family;
    }

    static WorldSpec defaults();
    static WorldSpec from_file(const std::filesystem::path& file);
    void write_file(const std::filesystem::path& file) const;

    // Raises ContractError when the profile cannot be realized.
    void validate() const;
};

GeneratedCorpus generate(const WorldSpec& spec);

// Realized per-class sample counts, for auditing the frequency profile.
struct ClassCounts {
    std::vector<std::size_t> recog_train;  // indexed like ontology.objects
    std::vector<std::size_t> qa_train;     // questions whose object is the class
};
ClassCounts count_classes(const GeneratedCorpus& corpus);

}  // namespace svlr
