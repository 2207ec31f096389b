#pragma once

#include <filesystem>
#include <vector>

#include "svlr/vocab.hpp"

namespace svlr {

// Object categories O, attribute categories T, and the hypernym DAG over
// O. Category ids are vocabulary word ids.
struct Ontology {
    std::vector<WordId> objects;
    std::vector<WordId> attributes;
    // edges child -> parent; acyclic
    std::vector<std::pair<WordId, WordId>> hypernym_edges;

    bool is_object(WordId w) const;
    // objects that never appear as a hypernym parent
    std::vector<WordId> leaf_objects() const;
    bool is_attribute(WordId w) const;
    std::size_t object_index(WordId w) const;     // position in objects
    std::size_t attribute_index(WordId w) const;  // position in attributes

    bool operator==(const Ontology& other) const = default;
};

// Union of `labels` with all their DAG ancestors, sorted ascending.
// Labels outside O raise ContractError.
std::vector<WordId> hypernym_closure(const std::vector<WordId>& labels, const Ontology& ont);

bool hypernym_graph_cyclic(const Ontology& ont);

// Text format: one category per line under [objects] / [attributes]
// headers, hypernym edges as "child > parent" lines under [hypernyms].
void write_ontology(const Ontology& ont, const Vocabulary& vocab, const std::filesystem::path& file);
Ontology read_ontology(const Vocabulary& vocab, const std::filesystem::path& file);

}  // namespace svlr
