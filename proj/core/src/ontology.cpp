#include "svlr/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace svlr {

bool Ontology::is_object(WordId w) const {
    return std::find(objects.begin(), objects.end(), w) != objects.end();
}

bool Ontology::is_attribute(WordId w) const {
    return std::find(attributes.begin(), attributes.end(), w) != attributes.end();
}

std::vector<WordId> Ontology::leaf_objects() const {
    std::unordered_set<WordId> parents;
    for (const auto& [c, p] : hypernym_edges) {
        (void)c;
        parents.insert(p);
    }
    std::vector<WordId> leaves;
    for (WordId w : objects) {
        if (!parents.count(w)) leaves.push_back(w);
    }
    return leaves;
}

std::size_t Ontology::object_index(WordId w) const {
    auto it = std::find(objects.begin(), objects.end(), w);
    if (it == objects.end()) throw LookupError("word id " + std::to_string(w) + " is not an object category");
    return static_cast<std::size_t>(it - objects.begin());
}

std::size_t Ontology::attribute_index(WordId w) const {
    auto it = std::find(attributes.begin(), attributes.end(), w);
    if (it == attributes.end()) throw LookupError("word id " + std::to_string(w) + " is not an attribute category");
    return static_cast<std::size_t>(it - attributes.begin());
}

bool hypernym_graph_cyclic(const Ontology& ont) {
    // Kahn's algorithm over the edge list.
    std::unordered_map<WordId, std::size_t> indegree;
    std::unordered_map<WordId, std::vector<WordId>> out_edges;
    std::unordered_set<WordId> nodes;
    for (const auto& [c, p] : ont.hypernym_edges) {
        out_edges[c].push_back(p);
        indegree[p]++;
        nodes.insert(c);
        nodes.insert(p);
    }
    std::vector<WordId> ready;
    for (WordId w : nodes)
        if (indegree[w] == 0) ready.push_back(w);
    std::size_t removed = 0;
    while (!ready.empty()) {
        const WordId w = ready.back();
        ready.pop_back();
        ++removed;
        for (WordId p : out_edges[w])
            if (--indegree[p] == 0) ready.push_back(p);
    }
    return removed != nodes.size();
}

std::vector<WordId> hypernym_closure(const std::vector<WordId>& labels, const Ontology& ont) {
    std::unordered_map<WordId, std::vector<WordId>> parents;
    for (const auto& [child, parent] : ont.hypernym_edges) parents[child].push_back(parent);

    std::set<WordId> closed;
    std::vector<WordId> stack;
    for (WordId l : labels) {
        if (!ont.is_object(l)) {
            throw ContractError("closure label " + std::to_string(l) + " outside object set");
        }
        stack.push_back(l);
    }
    while (!stack.empty()) {
        const WordId w = stack.back();
        stack.pop_back();
        if (!closed.insert(w).second) continue;
        auto it = parents.find(w);
        if (it == parents.end()) continue;
        for (WordId p : it->second) stack.push_back(p);
    }
    return {closed.begin(), closed.end()};
}

void write_ontology(const Ontology& ont, const Vocabulary& vocab, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "[objects]\n";
    for (WordId w : ont.objects) out << vocab.word(w) << "\n";
    out << "[attributes]\n";
    for (WordId w : ont.attributes) out << vocab.word(w) << "\n";
    out << "[hypernyms]\n";
    for (const auto& [c, p] : ont.hypernym_edges)
        out << vocab.word(c) << " > " << vocab.word(p) << "\n";
}

Ontology read_ontology(const Vocabulary& vocab, const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    Ontology ont;
    std::string line;
    int section = -1;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line == "[objects]") { section = 0; continue; }
        if (line == "[attributes]") { section = 1; continue; }
        if (line == "[hypernyms]") { section = 2; continue; }
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (section == 0) {
            ont.objects.push_back(vocab.id(line));
        } else if (section == 1) {
            ont.attributes.push_back(vocab.id(line));
        } else if (section == 2) {
            const auto sep = line.find(" > ");
            if (sep == std::string::npos) throw ParseError(where + ": expected 'child > parent'");
            ont.hypernym_edges.emplace_back(vocab.id(line.substr(0, sep)),
                                            vocab.id(line.substr(sep + 3)));
        } else {
            throw ParseError(where + ": content before section header");
        }
    }

    if (hypernym_graph_cyclic(ont)) {
        throw ParseError(file.string() + ": hypernym graph is cyclic");
    }
    return ont;
}

}  // namespace svlr
