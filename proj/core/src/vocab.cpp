#include "svlr/vocab.hpp"

namespace svlr {

std::string pos_str(Pos p) {
    switch (p) {
        case Pos::kNoun: return "noun";
        case Pos::kAdj: return "adj";
        case Pos::kOther: return "other";
    }
    return "other";
}

Pos pos_from(const std::string& s) {
    if (s == "noun") return Pos::kNoun;
    if (s == "adj") return Pos::kAdj;
    if (s == "other") return Pos::kOther;
    throw ParseError("unknown part-of-speech tag '" + s + "'");
}

WordId Vocabulary::add(std::string word, Pos pos, std::vector<double> base_vector) {
    if (index_.count(word)) throw ContractError("duplicate word '" + word + "'");
    if (words_.empty()) {
        base_dim_ = base_vector.size();
    } else if (base_vector.size() != base_dim_) {
        throw DimError("base vector for '" + word + "' has dimension " +
                       std::to_string(base_vector.size()) + ", expected " +
                       std::to_string(base_dim_));
    }
    const WordId id = static_cast<WordId>(words_.size());
    index_.emplace(word, id);
    words_.push_back(std::move(word));
    pos_.push_back(pos);
    base_.push_back(std::move(base_vector));
    return id;
}

WordId Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw LookupError("missing word '" + word + "'");
    return it->second;
}

}  // namespace svlr
