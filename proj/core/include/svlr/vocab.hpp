#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "svlr/error.hpp"

namespace svlr {

using WordId = std::uint32_t;

enum class Pos { kNoun, kAdj, kOther };

std::string pos_str(Pos p);
Pos pos_from(const std::string& s);

// Word list with frozen base vectors. Base vectors are inputs to the word
// network, never trained.
class Vocabulary {
public:
    WordId add(std::string word, Pos pos, std::vector<double> base_vector);

    std::size_t size() const { return words_.size(); }
    std::size_t base_dim() const { return base_dim_; }

    bool contains(const std::string& word) const { return index_.count(word) > 0; }
    WordId id(const std::string& word) const;
    const std::string& word(WordId id) const { return words_.at(id); }
    Pos pos(WordId id) const { return pos_.at(id); }
    const std::vector<double>& base(WordId id) const { return base_.at(id); }

    bool operator==(const Vocabulary& other) const {
        return words_ == other.words_ && pos_ == other.pos_ && base_ == other.base_;
    }

private:
    std::vector<std::string> words_;
    std::vector<Pos> pos_;
    std::vector<std::vector<double>> base_;
    std::unordered_map<std::string, WordId> index_;
    std::size_t base_dim_ = 0;
};

}  // namespace svlr
