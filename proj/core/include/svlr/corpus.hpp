#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "svlr/ontology.hpp"
#include "svlr/vocab.hpp"

namespace svlr {

using RegionId = std::uint32_t;

// Inclusive cell rectangle on the 14x14 attention grid.
struct GridRect {
    int x0 = 0, y0 = 0, x1 = 13, y1 = 13;

    std::size_t cell_count() const {
        return static_cast<std::size_t>(x1 - x0 + 1) * static_cast<std::size_t>(y1 - y0 + 1);
    }
    bool operator==(const GridRect&) const = default;
};

// One labelled image region: frozen base features plus object and
// attribute label sets.
struct RegionSample {
    RegionId id = 0;
    std::string image;
    GridRect rect;
    std::vector<WordId> objects;     // raw labels, closure applied at batch time
    std::vector<WordId> attributes;
    std::vector<double> features;

    bool operator==(const RegionSample&) const = default;
};

struct QaToken {
    WordId word = 0;
    Pos pos = Pos::kOther;
    int bin = 0;  // 1..4; 0 = untagged, filled by the positional fallback

    bool operator==(const QaToken&) const = default;
};

struct QASample {
    std::uint32_t id = 0;
    std::string image;
    std::string question_template;               // grouping key for reports
    std::vector<QaToken> tokens;
    std::vector<std::vector<WordId>> options;    // word ids per option
    std::size_t correct = 0;
    std::vector<RegionId> region_ids;
    RegionId relevant_region = 0;                // planted ground-truth evidence

    bool operator==(const QASample&) const = default;
};

struct GeneratedCorpus {
    Vocabulary vocab;
    Ontology ontology;
    std::vector<RegionSample> recog_train, recog_val, recog_test;
    std::vector<RegionSample> qa_regions;        // regions of QA images, all splits
    std::vector<QASample> qa_train, qa_val, qa_test;

    const RegionSample& region_by_id(RegionId id) const;
    void rebuild_region_index();

    bool operator==(const GeneratedCorpus& other) const;

private:
    std::unordered_map<RegionId, std::size_t> region_index_;
};

// Line-oriented plain-text corpus directory. Doubles are printed with 17
// significant digits so a write/read round trip is lossless.
void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir);
GeneratedCorpus read_corpus(const std::filesystem::path& dir);

}  // namespace svlr
