#include "svlr/corpus.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace svlr {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
        throw ParseError(where + ": bad number '" + tok + "'");
    }
    return v;
}

long parse_long(const std::string& tok, const std::string& where) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0') {
        throw ParseError(where + ": bad integer '" + tok + "'");
    }
    return v;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string join_words(const std::vector<WordId>& ids, const Vocabulary& vocab) {
    if (ids.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ",";
        out += vocab.word(ids[i]);
    }
    return out;
}

std::vector<WordId> parse_words(const std::string& field, const Vocabulary& vocab) {
    std::vector<WordId> out;
    if (field == "-") return out;
    for (const auto& w : split_commas(field)) out.push_back(vocab.id(w));
    return out;
}

void write_regions(const std::vector<RegionSample>& regions, const Vocabulary& vocab,
                   const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    for (const auto& r : regions) {
        out << "region " << r.id << " image " << r.image << " rect " << r.rect.x0 << " "
            << r.rect.y0 << " " << r.rect.x1 << " " << r.rect.y1 << " objects "
            << join_words(r.objects, vocab) << " attributes " << join_words(r.attributes, vocab)
            << " features";
        for (double v : r.features) out << " " << fmt_double(v);
        out << "\n";
    }
}

std::vector<RegionSample> read_regions(const Vocabulary& vocab, const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    std::vector<RegionSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = file.filename().string() + ":" + std::to_string(lineno);
        const auto toks = split_ws(line);
        if (toks.size() < 14 || toks[0] != "region") throw ParseError(where + ": malformed region record");
        std::size_t i = 1;
        RegionSample r;
        r.id = static_cast<RegionId>(parse_long(toks[i++], where));
        if (toks[i++] != "image") throw ParseError(where + ": expected 'image'");
        r.image = toks[i++];
        if (toks[i++] != "rect") throw ParseError(where + ": expected 'rect'");
        r.rect.x0 = static_cast<int>(parse_long(toks[i++], where));
        r.rect.y0 = static_cast<int>(parse_long(toks[i++], where));
        r.rect.x1 = static_cast<int>(parse_long(toks[i++], where));
        r.rect.y1 = static_cast<int>(parse_long(toks[i++], where));
        if (toks[i++] != "objects") throw ParseError(where + ": expected 'objects'");
        r.objects = parse_words(toks[i++], vocab);
        if (toks[i++] != "attributes") throw ParseError(where + ": expected 'attributes'");
        r.attributes = parse_words(toks[i++], vocab);
        if (toks[i++] != "features") throw ParseError(where + ": expected 'features'");
        for (; i < toks.size(); ++i) r.features.push_back(parse_double(toks[i], where));
        out.push_back(std::move(r));
    }
    return out;
}

void write_qa(const std::vector<QASample>& samples, const Vocabulary& vocab,
              const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    for (const auto& qa : samples) {
        out << "qa " << qa.id << " image " << qa.image << " template " << qa.question_template << "\n";
        for (const auto& t : qa.tokens)
            out << "token " << vocab.word(t.word) << " " << pos_str(t.pos) << " " << t.bin << "\n";
        for (const auto& opt : qa.options) {
            out << "option";
            for (WordId w : opt) out << " " << vocab.word(w);
            out << "\n";
        }
        out << "correct " << qa.correct << "\n";
        out << "regions";
        for (RegionId r : qa.region_ids) out << " " << r;
        out << "\n";
        out << "relevant " << qa.relevant_region << "\n";
        out << "end\n";
    }
}

std::vector<QASample> read_qa(const Vocabulary& vocab, const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    std::vector<QASample> out;
    std::string line;
    std::size_t lineno = 0;
    std::optional<QASample> cur;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = file.filename().string() + ":" + std::to_string(lineno);
        const auto toks = split_ws(line);
        if (toks[0] == "qa") {
            if (cur) throw ParseError(where + ": previous record not closed with 'end'");
            if (toks.size() != 6 || toks[2] != "image" || toks[4] != "template")
                throw ParseError(where + ": malformed qa header");
            cur.emplace();
            cur->id = static_cast<std::uint32_t>(parse_long(toks[1], where));
            cur->image = toks[3];
            cur->question_template = toks[5];
            continue;
        }
        if (!cur) throw ParseError(where + ": content outside a qa record");
        if (toks[0] == "token") {
            if (toks.size() != 4) throw ParseError(where + ": malformed token line");
            cur->tokens.push_back({vocab.id(toks[1]), pos_from(toks[2]),
                                   static_cast<int>(parse_long(toks[3], where))});
        } else if (toks[0] == "option") {
            std::vector<WordId> opt;
            for (std::size_t i = 1; i < toks.size(); ++i) opt.push_back(vocab.id(toks[i]));
            cur->options.push_back(std::move(opt));
        } else if (toks[0] == "correct") {
            cur->correct = static_cast<std::size_t>(parse_long(toks.at(1), where));
        } else if (toks[0] == "regions") {
            for (std::size_t i = 1; i < toks.size(); ++i)
                cur->region_ids.push_back(static_cast<RegionId>(parse_long(toks[i], where)));
        } else if (toks[0] == "relevant") {
            cur->relevant_region = static_cast<RegionId>(parse_long(toks.at(1), where));
        } else if (toks[0] == "end") {
            out.push_back(std::move(*cur));
            cur.reset();
        } else {
            throw ParseError(where + ": unknown record line '" + toks[0] + "'");
        }
    }
    if (cur) {
        throw ParseError(file.filename().string() + ":" + std::to_string(lineno) +
                         ": truncated qa record (missing 'end')");
    }
    return out;
}

}  // namespace

const RegionSample& GeneratedCorpus::region_by_id(RegionId id) const {
    auto it = region_index_.find(id);
    if (it == region_index_.end()) throw LookupError("unknown region id " + std::to_string(id));
    return qa_regions[it->second];
}

void GeneratedCorpus::rebuild_region_index() {
    region_index_.clear();
    for (std::size_t i = 0; i < qa_regions.size(); ++i) region_index_[qa_regions[i].id] = i;
}

bool GeneratedCorpus::operator==(const GeneratedCorpus& other) const {
    return vocab == other.vocab && ontology == other.ontology &&
           recog_train == other.recog_train && recog_val == other.recog_val &&
           recog_test == other.recog_test && qa_regions == other.qa_regions &&
           qa_train == other.qa_train && qa_val == other.qa_val && qa_test == other.qa_test;
}

void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "vocab.txt");
        if (!out) throw Error("cannot open vocab.txt for writing");
        for (WordId w = 0; w < corpus.vocab.size(); ++w) {
            out << "word " << corpus.vocab.word(w) << " " << pos_str(corpus.vocab.pos(w));
            for (double v : corpus.vocab.base(w)) out << " " << fmt_double(v);
            out << "\n";
        }
    }
    write_ontology(corpus.ontology, corpus.vocab, dir / "ontology.txt");
    write_regions(corpus.recog_train, corpus.vocab, dir / "recog_train.txt");
    write_regions(corpus.recog_val, corpus.vocab, dir / "recog_val.txt");
    write_regions(corpus.recog_test, corpus.vocab, dir / "recog_test.txt");
    write_regions(corpus.qa_regions, corpus.vocab, dir / "qa_regions.txt");
    write_qa(corpus.qa_train, corpus.vocab, dir / "qa_train.txt");
    write_qa(corpus.qa_val, corpus.vocab, dir / "qa_val.txt");
    write_qa(corpus.qa_test, corpus.vocab, dir / "qa_test.txt");
}

GeneratedCorpus read_corpus(const std::filesystem::path& dir) {
    GeneratedCorpus corpus;
    {
        const auto file = dir / "vocab.txt";
        std::ifstream in(file);
        if (!in) throw Error("cannot open " + file.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const std::string where = "vocab.txt:" + std::to_string(lineno);
            const auto toks = split_ws(line);
            if (toks.size() < 3 || toks[0] != "word") throw ParseError(where + ": malformed word record");
            std::vector<double> base;
            for (std::size_t i = 3; i < toks.size(); ++i) base.push_back(parse_double(toks[i], where));
            corpus.vocab.add(toks[1], pos_from(toks[2]), std::move(base));
        }
    }
    corpus.ontology = read_ontology(corpus.vocab, dir / "ontology.txt");
    corpus.recog_train = read_regions(corpus.vocab, dir / "recog_train.txt");
    corpus.recog_val = read_regions(corpus.vocab, dir / "recog_val.txt");
    corpus.recog_test = read_regions(corpus.vocab, dir / "recog_test.txt");
    corpus.qa_regions = read_regions(corpus.vocab, dir / "qa_regions.txt");
    corpus.qa_train = read_qa(corpus.vocab, dir / "qa_train.txt");
    corpus.qa_val = read_qa(corpus.vocab, dir / "qa_val.txt");
    corpus.qa_test = read_qa(corpus.vocab, dir / "qa_test.txt");
    corpus.rebuild_region_index();
    return corpus;
}

}  // namespace svlr
