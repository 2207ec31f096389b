#include "svlr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "svlr/recognition.hpp"
#include "svlr/synthworld.hpp"
#include "svlr/trainer.hpp"

namespace svlr {

AccuracyReport vqa_accuracy(Model& model, const GeneratedCorpus& corpus,
                            const std::vector<QASample>& split, bool zero_shot) {
    AccuracyReport report;
    std::map<std::string, std::size_t> hits;
    for (const auto& qa : split) {
        const std::size_t pred =
            zero_shot ? zero_shot_predict(qa, corpus, model) : predict(qa, corpus, model);
        report.counts[qa.question_template]++;
        if (pred == qa.correct) hits[qa.question_template]++;
    }
    std::size_t total_hits = 0;
    for (const auto& [tmpl, count] : report.counts) {
        report.by_template[tmpl] = static_cast<double>(hits[tmpl]) / static_cast<double>(count);
        total_hits += hits[tmpl];
        report.total += count;
    }
    report.overall = report.total == 0 ? 0.0
                                       : static_cast<double>(total_hits) / static_cast<double>(report.total);
    return report;
}

namespace {

std::size_t bin_of(double value, const std::vector<double>& upper_edges) {
    for (std::size_t i = 0; i + 1 < upper_edges.size(); ++i) {
        if (value < upper_edges[i]) return i;
    }
    return upper_edges.size() - 1;
}

// Per-class top-1 accuracy on the recognition test split. The argmax is
// restricted to leaf categories: hypernym parents are trained to score
// high for every descendant, so including them only measures the
// leaf-vs-parent coin toss instead of class identity.
std::map<WordId, double> per_class_accuracy(Model& model, const GeneratedCorpus& corpus) {
    const std::vector<WordId> leaves = corpus.ontology.leaf_objects();
    std::map<WordId, std::pair<std::size_t, std::size_t>> tally;  // class -> (hits, total)
    for (const auto& r : corpus.recog_test) {
        const Tensor scores = object_scores(r.features, corpus.vocab, corpus.ontology, model,
                                            NetMode::kEval);
        WordId pred = leaves.front();
        double best = -1e300;
        for (WordId leaf : leaves) {
            const double s = scores.at(corpus.ontology.object_index(leaf));
            if (s > best) {
                best = s;
                pred = leaf;
            }
        }
        const WordId truth = r.objects.at(0);
        auto& t = tally[truth];
        t.second++;
        if (pred == truth) t.first++;
    }
    std::map<WordId, double> acc;
    for (const auto& [cls, t] : tally) {
        acc[cls] = static_cast<double>(t.first) / static_cast<double>(t.second);
    }
    return acc;
}

}  // namespace

TransferGrid transfer_grid(Model& baseline, Model& contender, const GeneratedCorpus& corpus,
                           const std::vector<double>& qa_bin_edges,
                           const std::vector<double>& recog_bin_edges) {
    if (baseline.config.embed_dim != contender.config.embed_dim) {
        throw ContractError("transfer_grid: checkpoints disagree on model shape");
    }
    TransferGrid grid;
    grid.qa_bin_edges = qa_bin_edges;
    grid.recog_bin_edges = recog_bin_edges;
    grid.cells.assign(qa_bin_edges.size(), std::vector<TransferCell>(recog_bin_edges.size()));

    const ClassCounts counts = count_classes(corpus);
    const auto base_acc = per_class_accuracy(baseline, corpus);
    const auto cont_acc = per_class_accuracy(contender, corpus);

    std::vector<std::vector<std::vector<double>>> deltas(
        qa_bin_edges.size(), std::vector<std::vector<double>>(recog_bin_edges.size()));
    std::vector<std::vector<std::vector<double>>> bases(
        qa_bin_edges.size(), std::vector<std::vector<double>>(recog_bin_edges.size()));

    for (std::size_t c = 0; c < corpus.ontology.objects.size(); ++c) {
        const WordId cls = corpus.ontology.objects[c];
        auto it = base_acc.find(cls);
        if (it == base_acc.end()) {
            // class absent from the test split
            if (counts.recog_train[c] > 0 || counts.qa_train[c] > 0) grid.excluded.push_back(cls);
            continue;
        }
        const std::size_t row = bin_of(static_cast<double>(counts.qa_train[c]), qa_bin_edges);
        const std::size_t col = bin_of(static_cast<double>(counts.recog_train[c]), recog_bin_edges);
        bases[row][col].push_back(it->second);
        deltas[row][col].push_back(cont_acc.at(cls) - it->second);
    }

    for (std::size_t r = 0; r < qa_bin_edges.size(); ++r) {
        for (std::size_t c = 0; c < recog_bin_edges.size(); ++c) {
            auto& cell = grid.cells[r][c];
            cell.class_count = deltas[r][c].size();
            if (cell.class_count == 0) continue;
            cell.baseline_acc = std::accumulate(bases[r][c].begin(), bases[r][c].end(), 0.0) /
                                static_cast<double>(cell.class_count);
            cell.delta = std::accumulate(deltas[r][c].begin(), deltas[r][c].end(), 0.0) /
                         static_cast<double>(cell.class_count);
        }
    }
    return grid;
}

Heatmap14 rect_heatmap(const GridRect& rect) {
    Heatmap14 map{};
    const double w = 1.0 / static_cast<double>(rect.cell_count());
    for (int y = rect.y0; y <= rect.y1; ++y)
        for (int x = rect.x0; x <= rect.x1; ++x)
            map[static_cast<std::size_t>(y) * kHeatmapSide + static_cast<std::size_t>(x)] = w;
    return map;
}

Heatmap14 to_heatmap14(const AttentionMap& map, const GeneratedCorpus& corpus) {
    Heatmap14 grid{};
    std::array<bool, kHeatmapCells> covered{};
    for (std::size_t i = 0; i < map.regions.size(); ++i) {
        const GridRect rect = corpus.region_by_id(map.regions[i]).rect;
        const std::size_t cells = rect.cell_count();
        if (cells == 0) throw ContractError("to_heatmap14: empty region mask");
        const double share = map.weights[i] / static_cast<double>(cells);
        for (int y = rect.y0; y <= rect.y1; ++y) {
            for (int x = rect.x0; x <= rect.x1; ++x) {
                const std::size_t cell = static_cast<std::size_t>(y) * kHeatmapSide +
                                         static_cast<std::size_t>(x);
                grid[cell] += share;
                covered[cell] = true;
            }
        }
    }
    for (bool c : covered) {
        if (!c) throw ContractError("to_heatmap14: region masks do not cover the grid");
    }
    double total = 0.0;
    for (double v : grid) total += v;
    if (total <= 0.0) throw ContractError("to_heatmap14: zero total weight");
    for (auto& v : grid) v /= total;
    return grid;
}

namespace {

// fractional mid-ranks: ties share the average of their positions
std::vector<double> mid_ranks(const Heatmap14& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const Heatmap14& a, const Heatmap14& b) {
    const auto ra = mid_ranks(a);
    const auto rb = mid_ranks(b);
    const double n = static_cast<double>(ra.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        throw ContractError("spearman: zero-variance input, correlation undefined");
    }
    return sab / std::sqrt(saa * sbb);
}

Heatmap14 center_baseline(double sigma) {
    Heatmap14 map{};
    const double c = (static_cast<double>(kHeatmapSide) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t y = 0; y < kHeatmapSide; ++y) {
        for (std::size_t x = 0; x < kHeatmapSide; ++x) {
            const double dy = static_cast<double>(y) - c;
            const double dx = static_cast<double>(x) - c;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            map[y * kHeatmapSide + x] = v;
            total += v;
        }
    }
    for (auto& v : map) v /= total;
    return map;
}

std::vector<SweepRow> threshold_sweep(const std::vector<std::vector<Heatmap14>>& model_maps,
                                      const std::vector<Heatmap14>& reference_maps,
                                      const Heatmap14& center_map,
                                      const std::vector<double>& thresholds) {
    for (const auto& maps : model_maps) {
        if (maps.size() != reference_maps.size()) {
            throw ContractError("threshold_sweep: model and reference sample sets disagree");
        }
    }
    std::vector<double> center_corr(reference_maps.size());
    for (std::size_t i = 0; i < reference_maps.size(); ++i) {
        center_corr[i] = spearman(reference_maps[i], center_map);
    }

    std::vector<SweepRow> rows;
    for (double tau : thresholds) {
        SweepRow row;
        row.threshold = tau;
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < reference_maps.size(); ++i) {
            if (center_corr[i] <= tau) subset.push_back(i);
        }
        row.subset_size = subset.size();
        for (const auto& maps : model_maps) {
            if (subset.empty()) {
                row.mean_correlation.push_back(std::nullopt);
                continue;
            }
            double acc = 0.0;
            for (std::size_t i : subset) acc += spearman(maps[i], reference_maps[i]);
            row.mean_correlation.push_back(acc / static_cast<double>(subset.size()));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::vector<std::pair<WordId, double>> rank_neighbors(const std::vector<std::vector<double>>& space,
                                                      WordId query, std::size_t k) {
    const std::size_t n = space.size();
    const std::size_t dim = space.front().size();
    std::vector<double> center(dim, 0.0);
    for (const auto& v : space)
        for (std::size_t i = 0; i < dim; ++i) center[i] += v[i];
    for (auto& c : center) c /= static_cast<double>(n);

    auto centered = [&](WordId w, std::size_t i) { return space[w][i] - center[i]; };
    auto norm = [&](WordId w) {
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += centered(w, i) * centered(w, i);
        return std::sqrt(s);
    };
    const double qn = norm(query);

    std::vector<std::pair<WordId, double>> out;
    for (WordId w = 0; w < n; ++w) {
        if (w == query) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dot += centered(query, i) * centered(w, i);
        const double wn = norm(w);
        const double cosine = (qn == 0.0 || wn == 0.0) ? 0.0 : dot / (qn * wn);
        out.emplace_back(w, 1.0 - cosine);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

}  // namespace

NeighborList nn_probe(Model& model, const Vocabulary& vocab, WordId query, std::size_t k) {
    if (query >= vocab.size()) throw LookupError("nn_probe: unknown query word");
    std::vector<std::vector<double>> base_space;
    base_space.reserve(vocab.size());
    std::vector<WordId> all(vocab.size());
    std::iota(all.begin(), all.end(), 0);
    for (WordId w : all) base_space.push_back(vocab.base(w));

    const Tensor emb = embed_words(all, vocab, model);
    std::vector<std::vector<double>> svlr_space;
    svlr_space.reserve(vocab.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        std::vector<double> v(emb.cols());
        for (std::size_t j = 0; j < emb.cols(); ++j) v[j] = emb.at(i, j);
        svlr_space.push_back(std::move(v));
    }

    NeighborList result;
    result.query = query;
    result.base_space = rank_neighbors(base_space, query, k);
    result.svlr_space = rank_neighbors(svlr_space, query, k);
    return result;
}

void write_accuracy_csv(const AccuracyReport& report, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "group,count,accuracy\n";
    char buf[160];
    for (const auto& [tmpl, acc] : report.by_template) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g", tmpl.c_str(), report.counts.at(tmpl), acc);
        out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "overall,%zu,%.17g", report.total, report.overall);
    out << buf << "\n";
}

void write_transfer_grid_csv(const TransferGrid& grid, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "qa_bin,recog_bin,baseline_acc,delta,classes\n";
    char buf[160];
    for (std::size_t r = 0; r < grid.cells.size(); ++r) {
        for (std::size_t c = 0; c < grid.cells[r].size(); ++c) {
            const auto& cell = grid.cells[r][c];
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%zu", r, c, cell.baseline_acc,
                          cell.delta, cell.class_count);
            out << buf << "\n";
        }
    }
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& model_names,
                     const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "threshold,subset_size";
    for (const auto& name : model_names) out << "," << name;
    out << "\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%zu", row.threshold, row.subset_size);
        out << buf;
        for (const auto& corr : row.mean_correlation) {
            if (corr) {
                std::snprintf(buf, sizeof(buf), ",%.17g", *corr);
                out << buf;
            } else {
                out << ",";
            }
        }
        out << "\n";
    }
}

void write_neighbors_csv(const std::vector<NeighborList>& lists, const Vocabulary& vocab,
                         const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out << "query,space,rank,neighbor,distance\n";
    char buf[160];
    for (const auto& list : lists) {
        for (std::size_t i = 0; i < list.base_space.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s,base,%zu,%s,%.17g", vocab.word(list.query).c_str(),
                          i + 1, vocab.word(list.base_space[i].first).c_str(), list.base_space[i].second);
            out << buf << "\n";
        }
        for (std::size_t i = 0; i < list.svlr_space.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s,svlr,%zu,%s,%.17g", vocab.word(list.query).c_str(),
                          i + 1, vocab.word(list.svlr_space[i].first).c_str(), list.svlr_space[i].second);
            out << buf << "\n";
        }
    }
}

}  // namespace svlr
