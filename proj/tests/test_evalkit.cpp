#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "svlr/evalkit.hpp"
#include "svlr/rng.hpp"
#include "svlr/trainer.hpp"

using namespace svlr;

namespace {

Heatmap14 random_map(Rng& rng) {
    Heatmap14 m{};
    double total = 0.0;
    for (auto& v : m) {
        v = rng.uniform(0.0, 1.0);
        total += v;
    }
    for (auto& v : m) v /= total;
    return m;
}

}  // namespace

TEST_CASE("spearman extremes and symmetry") {
    Rng rng(81);
    Heatmap14 a{};
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<double>(i) + 1.0;

    CHECK(spearman(a, a) == doctest::Approx(1.0));

    Heatmap14 rev{};
    for (std::size_t i = 0; i < a.size(); ++i) rev[i] = a[a.size() - 1 - i];
    CHECK(spearman(a, rev) == doctest::Approx(-1.0));

    for (int round = 0; round < 20; ++round) {
        const Heatmap14 x = random_map(rng);
        const Heatmap14 y = random_map(rng);
        CHECK(spearman(x, y) == doctest::Approx(spearman(y, x)).epsilon(1e-12));
        CHECK(spearman(x, y) >= -1.0);
        CHECK(spearman(x, y) <= 1.0);
    }
}

TEST_CASE("spearman matches the counting-rank reference, ties included") {
    Rng rng(82);
    for (int round = 0; round < 50; ++round) {
        Heatmap14 a{}, b{};
        for (auto& v : a) v = static_cast<double>(rng.index(8));  // heavy ties
        for (auto& v : b) v = rng.uniform(0.0, 1.0);
        CHECK(spearman(a, b) == doctest::Approx(refimpl::spearman(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("zero-variance heatmap has no defined correlation") {
    Heatmap14 flat{};
    for (auto& v : flat) v = 1.0 / 196.0;
    Heatmap14 other{};
    for (std::size_t i = 0; i < other.size(); ++i) other[i] = static_cast<double>(i);
    CHECK_THROWS_AS(spearman(flat, other), ContractError);
}

TEST_CASE("center baseline is centered, normalized, rotation symmetric") {
    const Heatmap14 c = center_baseline();
    double total = 0.0;
    for (double v : c) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    // 90-degree rotation invariance
    for (std::size_t y = 0; y < 14; ++y) {
        for (std::size_t x = 0; x < 14; ++x) {
            const std::size_t ry = x, rx = 13 - y;
            CHECK(c[y * 14 + x] == doctest::Approx(c[ry * 14 + rx]).epsilon(1e-9));
        }
    }
    // the four central cells share the maximum
    double best = 0.0;
    for (double v : c) best = std::max(best, v);
    CHECK(c[6 * 14 + 6] == doctest::Approx(best));
    CHECK(c[7 * 14 + 7] == doctest::Approx(best));
}

TEST_CASE("heatmap projection: whole-grid region, halves, naive oracle") {
    auto world = fixtures::tiny_world(83);
    GeneratedCorpus& corpus = *world.corpus;

    // craft two regions: full grid and a half strip
    corpus.qa_regions.push_back({9001, "himg", {0, 0, 13, 13}, {}, {}, {}});
    corpus.qa_regions.push_back({9002, "himg", {0, 0, 6, 13}, {}, {}, {}});
    corpus.qa_regions.push_back({9003, "himg", {7, 0, 13, 13}, {}, {}, {}});
    corpus.rebuild_region_index();

    AttentionMap whole;
    whole.regions = {9001};
    whole.raw = {0.0};
    whole.weights = {1.0};
    const Heatmap14 uniform = to_heatmap14(whole, corpus);
    for (double v : uniform) CHECK(v == doctest::Approx(1.0 / 196.0).epsilon(1e-12));

    AttentionMap halves;
    halves.regions = {9002, 9003};
    halves.raw = {0.0, 0.0};
    halves.weights = {0.75, 0.25};
    const Heatmap14 split = to_heatmap14(halves, corpus);
    CHECK(split[0] == doctest::Approx(0.75 / 98.0).epsilon(1e-9));
    CHECK(split[13] == doctest::Approx(0.25 / 98.0).epsilon(1e-9));

    Rng rng(84);
    for (int round = 0; round < 20; ++round) {
        AttentionMap m;
        m.regions = {9001, 9002, 9003};
        m.raw = {0, 0, 0};
        double total = 0.0;
        m.weights.resize(3);
        for (auto& w : m.weights) {
            w = rng.uniform(0.01, 1.0);
            total += w;
        }
        for (auto& w : m.weights) w /= total;
        const Heatmap14 got = to_heatmap14(m, corpus);
        const Heatmap14 want = refimpl::heatmap(m, corpus);
        double sum_cells = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
            sum_cells += got[i];
        }
        CHECK(sum_cells == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("uncovered grid cells are an error") {
    auto world = fixtures::tiny_world(85);
    GeneratedCorpus& corpus = *world.corpus;
    corpus.qa_regions.push_back({9101, "himg2", {0, 0, 5, 5}, {}, {}, {}});
    corpus.rebuild_region_index();
    AttentionMap partial;
    partial.regions = {9101};
    partial.raw = {0.0};
    partial.weights = {1.0};
    CHECK_THROWS_AS(to_heatmap14(partial, corpus), ContractError);
}

TEST_CASE("threshold sweep subsets are nested and edge thresholds behave") {
    Rng rng(86);
    std::vector<Heatmap14> refs, model_maps;
    for (int i = 0; i < 24; ++i) {
        refs.push_back(random_map(rng));
        model_maps.push_back(random_map(rng));
    }
    const Heatmap14 center = center_baseline();
    std::vector<double> taus = {-1.0, -0.5, 0.0, 0.5, 1.0};
    const auto rows = threshold_sweep({model_maps}, refs, center, taus);
    REQUIRE(rows.size() == taus.size());
    CHECK(rows.back().subset_size == refs.size());  // tau = 1 keeps everything
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i - 1].subset_size <= rows[i].subset_size);
    }
    for (const auto& row : rows) {
        if (row.subset_size == 0) {
            CHECK_FALSE(row.mean_correlation[0].has_value());
        } else {
            CHECK(row.mean_correlation[0].has_value());
        }
    }
}

TEST_CASE("vqa accuracy counts templates and honors the tie rule") {
    auto world = fixtures::tiny_world(87);
    const auto& corpus = *world.corpus;
    auto& model = *world.model;

    // uniform zero scorer: every option ties, predict returns index 0
    for (auto& v : model.params.at("vqa.w3").mutable_data()) v = 0.0;
    const AccuracyReport report = vqa_accuracy(model, corpus, corpus.qa_val);
    std::size_t correct_at_zero = 0;
    for (const auto& qa : corpus.qa_val) {
        if (qa.correct == 0) ++correct_at_zero;
    }
    CHECK(report.total == corpus.qa_val.size());
    CHECK(report.overall ==
          doctest::Approx(static_cast<double>(correct_at_zero) / static_cast<double>(report.total)));
    std::size_t by_template_total = 0;
    for (const auto& [tmpl, count] : report.counts) by_template_total += count;
    CHECK(by_template_total == report.total);
}

TEST_CASE("transfer grid: identical checkpoints give zero deltas") {
    auto world = fixtures::tiny_world(88);
    const auto& corpus = *world.corpus;
    const TransferGrid grid = transfer_grid(*world.model, *world.model, corpus, {10.0, 1e300},
                                            {20.0, 1e300});
    std::size_t classes = 0;
    for (const auto& row : grid.cells) {
        for (const auto& cell : row) {
            CHECK(cell.delta == 0.0);
            classes += cell.class_count;
        }
    }
    CHECK(classes > 0);
    // every evaluated class lands in exactly one cell
    CHECK(classes + grid.excluded.size() <= corpus.ontology.objects.size());
}

TEST_CASE("transfer grid excludes classes absent from the test split") {
    auto world = fixtures::tiny_world(89);
    GeneratedCorpus corpus = *world.corpus;
    const WordId victim = corpus.recog_test.front().objects.at(0);
    std::erase_if(corpus.recog_test, [&](const RegionSample& r) { return r.objects.at(0) == victim; });
    const TransferGrid grid = transfer_grid(*world.model, *world.model, corpus, {10.0, 1e300},
                                            {20.0, 1e300});
    CHECK(std::find(grid.excluded.begin(), grid.excluded.end(), victim) != grid.excluded.end());
}

TEST_CASE("nearest-neighbor probe centers, excludes the query, ranks fully") {
    auto world = fixtures::tiny_world(90);
    const auto& corpus = *world.corpus;
    const WordId query = corpus.ontology.objects.front();

    const NeighborList full = nn_probe(*world.model, corpus.vocab, query,
                                       corpus.vocab.size() - 1);
    CHECK(full.base_space.size() == corpus.vocab.size() - 1);
    CHECK(full.svlr_space.size() == corpus.vocab.size() - 1);
    for (const auto& [w, d] : full.base_space) {
        CHECK(w != query);
        CHECK(d >= -1e-9);
        CHECK(d <= 2.0 + 1e-9);
    }
    for (std::size_t i = 1; i < full.base_space.size(); ++i) {
        CHECK(full.base_space[i - 1].second <= full.base_space[i].second + 1e-12);
    }

    const NeighborList top2 = nn_probe(*world.model, corpus.vocab, query, 2);
    CHECK(top2.base_space.size() == 2);
    CHECK(top2.base_space[0].first == full.base_space[0].first);

    CHECK_THROWS_AS(nn_probe(*world.model, corpus.vocab,
                             static_cast<WordId>(corpus.vocab.size() + 5), 3),
                    LookupError);
}

TEST_CASE("csv emitters write the documented headers") {
    namespace fs = std::filesystem;
    auto world = fixtures::tiny_world(91);
    const auto dir = fs::temp_directory_path() / "svlr_evalkit_csv";
    fs::create_directories(dir);

    AccuracyReport acc;
    acc.overall = 0.5;
    acc.total = 2;
    acc.by_template["what_fam0"] = 0.5;
    acc.counts["what_fam0"] = 2;
    write_accuracy_csv(acc, dir / "acc.csv");
    std::ifstream in(dir / "acc.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "group,count,accuracy");

    const TransferGrid grid = transfer_grid(*world.model, *world.model, *world.corpus,
                                            {10.0, 1e300}, {20.0, 1e300});
    write_transfer_grid_csv(grid, dir / "grid.csv");
    std::ifstream gin(dir / "grid.csv");
    std::getline(gin, line);
    CHECK(line == "qa_bin,recog_bin,baseline_acc,delta,classes");
    fs::remove_all(dir);
}
