#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "mandi/model.hpp"
#include "mandi/model_io.hpp"
#include "test_support.hpp"

using namespace mandi;

namespace {

struct Toy {
    ml::Matrix x;
    std::vector<std::uint8_t> y;
    std::vector<double> w;
    std::vector<std::uint32_t> rows;
};

/// Noisy three-class problem on a few continuous features.
Toy toy_problem(std::uint64_t seed, std::size_t n, std::size_t F, double noise = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Toy t;
    t.x = ml::Matrix(n, F);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < F; ++j) t.x.row(i)[j] = g(rng);
        const double s = t.x(i, 0) + 0.5 * (F > 1 ? t.x(i, 1) : 0.0);
        std::uint8_t c = s > 0.4 ? 0 : s < -0.4 ? 1 : 2;
        if (u(rng) < noise) c = static_cast<std::uint8_t>(rng() % 3);
        t.y.push_back(c);
        t.w.push_back(0.5 + u(rng));
        t.rows.push_back(static_cast<std::uint32_t>(i));
    }
    return t;
}

double weighted_gini_score(const Toy& t, std::span<const std::uint32_t> left, std::span<const std::uint32_t> right) {
    auto part = [&](std::span<const std::uint32_t> rs) {
        double s[3] = {0, 0, 0}, W = 0;
        for (auto r : rs) {
            s[t.y[r]] += t.w[r];
            W += t.w[r];
        }
        return W > 0 ? (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) / W : 0.0;
    };
    return part(left) + part(right);
}

std::vector<WindowExample> small_examples(std::uint64_t seed, std::size_t M = 2, std::size_t D = 80,
                                          WindowConfig cfg = {3, 2, 0.0, DoyEncoding::Raw}) {
    std::mt19937_64 rng(seed);
    return build_examples(testutil::random_panel(rng, M, D, 0.15), cfg);
}

TrainOptions opts(WindowConfig cfg = {3, 2, 0.0, DoyEncoding::Raw}, std::size_t workers = 1) {
    TrainOptions o;
    o.window = cfg;
    o.workers = workers;
    return o;
}

std::vector<ModelSpec> all_families() {
    return {
        {Family::Stay, {}, 1},
        {Family::LogReg, {{"epochs", 50}}, 2},
        {Family::LinearSVM, {{"epochs", 5}}, 3},
        {Family::RandomForest, {{"trees", 15}, {"max_depth", 5}}, 4},
        {Family::AdaBoost, {{"rounds", 15}}, 5},
        {Family::GradBoost, {{"rounds", 10}, {"subsample", 0.8}}, 6},
    };
}

}  // namespace

TEST(ClassWeights, EndpointLaws) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> c(1, 500);
    for (int trial = 0; trial < 500; ++trial) {
        const std::array<std::size_t, 3> counts{c(rng), c(rng), c(rng)};
        const auto w0 = ml::class_weights(counts, 0.0);
        for (double v : w0.weight) EXPECT_EQ(v, 1.0);
        const auto w1 = ml::class_weights(counts, 1.0);
        const double n = static_cast<double>(counts[0] + counts[1] + counts[2]);
        double mean = 0;
        for (std::size_t k = 0; k < 3; ++k) mean += static_cast<double>(counts[k]) * w1.weight[k];
        EXPECT_NEAR(mean / n, 1.0, 8 * std::numeric_limits<double>::epsilon());
        // Balanced: each class carries the same total weight.
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(static_cast<double>(counts[k]) * w1.weight[k], n / 3.0, 1e-9 * n);
    }
}

TEST(ClassWeights, InterpolatesAndMonotoneForMinority) {
    const std::array<std::size_t, 3> counts{10, 30, 160};
    double prev = 0;
    for (int i = 0; i <= 10; ++i) {
        const double a = i / 10.0;
        const auto w = ml::class_weights(counts, a);
        EXPECT_DOUBLE_EQ(w.weight[0], (1 - a) + a * 200.0 / 30.0);
        EXPECT_GE(w.weight[0], prev);
        prev = w.weight[0];
        EXPECT_LE(w.weight[2], 1.0);
    }
}

TEST(ClassWeights, AbsentClassAndRejections) {
    const auto w = ml::class_weights(std::array<std::size_t, 3>{0, 5, 5}, 1.0);
    EXPECT_TRUE(w.absent[0]);
    EXPECT_FALSE(w.absent[1]);
    EXPECT_EQ(w.weight[0], ml::kAbsentClassWeight);
    EXPECT_EQ(ml::class_weights(std::array<std::size_t, 3>{0, 5, 5}, 0.25).weight[0], 0.75);
    EXPECT_THROW(ml::class_weights(std::array<std::size_t, 3>{0, 0, 0}, 0.5), Error);
    EXPECT_THROW(ml::class_weights(std::array<std::size_t, 3>{1, 1, 1}, 1.5), Error);
    const std::vector<Direction> labels{Direction::Up, Direction::Stay, Direction::Stay};
    EXPECT_DOUBLE_EQ(ml::class_weights(labels, 1.0)[Direction::Up], 1.0);
    EXPECT_DOUBLE_EQ(ml::class_weights(labels, 1.0)[Direction::Stay], 0.5);
}

TEST(Tree, StumpFindsExhaustiveBestSplit) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto t = toy_problem(seed, 60, 4);
        const ml::ColumnIndex index(t.x);
        const auto fit = ml::fit_classification_tree(index, t.y, t.w, t.rows, {1, 1, 0});
        double best = -1;
        for (std::size_t j = 0; j < 4; ++j)
            for (std::size_t i = 0; i < 60; ++i) {
                std::vector<std::uint32_t> l, r;
                for (auto row : t.rows) (t.x(row, j) <= t.x(i, j) ? l : r).push_back(row);
                if (l.empty() || r.empty()) continue;
                best = std::max(best, weighted_gini_score(t, l, r));
            }
        ASSERT_EQ(fit.tree.nodes.size(), 3u);
        const auto& root = fit.tree.nodes[0];
        std::vector<std::uint32_t> l, r;
        for (auto row : t.rows) (t.x(row, root.feature) <= root.threshold ? l : r).push_back(row);
        EXPECT_NEAR(weighted_gini_score(t, l, r), best, 1e-9) << seed;
    }
}

TEST(Tree, UnboundedFitsTrainingSetExactly) {
    const auto t = toy_problem(5, 200, 3, 0.5);
    const ml::ColumnIndex index(t.x);
    const auto fit = ml::fit_classification_tree(index, t.y, t.w, t.rows, {0, 1, 0});
    for (auto r : t.rows) {
        EXPECT_EQ(ml::argmax(fit.tree.leaf(t.x.row(r)).value), t.y[r]);
        EXPECT_EQ(fit.leaf_of_row[r], static_cast<std::int32_t>(fit.tree.leaf_index(t.x.row(r))));
    }
}

TEST(Tree, DepthAndLeafSizeLimits) {
    const auto t = toy_problem(6, 300, 3, 0.5);
    const ml::ColumnIndex index(t.x);
    for (std::size_t depth : {1u, 2u, 4u}) {
        const auto fit = ml::fit_classification_tree(index, t.y, t.w, t.rows, {depth, 1, 0});
        EXPECT_LE(fit.tree.depth(), depth);
    }
    const auto fit = ml::fit_classification_tree(index, t.y, t.w, t.rows, {0, 20, 0});
    std::vector<int> per_leaf(fit.tree.nodes.size(), 0);
    for (auto r : t.rows) ++per_leaf[fit.tree.leaf_index(t.x.row(r))];
    for (std::size_t i = 0; i < per_leaf.size(); ++i)
        if (fit.tree.nodes[i].is_leaf()) {
            EXPECT_GE(per_leaf[i], 20);
        }
}

TEST(LogReg, GradientMatchesFiniteDifferences) {
    const auto t = toy_problem(7, 40, 3);
    const ml::LogRegProblem p{t.x, t.y, t.w, 0.01};
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0, 0.5);
    std::vector<double> theta(p.dim()), grad(p.dim());
    for (auto& v : theta) v = g(rng);
    p.gradient(theta, grad);
    for (std::size_t k = 0; k < p.dim(); ++k) {
        const double h = 1e-6;
        auto plus = theta, minus = theta;
        plus[k] += h;
        minus[k] -= h;
        EXPECT_NEAR(grad[k], (p.objective(plus) - p.objective(minus)) / (2 * h), 1e-7) << k;
    }
}

TEST(LogReg, ObjectiveNonIncreasingAndLearns) {
    const auto t = toy_problem(8, 300, 3, 0.1);
    const auto m = ml::fit_logreg(t.x, t.y, t.w, t.rows, 1e-4, 200);
    for (std::size_t i = 1; i < m.objective_history.size(); ++i)
        EXPECT_LE(m.objective_history[i], m.objective_history[i - 1]);
    std::size_t correct = 0;
    for (auto r : t.rows) correct += ml::argmax(m.scores(t.x.row(r))) == t.y[r];
    EXPECT_GT(correct, 200u);
}

TEST(LinearSvm, LearnsSeparableStructure) {
    const auto t = toy_problem(9, 300, 3, 0.0);
    const auto m = ml::fit_linear_svm(t.x, t.y, t.w, t.rows, 1e-4, 20);
    std::size_t correct = 0;
    for (auto r : t.rows) correct += ml::argmax(m.scores(t.x.row(r))) == t.y[r];
    EXPECT_GT(correct, 220u);
}

TEST(GradBoost, DevianceNonIncreasing) {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        const auto t = toy_problem(seed, 200, 4);
        const ml::ColumnIndex index(t.x);
        std::mt19937_64 rng(seed);
        const auto m = ml::fit_gradboost(t.x, index, t.y, t.w, t.rows, {40, 3, 1, 0.1, 1.0}, rng);
        ASSERT_EQ(m.deviance.size(), 41u);
        EXPECT_EQ(m.trees.size(), 120u);
        for (std::size_t i = 1; i < m.deviance.size(); ++i) EXPECT_LE(m.deviance[i], m.deviance[i - 1] + 1e-12);
        EXPECT_LT(m.deviance.back(), m.deviance.front());
    }
}

TEST(GradBoost, ZeroRoundsPredictsWeightedPrior) {
    const auto t = toy_problem(13, 100, 2);
    const ml::ColumnIndex index(t.x);
    std::mt19937_64 rng(1);
    const auto m = ml::fit_gradboost(t.x, index, t.y, t.w, t.rows, {0, 3, 1, 0.1, 1.0}, rng);
    ml::Distribution prior{};
    double total = 0;
    for (auto r : t.rows) {
        prior[t.y[r]] += t.w[r];
        total += t.w[r];
    }
    const auto s = m.scores(t.x.row(0));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(s[c], prior[c] / total, 1e-12);
}

TEST(AdaBoost, BeatsChanceAndScoresSumToOne) {
    const auto t = toy_problem(14, 300, 3, 0.1);
    const ml::ColumnIndex index(t.x);
    const auto m = ml::fit_adaboost(t.x, index, t.y, t.w, t.rows, {30, 2});
    ASSERT_FALSE(m.trees.empty());
    for (double e : m.learner_errors) EXPECT_LT(e, 2.0 / 3.0);
    std::size_t correct = 0;
    for (auto r : t.rows) {
        const auto s = m.scores(t.x.row(r));
        EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-12);
        correct += ml::argmax(s) == t.y[r];
    }
    EXPECT_GT(correct, 200u);
}

TEST(Forest, ProbabilitiesAndSeedSensitivity) {
    const auto t = toy_problem(15, 200, 5);
    const ml::ColumnIndex index(t.x);
    std::mt19937_64 r1(1), r2(1), r3(2);
    const ml::ForestParams p{25, {6, 1, 0}, true};
    const auto a = ml::fit_forest(t.x, index, t.y, t.w, t.rows, p, r1);
    const auto b = ml::fit_forest(t.x, index, t.y, t.w, t.rows, p, r2);
    const auto c = ml::fit_forest(t.x, index, t.y, t.w, t.rows, p, r3);
    EXPECT_EQ(a.trees, b.trees);
    EXPECT_NE(a.trees, c.trees);
    ASSERT_TRUE(a.oob_accuracy);
    EXPECT_GT(*a.oob_accuracy, 0.4);
    const auto s = a.scores(t.x.row(3));
    EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-12);
}

TEST(Explain, HandEnumeratedCoLeafFractions) {
    auto stump = [](std::int32_t feature, double threshold) {
        ml::Tree t;
        t.nodes.resize(3);
        t.nodes[0].feature = feature;
        t.nodes[0].threshold = threshold;
        t.nodes[0].left = 1;
        t.nodes[0].right = 2;
        t.nodes[1].value = {1, 0, 0};
        t.nodes[2].value = {0, 0, 1};
        return t;
    };
    ml::ForestModel forest;
    forest.trees = {stump(0, 0.5), stump(0, 1.5), stump(1, 0.5)};

    TrainedModel model;
    model.spec.family = Family::RandomForest;
    model.layout = "toy";
    model.window = {1, 1, 0.0, DoyEncoding::Raw};
    model.market_ids = {"a"};
    OutputModel out;
    out.classifier = forest;
    out.train_rows = {0, 1, 2, 3};
    model.outputs.push_back(out);
    EvidenceIndex ev;
    ev.features = ml::Matrix(4, 2);
    const double rows[4][2] = {{0, 0}, {1, 0}, {2, 1}, {0, 1}};
    for (std::size_t i = 0; i < 4; ++i) {
        ev.features.row(i)[0] = rows[i][0];
        ev.features.row(i)[1] = rows[i][1];
        ev.anchors.push_back(make_date(2015, 1, 1) + std::chrono::days{static_cast<int>(i)});
        ev.labels.push_back(direction_from_index(i % 3));
        ev.masks.push_back(1);
    }
    model.evidence = ev;

    const FeatureVector query{"toy", {0, 0}};
    const auto items = explain(model, query, 0, 0, 10);
    ASSERT_EQ(items.size(), 4u);
    EXPECT_EQ(items[0].row, 0u);
    EXPECT_DOUBLE_EQ(items[0].similarity, 1.0);
    EXPECT_EQ(items[1].row, 1u);  // ties with row 3 at 2/3, earlier anchor first
    EXPECT_DOUBLE_EQ(items[1].similarity, 2.0 / 3.0);
    EXPECT_EQ(items[2].row, 3u);
    EXPECT_DOUBLE_EQ(items[2].similarity, 2.0 / 3.0);
    EXPECT_EQ(items[3].row, 2u);
    EXPECT_DOUBLE_EQ(items[3].similarity, 0.0);
    EXPECT_EQ(items[1].outcome, Direction::Down);
    EXPECT_EQ(explain(model, query, 0, 0, 2).size(), 2u);
    EXPECT_THROW(explain(model, {"other", {0, 0}}, 0, 0, 2), Error);
    EXPECT_THROW(explain(model, query, 1, 0, 2), Error);
}

TEST(Explain, RejectsNonTreeFamilies) {
    const auto ex = small_examples(16);
    const auto m = train({Family::LogReg, {{"epochs", 5}}, 1}, ex, 0.5, opts());
    try {
        explain(m, flatten_features(ex[0]), 0, 0, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
}

TEST(Explain, SimilaritiesInUnitIntervalForTrainedEnsembles) {
    const auto ex = small_examples(17);
    for (const auto& spec : all_families()) {
        if (!is_tree_family(spec.family)) continue;
        const auto m = train(spec, ex, 0.5, opts());
        const auto items = explain(m, inference_features(ex.back()), 1, 1, 5);
        ASSERT_FALSE(items.empty());
        for (std::size_t i = 0; i < items.size(); ++i) {
            EXPECT_GE(items[i].similarity, 0.0);
            EXPECT_LE(items[i].similarity, 1.0);
            if (i) {
                EXPECT_LE(items[i].similarity, items[i - 1].similarity);
            }
        }
    }
}

TEST(Model, SaveLoadByteIdenticalAndSamePredictions) {
    const auto ex = small_examples(18);
    const auto path = std::filesystem::temp_directory_path() / "mandi_test_model.mdl";
    for (const auto& spec : all_families()) {
        const auto m = train(spec, ex, 0.7, opts());
        save_model(m, path.string());
        const auto loaded = load_model(path.string());
        EXPECT_EQ(serialize_model(loaded), serialize_model(m)) << to_string(spec.family);
        for (const auto& e : ex) {
            const auto a = predict(m, flatten_features(e));
            const auto b = predict(loaded, flatten_features(e));
            for (std::size_t o = 0; o < a.outputs.size(); ++o) {
                EXPECT_EQ(a.outputs[o].label, b.outputs[o].label);
                EXPECT_EQ(a.outputs[o].scores, b.outputs[o].scores);
            }
        }
    }
    std::filesystem::remove(path);
}

TEST(Model, VersionMismatchAndCorruption) {
    const auto ex = small_examples(19);
    auto text = serialize_model(train({Family::GradBoost, {{"rounds", 2}}, 1}, ex, 0.0, opts()));
    auto bumped = text;
    bumped.replace(bumped.find("v1"), 2, "v2");
    try {
        parse_model(bumped);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::VersionMismatch);
    }
    EXPECT_THROW(parse_model(text.substr(0, text.size() / 2)), Error);
    EXPECT_THROW(parse_model("garbage"), Error);
    try {
        load_model("/nonexistent/model.mdl");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingInput);
    }
}

TEST(Model, LayoutMismatchRejected) {
    const auto ex = small_examples(20);
    const auto m = train({Family::GradBoost, {{"rounds", 2}}, 1}, ex, 0.0, opts());
    const auto cyclic = flatten_features(ex[0], DoyEncoding::Cyclic);
    try {
        predict(m, cyclic);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::LayoutMismatch);
    }
    auto wrong = flatten_features(ex[0]);
    wrong.values.pop_back();
    EXPECT_THROW(predict(m, wrong), Error);
}

TEST(Model, IndependentOfWorkerCountAndSeeded) {
    const auto ex = small_examples(21, 3);
    for (const auto& spec : all_families()) {
        const auto a = serialize_model(train(spec, ex, 0.5, opts({3, 2, 0.0, DoyEncoding::Raw}, 1)));
        const auto b = serialize_model(train(spec, ex, 0.5, opts({3, 2, 0.0, DoyEncoding::Raw}, 4)));
        EXPECT_EQ(a, b) << to_string(spec.family);
    }
    auto rf = all_families()[3];
    const auto a = serialize_model(train(rf, ex, 0.5, opts()));
    rf.seed = 99;
    EXPECT_NE(serialize_model(train(rf, ex, 0.5, opts())), a);
}

TEST(Model, DegenerateOutputs) {
    // Market 0 never moves; market 1 is never observed after day 0.
    std::vector<std::optional<double>> prices;
    for (int d = 0; d < 30; ++d) prices.push_back(100.0);
    for (int d = 0; d < 30; ++d) prices.push_back(d == 0 ? std::optional<double>(100.0) : std::nullopt);
    for (int d = 0; d < 30; ++d) prices.push_back(100.0 + (d * 37 % 11));
    const auto panel = AlignedPanel::from_prices({"flat", "gone", "busy"},
                                                 {make_date(2015, 1, 1), make_date(2015, 1, 30)}, prices);
    const WindowConfig cfg{3, 2, 0.0, DoyEncoding::Raw};
    const auto ex = build_examples(panel, cfg);
    auto o = opts(cfg);
    o.market_ids = panel.market_ids();
    const auto m = train({Family::GradBoost, {{"rounds", 3}}, 1}, ex, 1.0, o);
    EXPECT_EQ(m.output(0, 0).degeneracy, Degeneracy::SingleClass);
    EXPECT_EQ(m.output(1, 1).degeneracy, Degeneracy::NoTargets);
    EXPECT_EQ(m.output(2, 0).degeneracy, Degeneracy::None);
    const auto fc = predict(m, flatten_features(ex[0]));
    EXPECT_EQ(fc.at(0, 0).label, Direction::Stay);
    std::array<std::size_t, 3> global{};
    for (const auto& e : ex)
        for (std::size_t i = 0; i < e.future_mask.size(); ++i)
            if (e.future_mask[i]) ++global[index_of(e.future_labels[i])];
    const auto majority = direction_from_index(ml::argmax({double(global[0]), double(global[1]), double(global[2])}));
    EXPECT_EQ(fc.at(1, 1).label, majority);
    for (const auto& out : fc.outputs) EXPECT_NEAR(out.scores[0] + out.scores[1] + out.scores[2], 1.0, 1e-12);
}

TEST(Model, StayBaselineAndSpecValidation) {
    const auto ex = small_examples(22);
    const auto m = train({Family::Stay, {}, 0}, ex, 0.3, opts());
    for (const auto& out : predict(m, flatten_features(ex[5])).outputs) EXPECT_EQ(out.label, Direction::Stay);
    EXPECT_THROW((ModelSpec{Family::GradBoost, {{"depth", 3}}, 0}.resolved()), Error);
    EXPECT_THROW((ModelSpec{Family::GradBoost, {{"learning_rate", 0}}, 0}.resolved()), Error);
    EXPECT_THROW((ModelSpec{Family::RandomForest, {{"trees", 2.5}}, 0}.resolved()), Error);
    EXPECT_EQ((ModelSpec{Family::AdaBoost, {}, 3}.canonical()), "AdaBoost{max_depth=2,rounds=200}#seed=3");
    EXPECT_THROW(train({Family::Stay, {}, 0}, ex, 1.5, opts()), Error);
    EXPECT_THROW(train({Family::Stay, {}, 0}, {}, 0.5, opts()), Error);
}

TEST(Model, BalancedWeightsRaiseMinorityPredictions) {
    // Sticky prices: Stay dominates the targets.
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::optional<double>> prices;
    for (int m = 0; m < 2; ++m) {
        double p = 1000;
        for (int d = 0; d < 300; ++d) {
            if (u(rng) < 0.25) p = std::round(p * (1 + (u(rng) - 0.5) * 0.1));
            prices.push_back(p);
        }
    }
    const auto panel = AlignedPanel::from_prices({"a", "b"}, {make_date(2014, 1, 1), make_date(2014, 10, 27)}, prices);
    const WindowConfig cfg{5, 1, 0.0, DoyEncoding::Raw};
    const auto ex = build_examples(panel, cfg);
    const ModelSpec spec{Family::RandomForest, {{"trees", 20}, {"max_depth", 4}}, 1};
    auto non_stay = [&](double alpha) {
        const auto m = train(spec, ex, alpha, opts(cfg));
        std::size_t n = 0;
        for (const auto& e : ex)
            for (const auto& o : predict(m, inference_features(e)).outputs) n += o.label != Direction::Stay;
        return n;
    };
    EXPECT_GT(non_stay(1.0), non_stay(0.0));
}
