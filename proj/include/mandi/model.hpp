#pragma once

// Per-(market, horizon) bank of 3-class classifiers over the joint window
// features, with alpha-interpolated class weights and leaf co-membership
// evidence retrieval for the tree families.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mandi/error.hpp"
#include "mandi/format.hpp"
#include "mandi/ml/ensemble.hpp"
#include "mandi/ml/linear.hpp"
#include "mandi/ml/tree.hpp"
#include "mandi/ml/weights.hpp"
#include "mandi/parallel.hpp"
#include "mandi/window.hpp"

namespace mandi {

enum class Family { Stay, LogReg, LinearSVM, RandomForest, AdaBoost, GradBoost };

inline const char* to_string(Family f) {
    switch (f) {
        case Family::Stay: return "Stay";
        case Family::LogReg: return "LogReg";
        case Family::LinearSVM: return "LinearSVM";
        case Family::RandomForest: return "RandomForest";
        case Family::AdaBoost: return "AdaBoost";
        case Family::GradBoost: return "GradBoost";
    }
    return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
    for (auto f : {Family::Stay, Family::LogReg, Family::LinearSVM, Family::RandomForest, Family::AdaBoost,
                   Family::GradBoost})
        if (s == to_string(f)) return f;
    return std::nullopt;
}

inline bool is_tree_family(Family f) {
    return f == Family::RandomForest || f == Family::AdaBoost || f == Family::GradBoost;
}

using Hyperparams = std::map<std::string, double>;

/// Defaults for every key a family accepts; other keys are rejected.
inline Hyperparams default_hyperparams(Family f) {
    switch (f) {
        case Family::Stay: return {};
        case Family::LogReg: return {{"l2", 1e-4}, {"epochs", 500}};
        case Family::LinearSVM: return {{"l2", 1e-4}, {"epochs", 20}};
        case Family::RandomForest:
            return {{"trees", 200}, {"max_depth", 12}, {"min_samples_leaf", 1}, {"max_features", 0}, {"bootstrap", 1}};
        case Family::AdaBoost: return {{"rounds", 200}, {"max_depth", 2}};
        case Family::GradBoost:
            return {{"rounds", 300}, {"max_depth", 3}, {"learning_rate", 0.1}, {"subsample", 1.0}, {"min_samples_leaf", 1}};
    }
    return {};
}

struct ModelSpec {
    Family family = Family::Stay;
    Hyperparams hyperparams;  // overrides on top of the family defaults
    std::uint64_t seed = 0;

    /// Defaults merged with overrides, validated.
    Hyperparams resolved() const {
        Hyperparams hp = default_hyperparams(family);
        for (const auto& [k, v] : hyperparams) {
            if (!hp.count(k))
                fail(ErrorKind::InvalidConfig,
                     std::string("model spec: unknown hyperparameter '") + k + "' for " + to_string(family));
            if (!std::isfinite(v)) fail(ErrorKind::InvalidConfig, "model spec: non-finite value for '" + k + "'");
            hp[k] = v;
        }
        auto integral = [&](const char* key, double lo) {
            const double v = hp.at(key);
            if (v != std::floor(v) || v < lo)
                fail(ErrorKind::InvalidConfig, std::string("model spec: '") + key + "' must be an integer >= " +
                                                   format_shortest(lo) + " for " + to_string(family));
        };
        auto in_range = [&](const char* key, double lo, double hi, bool lo_open) {
            const double v = hp.at(key);
            if ((lo_open ? v <= lo : v < lo) || v > hi)
                fail(ErrorKind::InvalidConfig, std::string("model spec: '") + key + "' out of range for " +
                                                   to_string(family));
        };
        switch (family) {
            case Family::Stay: break;
            case Family::LogReg:
                in_range("l2", 0.0, 1e6, false);
                integral("epochs", 0);
                break;
            case Family::LinearSVM:
                in_range("l2", 0.0, 1e6, true);
                integral("epochs", 1);
                break;
            case Family::RandomForest:
                integral("trees", 1);
                integral("max_depth", 0);
                integral("min_samples_leaf", 1);
                integral("max_features", 0);
                in_range("bootstrap", 0.0, 1.0, false);
                integral("bootstrap", 0);
                break;
            case Family::AdaBoost:
                integral("rounds", 1);
                integral("max_depth", 1);
                break;
            case Family::GradBoost:
                integral("rounds", 0);
                integral("max_depth", 0);
                integral("min_samples_leaf", 1);
                in_range("learning_rate", 0.0, 1.0, true);
                in_range("subsample", 0.0, 1.0, true);
                break;
        }
        return hp;
    }

    /// Canonical text used for digests, e.g. "GradBoost{learning_rate=0.1,...}#seed=7".
    std::string canonical() const {
        std::string s = to_string(family);
        s += '{';
        bool first = true;
        for (const auto& [k, v] : resolved()) {
            if (!first) s += ',';
            first = false;
            s += k + "=" + format_shortest(v);
        }
        s += "}#seed=" + std::to_string(seed);
        return s;
    }
    std::string digest() const { return hex64(fnv1a(canonical())); }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// ---------------------------------------------------------------------------
// Trained bank
// ---------------------------------------------------------------------------

struct ConstantClassifier {
    Direction label = Direction::Stay;
};

using Classifier = std::variant<ConstantClassifier, ml::LogRegModel, ml::LinearSvmModel, ml::ForestModel,
                                ml::AdaBoostModel, ml::GradBoostModel>;

inline ml::Distribution classifier_scores(const Classifier& c, std::span<const double> x) {
    return std::visit(
        [&](const auto& model) -> ml::Distribution {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, ConstantClassifier>) {
                ml::Distribution d{};
                d[index_of(model.label)] = 1.0;
                return d;
            } else {
                return model.scores(x);
            }
        },
        c);
}

enum class Degeneracy : std::uint8_t {
    None = 0,
    SingleClass = 1,  // one observed class: predicts it constantly
    NoTargets = 2,    // no observed targets: predicts the global majority class
};

struct OutputModel {
    Classifier classifier;
    std::array<std::size_t, kNumClasses> counts{};  // observed training targets per class
    Degeneracy degeneracy = Degeneracy::None;
    std::vector<std::uint32_t> train_rows;  // evidence rows this output was trained on

    std::array<double, kNumClasses> prior() const {
        const double n = static_cast<double>(counts[0] + counts[1] + counts[2]);
        if (n == 0.0) return {0.0, 0.0, 0.0};
        return {counts[0] / n, counts[1] / n, counts[2] / n};
    }
};

/// Training examples kept for evidence retrieval (tree families only).
struct EvidenceIndex {
    std::vector<Date> anchors;
    ml::Matrix features;
    std::vector<Direction> labels;     // rows x (M*f)
    std::vector<std::uint8_t> masks;   // rows x (M*f)
};

struct TrainedModel {
    ModelSpec spec;
    std::string layout;
    WindowConfig window;
    double alpha = 0.0;
    std::vector<std::string> market_ids;
    std::vector<OutputModel> outputs;  // index m * f + k
    std::optional<EvidenceIndex> evidence;

    std::size_t markets() const { return market_ids.size(); }
    std::size_t horizon() const { return window.f; }
    const OutputModel& output(std::size_t m, std::size_t k) const { return outputs.at(m * window.f + k); }
};

struct TrainOptions {
    WindowConfig window;
    std::vector<std::string> market_ids;  // optional; defaults to m0, m1, ...
    std::size_t workers = 1;
    bool keep_evidence = true;
};

namespace detail {

inline ml::Matrix feature_matrix(std::span<const WindowExample> examples, DoyEncoding doy) {
    const auto& first = examples.front();
    ml::Matrix x(examples.size(), feature_count(first.markets, first.b, first.f, doy));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto fv = flatten_features(examples[i], doy);
        std::copy(fv.values.begin(), fv.values.end(), x.row(i).begin());
    }
    return x;
}

inline std::size_t as_size(const Hyperparams& hp, const char* key) { return static_cast<std::size_t>(hp.at(key)); }

}  // namespace detail

/// Trains one classifier per (market, horizon) on the examples whose target
/// for that output is observed. Deterministic for a given spec seed and
/// independent of `workers`.
inline TrainedModel train(const ModelSpec& spec, std::span<const WindowExample> examples, double alpha,
                          const TrainOptions& opt) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidArgument, "train: alpha must be in [0, 1]");
    if (examples.empty()) fail(ErrorKind::DataError, "train: no training examples");
    const Hyperparams hp = spec.resolved();
    const std::size_t M = examples.front().markets;
    const std::size_t b = examples.front().b;
    const std::size_t f = examples.front().f;
    if (b != opt.window.b || f != opt.window.f)
        fail(ErrorKind::InvalidArgument, "train: examples do not match the window configuration");
    for (const auto& ex : examples)
        if (ex.markets != M || ex.b != b || ex.f != f)
            fail(ErrorKind::InvalidArgument, "train: examples have inconsistent shapes");

    TrainedModel model;
    model.spec = spec;
    model.layout = feature_layout(M, b, f, opt.window.doy);
    model.window = opt.window;
    model.alpha = alpha;
    model.market_ids = opt.market_ids;
    if (model.market_ids.empty())
        for (std::size_t m = 0; m < M; ++m) model.market_ids.push_back("m" + std::to_string(m));
    if (model.market_ids.size() != M) fail(ErrorKind::InvalidArgument, "train: market id count mismatch");

    const ml::Matrix x = detail::feature_matrix(examples, opt.window.doy);
    std::array<std::size_t, kNumClasses> global{};
    for (const auto& ex : examples)
        for (std::size_t o = 0; o < M * f; ++o)
            if (ex.future_mask[o]) ++global[index_of(ex.future_labels[o])];
    const auto global_majority = direction_from_index(
        ml::argmax({static_cast<double>(global[0]), static_cast<double>(global[1]), static_cast<double>(global[2])}));

    const bool needs_index = is_tree_family(spec.family);
    std::optional<ml::ColumnIndex> index;
    if (needs_index) index.emplace(x);

    model.outputs.resize(M * f);
    parallel_for(M * f, opt.workers, [&](std::size_t o) {
        OutputModel& out = model.outputs[o];
        std::vector<std::uint8_t> labels(examples.size(), 0);
        for (std::size_t i = 0; i < examples.size(); ++i) {
            if (!examples[i].future_mask[o]) continue;
            out.train_rows.push_back(static_cast<std::uint32_t>(i));
            labels[i] = static_cast<std::uint8_t>(index_of(examples[i].future_labels[o]));
            ++out.counts[labels[i]];
        }
        const std::size_t present = (out.counts[0] > 0) + (out.counts[1] > 0) + (out.counts[2] > 0);
        if (spec.family == Family::Stay) {
            out.classifier = ConstantClassifier{Direction::Stay};
            return;
        }
        if (present == 0) {
            out.degeneracy = Degeneracy::NoTargets;
            out.classifier = ConstantClassifier{global_majority};
            return;
        }
        if (present == 1) {
            out.degeneracy = Degeneracy::SingleClass;
            const auto only = static_cast<std::size_t>(
                std::find_if(out.counts.begin(), out.counts.end(), [](std::size_t c) { return c > 0; }) -
                out.counts.begin());
            out.classifier = ConstantClassifier{direction_from_index(only)};
            return;
        }

        const auto cw = ml::class_weights(out.counts, alpha);
        std::vector<double> weights(examples.size(), 0.0);
        for (auto r : out.train_rows) weights[r] = cw.weight[labels[r]];
        std::mt19937_64 rng(mix_seed(spec.seed ^ mix_seed(o + 1)));
        const std::span<const std::uint32_t> rows = out.train_rows;

        switch (spec.family) {
            case Family::Stay: break;
            case Family::LogReg:
                out.classifier = ml::fit_logreg(x, labels, weights, rows, hp.at("l2"), detail::as_size(hp, "epochs"));
                break;
            case Family::LinearSVM:
                out.classifier =
                    ml::fit_linear_svm(x, labels, weights, rows, hp.at("l2"), detail::as_size(hp, "epochs"));
                break;
            case Family::RandomForest: {
                ml::ForestParams p;
                p.trees = detail::as_size(hp, "trees");
                p.tree = {detail::as_size(hp, "max_depth"), detail::as_size(hp, "min_samples_leaf"),
                          detail::as_size(hp, "max_features")};
                p.bootstrap = hp.at("bootstrap") != 0.0;
                out.classifier = ml::fit_forest(x, *index, labels, weights, rows, p, rng);
                break;
            }
            case Family::AdaBoost: {
                ml::AdaBoostParams p{detail::as_size(hp, "rounds"), detail::as_size(hp, "max_depth")};
                out.classifier = ml::fit_adaboost(x, *index, labels, weights, rows, p);
                break;
            }
            case Family::GradBoost: {
                ml::GradBoostParams p;
                p.rounds = detail::as_size(hp, "rounds");
                p.max_depth = detail::as_size(hp, "max_depth");
                p.min_samples_leaf = detail::as_size(hp, "min_samples_leaf");
                p.learning_rate = hp.at("learning_rate");
                p.subsample = hp.at("subsample");
                out.classifier = ml::fit_gradboost(x, *index, labels, weights, rows, p, rng);
                break;
            }
        }
    });

    if (needs_index && opt.keep_evidence) {
        EvidenceIndex ev;
        ev.features = x;
        for (const auto& ex : examples) {
            ev.anchors.push_back(ex.anchor);
            ev.labels.insert(ev.labels.end(), ex.future_labels.begin(), ex.future_labels.end());
            ev.masks.insert(ev.masks.end(), ex.future_mask.begin(), ex.future_mask.end());
        }
        model.evidence = std::move(ev);
    } else {
        for (auto& out : model.outputs) out.train_rows.clear();
    }
    return model;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

struct OutputForecast {
    Direction label = Direction::Stay;
    ml::Distribution scores{};
};

struct Forecast {
    std::size_t markets = 0;
    std::size_t horizon = 0;
    std::vector<OutputForecast> outputs;  // index m * horizon + k

    const OutputForecast& at(std::size_t m, std::size_t k) const { return outputs.at(m * horizon + k); }
};

inline void check_layout(const TrainedModel& model, const FeatureVector& features) {
    if (features.layout != model.layout)
        fail(ErrorKind::LayoutMismatch,
             "feature layout '" + features.layout + "' does not match model layout '" + model.layout + "'");
    if (model.evidence && features.values.size() != model.evidence->features.cols)
        fail(ErrorKind::LayoutMismatch, "feature vector has the wrong length");
}

/// Label is the argmax of the normalised scores, ties resolved Up < Down < Stay.
inline Forecast predict(const TrainedModel& model, const FeatureVector& features) {
    check_layout(model, features);
    Forecast fc;
    fc.markets = model.markets();
    fc.horizon = model.horizon();
    fc.outputs.resize(model.outputs.size());
    for (std::size_t o = 0; o < model.outputs.size(); ++o) {
        auto& out = fc.outputs[o];
        out.scores = classifier_scores(model.outputs[o].classifier, features.values);
        out.label = direction_from_index(ml::argmax(out.scores));
    }
    return fc;
}

// ---------------------------------------------------------------------------
// Evidence retrieval
// ---------------------------------------------------------------------------

struct EvidenceItem {
    std::size_t row = 0;  // index into the model's evidence table
    Date anchor;
    double similarity = 0.0;
    Direction outcome = Direction::Stay;  // realised training target for the explained output
};

namespace detail {

struct WeightedTrees {
    std::vector<const ml::Tree*> trees;
    std::vector<double> weights;
};

inline WeightedTrees trees_of(const Classifier& c) {
    WeightedTrees wt;
    if (const auto* f = std::get_if<ml::ForestModel>(&c)) {
        for (const auto& t : f->trees) {
            wt.trees.push_back(&t);
            wt.weights.push_back(1.0);
        }
    } else if (const auto* a = std::get_if<ml::AdaBoostModel>(&c)) {
        for (std::size_t i = 0; i < a->trees.size(); ++i) {
            wt.trees.push_back(&a->trees[i]);
            wt.weights.push_back(a->tree_weights[i]);
        }
    } else if (const auto* g = std::get_if<ml::GradBoostModel>(&c)) {
        for (const auto& t : g->trees) {
            wt.trees.push_back(&t);
            wt.weights.push_back(1.0);
        }
    }
    return wt;
}

}  // namespace detail

/// Ranks the training examples of output (m, k) by the weighted fraction of
/// trees in which they share the query's leaf. Ties go to the earlier anchor.
inline std::vector<EvidenceItem> explain(const TrainedModel& model, const FeatureVector& features, std::size_t m,
                                         std::size_t k, std::size_t top_k) {
    if (!is_tree_family(model.spec.family))
        fail(ErrorKind::InvalidArgument, std::string("explain: ") + to_string(model.spec.family) +
                                             " is not a tree ensemble; evidence needs RandomForest, AdaBoost or "
                                             "GradBoost");
    if (!model.evidence) fail(ErrorKind::InvalidArgument, "explain: model was trained without an evidence index");
    check_layout(model, features);
    if (m >= model.markets() || k >= model.horizon()) fail(ErrorKind::InvalidArgument, "explain: output out of range");
    const auto& out = model.output(m, k);
    const auto wt = detail::trees_of(out.classifier);
    if (wt.trees.empty())
        fail(ErrorKind::InvalidArgument, "explain: output has no trees (degenerate or zero rounds)");

    const auto& ev = *model.evidence;
    std::vector<std::size_t> query_leaf(wt.trees.size());
    double total = 0.0;
    for (std::size_t t = 0; t < wt.trees.size(); ++t) {
        query_leaf[t] = wt.trees[t]->leaf_index(features.values);
        total += wt.weights[t];
    }
    const std::size_t o = m * model.horizon() + k;
    std::vector<EvidenceItem> items;
    items.reserve(out.train_rows.size());
    for (auto r : out.train_rows) {
        const auto x = ev.features.row(r);
        double shared = 0.0;
        for (std::size_t t = 0; t < wt.trees.size(); ++t)
            if (wt.trees[t]->leaf_index(x) == query_leaf[t]) shared += wt.weights[t];
        EvidenceItem item;
        item.row = r;
        item.anchor = ev.anchors[r];
        item.similarity = shared / total;
        item.outcome = ev.labels[r * model.outputs.size() + o];
        items.push_back(item);
    }
    std::stable_sort(items.begin(), items.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.anchor != b.anchor) return a.anchor < b.anchor;
        return a.row < b.row;
    });
    if (items.size() > top_k) items.resize(top_k);
    return items;
}

}  // namespace mandi
