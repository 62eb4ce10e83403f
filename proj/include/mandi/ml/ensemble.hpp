#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mandi/ml/linear.hpp"
#include "mandi/ml/tree.hpp"

namespace mandi::ml {

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct ForestParams {
    std::size_t trees = 200;
    TreeParams tree{12, 1, 0};  // max_features 0 here means sqrt(F)
    bool bootstrap = true;
};

struct ForestModel {
    std::vector<Tree> trees;
    std::optional<double> oob_accuracy;  // weighted; not used for prediction

    /// Mean of the leaf class distributions over all trees.
    Distribution scores(std::span<const double> x) const {
        Distribution s{};
        for (const auto& t : trees) {
            const auto& v = t.leaf(x).value;
            for (std::size_t c = 0; c < kNumClasses; ++c) s[c] += v[c];
        }
        for (auto& v : s) v /= static_cast<double>(trees.size());
        return s;
    }
};

inline ForestModel fit_forest(const Matrix& x, const ColumnIndex& index, std::span<const std::uint8_t> labels,
                              std::span<const double> weights, std::span<const std::uint32_t> rows,
                              const ForestParams& params, std::mt19937_64& rng) {
    ForestModel model;
    TreeParams tp = params.tree;
    if (tp.max_features == 0)
        tp.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols))));

    std::vector<double> tree_w(x.rows, 0.0);
    std::vector<std::uint32_t> counts(x.rows, 0);
    Matrix oob_votes(x.rows, kNumClasses);
    std::vector<std::uint8_t> ever_oob(x.rows, 0);
    std::vector<std::uint32_t> in_bag;
    for (std::size_t t = 0; t < params.trees; ++t) {
        std::fill(counts.begin(), counts.end(), 0u);
        if (params.bootstrap) {
            for (std::size_t i = 0; i < rows.size(); ++i) ++counts[rows[rng() % rows.size()]];
        } else {
            for (auto r : rows) counts[r] = 1;
        }
        in_bag.clear();
        for (auto r : rows) {
            tree_w[r] = weights[r] * counts[r];
            if (counts[r] > 0) in_bag.push_back(r);
        }
        auto fitted = fit_classification_tree(index, labels, tree_w, in_bag, tp, &rng);
        for (auto r : rows) {
            if (counts[r] > 0) continue;
            ever_oob[r] = 1;
            const auto& v = fitted.tree.leaf(x.row(r)).value;
            for (std::size_t c = 0; c < kNumClasses; ++c) oob_votes.data[r * kNumClasses + c] += v[c];
        }
        model.trees.push_back(std::move(fitted.tree));
    }
    double correct = 0.0, total = 0.0;
    for (auto r : rows) {
        if (!ever_oob[r]) continue;
        Distribution d{oob_votes(r, 0), oob_votes(r, 1), oob_votes(r, 2)};
        total += weights[r];
        if (argmax(d) == labels[r]) correct += weights[r];
    }
    if (total > 0.0) model.oob_accuracy = correct / total;
    return model;
}

// ---------------------------------------------------------------------------
// AdaBoost (SAMME)
// ---------------------------------------------------------------------------

struct AdaBoostParams {
    std::size_t rounds = 200;
    std::size_t max_depth = 2;
};

struct AdaBoostModel {
    std::vector<Tree> trees;
    std::vector<double> tree_weights;
    std::vector<double> learner_errors;  // weighted training error of each kept learner
    std::uint8_t fallback = index_of(Direction::Stay);  // used when no learner was kept

    /// Tree-weight share voting for each class; sums to 1.
    Distribution scores(std::span<const double> x) const {
        Distribution s{};
        if (trees.empty()) {
            s[fallback] = 1.0;
            return s;
        }
        double total = 0.0;
        for (std::size_t t = 0; t < trees.size(); ++t) {
            s[argmax(trees[t].leaf(x).value)] += tree_weights[t];
            total += tree_weights[t];
        }
        for (auto& v : s) v /= total;
        return s;
    }
};

inline AdaBoostModel fit_adaboost(const Matrix& x, const ColumnIndex& index, std::span<const std::uint8_t> labels,
                                  std::span<const double> weights, std::span<const std::uint32_t> rows,
                                  const AdaBoostParams& params) {
    constexpr double K = static_cast<double>(kNumClasses);
    AdaBoostModel model;
    std::vector<double> dist(x.rows, 0.0);
    double total = 0.0;
    Distribution class_mass{};
    for (auto r : rows) {
        dist[r] = weights[r];
        total += weights[r];
        class_mass[labels[r]] += weights[r];
    }
    for (auto r : rows) dist[r] /= total;
    model.fallback = static_cast<std::uint8_t>(argmax(class_mass));

    const TreeParams tp{params.max_depth, 1, 0};
    std::vector<std::uint8_t> miss(x.rows, 0);
    for (std::size_t round = 0; round < params.rounds; ++round) {
        auto fitted = fit_classification_tree(index, labels, dist, rows, tp);
        double err = 0.0, mass = 0.0;
        for (auto r : rows) {
            const auto& leaf = fitted.tree.nodes[static_cast<std::size_t>(fitted.leaf_of_row[r])];
            miss[r] = argmax(leaf.value) != labels[r];
            mass += dist[r];
            if (miss[r]) err += dist[r];
        }
        err /= mass;
        if (err >= (K - 1.0) / K) break;
        if (err <= 1e-12) {
            // A perfect learner dominates; keep it and stop.
            model.trees.push_back(std::move(fitted.tree));
            model.tree_weights.push_back(1.0);
            model.learner_errors.push_back(err);
            break;
        }
        const double alpha = std::log((1.0 - err) / err) + std::log(K - 1.0);
        model.trees.push_back(std::move(fitted.tree));
        model.tree_weights.push_back(alpha);
        model.learner_errors.push_back(err);
        double z = 0.0;
        for (auto r : rows) {
            if (miss[r]) dist[r] *= std::exp(alpha);
            z += dist[r];
        }
        for (auto r : rows) dist[r] /= z;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Gradient boosting, multinomial deviance
// ---------------------------------------------------------------------------

struct GradBoostParams {
    std::size_t rounds = 300;
    std::size_t max_depth = 3;
    std::size_t min_samples_leaf = 1;
    double learning_rate = 0.1;
    double subsample = 1.0;
};

struct GradBoostModel {
    Distribution initial{};            // log of the weighted class priors
    double learning_rate = 0.1;
    std::vector<Tree> trees;           // round-major: trees[3*r + c] updates class c
    std::vector<double> deviance;      // weighted mean training deviance, before round 1 and after each round

    Distribution raw_scores(std::span<const double> x) const {
        Distribution f = initial;
        for (std::size_t t = 0; t < trees.size(); ++t) f[t % kNumClasses] += learning_rate * trees[t].leaf(x).value[0];
        return f;
    }
    Distribution scores(std::span<const double> x) const { return softmax(raw_scores(x)); }
};

inline double weighted_deviance(const std::vector<Distribution>& f, std::span<const std::uint8_t> labels,
                                std::span<const double> weights, std::span<const std::uint32_t> rows) {
    double loss = 0.0, total = 0.0;
    for (auto r : rows) {
        const auto& z = f[r];
        const double m = std::max({z[0], z[1], z[2]});
        const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
        loss += weights[r] * (lse - z[labels[r]]);
        total += weights[r];
    }
    return loss / total;
}

/// Friedman's K-class procedure: per round, one least-squares tree per class
/// on the residuals y_k - p_k, leaves set by one Newton step
/// (K-1)/K * sum(w r) / sum(w |r| (1-|r|)).
inline GradBoostModel fit_gradboost(const Matrix& x, const ColumnIndex& index, std::span<const std::uint8_t> labels,
                                    std::span<const double> weights, std::span<const std::uint32_t> rows,
                                    const GradBoostParams& params, std::mt19937_64& rng) {
    constexpr double K = static_cast<double>(kNumClasses);
    GradBoostModel model;
    model.learning_rate = params.learning_rate;

    Distribution prior{};
    double total = 0.0;
    for (auto r : rows) {
        prior[labels[r]] += weights[r];
        total += weights[r];
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) model.initial[c] = std::log(std::max(prior[c] / total, 1e-6));

    std::vector<Distribution> f(x.rows, model.initial);
    model.deviance.push_back(weighted_deviance(f, labels, weights, rows));

    std::vector<double> residual(x.rows, 0.0);
    std::vector<Distribution> prob(x.rows);
    std::vector<std::uint32_t> sample(rows.begin(), rows.end());
    const TreeParams tp{params.max_depth, params.min_samples_leaf, 0};
    const bool subsampling = params.subsample < 1.0;

    for (std::size_t round = 0; round < params.rounds; ++round) {
        for (auto r : rows) prob[r] = softmax(f[r]);
        if (subsampling) {
            std::vector<std::uint32_t> shuffled(rows.begin(), rows.end());
            for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng() % i]);
            const auto keep = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(rows.size()))));
            shuffled.resize(keep);
            std::sort(shuffled.begin(), shuffled.end());
            sample = std::move(shuffled);
        }
        std::array<Tree, kNumClasses> round_trees;
        std::array<std::vector<std::int32_t>, kNumClasses> leaf_rows;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            for (auto r : rows) residual[r] = (labels[r] == c ? 1.0 : 0.0) - prob[r][c];
            const SquaredErrorCriterion crit{residual, weights};
            auto newton = [&](std::span<const std::uint32_t> leaf) {
                double num = 0.0, den = 0.0;
                for (auto r : leaf) {
                    const double a = std::fabs(residual[r]);
                    num += weights[r] * residual[r];
                    den += weights[r] * a * (1.0 - a);
                }
                Distribution v{};
                v[0] = den > 1e-12 ? (K - 1.0) / K * num / den : 0.0;
                return v;
            };
            auto fitted = fit_tree(index, crit, tp, sample, newton);
            round_trees[c] = std::move(fitted.tree);
            leaf_rows[c] = std::move(fitted.leaf_of_row);
        }
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const auto& tree = round_trees[c];
            for (auto r : rows) {
                const auto leaf = leaf_rows[c][r] >= 0 ? static_cast<std::size_t>(leaf_rows[c][r])
                                                       : tree.leaf_index(x.row(r));
                f[r][c] += params.learning_rate * tree.nodes[leaf].value[0];
            }
            model.trees.push_back(std::move(round_trees[c]));
        }
        model.deviance.push_back(weighted_deviance(f, labels, weights, rows));
    }
    return model;
}

}  // namespace mandi::ml
