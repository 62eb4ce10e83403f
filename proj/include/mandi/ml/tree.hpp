#pragma once

// CART trees on dense features.
//
// Split search is exact: every feature's rows are presorted once, each node
// owns a contiguous range in every sorted list, and candidate thresholds are
// midpoints between consecutive distinct values. Ties between candidates go
// to the lower feature index, then the lower threshold. Rows route left when
// x[feature] <= threshold.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "mandi/error.hpp"
#include "mandi/panel.hpp"

namespace mandi::ml {

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

using Distribution = std::array<double, kNumClasses>;

/// Index of the largest entry; ties resolve to the lowest index (Up < Down < Stay).
inline std::size_t argmax(const Distribution& d) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
        if (d[c] > d[best]) best = c;
    return best;
}

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    Distribution value{};  // class distribution, or the regression output in value[0]

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // root at 0

    std::size_t leaf_index(std::span<const double> x) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const auto& n = nodes[i];
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return i;
    }
    const TreeNode& leaf(std::span<const double> x) const { return nodes[leaf_index(x)]; }

    std::size_t depth() const { return depth_from(0); }
    std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
    }

    friend bool operator==(const Tree&, const Tree&) = default;

private:
    std::size_t depth_from(std::size_t i) const {
        if (nodes[i].is_leaf()) return 0;
        return 1 + std::max(depth_from(static_cast<std::size_t>(nodes[i].left)),
                            depth_from(static_cast<std::size_t>(nodes[i].right)));
    }
};

/// Column-major copy of a matrix plus each feature's presorted row order.
/// Built once per training set and shared by every tree fitted on it.
class ColumnIndex {
public:
    explicit ColumnIndex(const Matrix& x) : rows_(x.rows), cols_(x.cols), values_(x.rows * x.cols) {
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) values_[j * rows_ + i] = x(i, j);
        std::vector<std::uint32_t> order(rows_);
        for (std::size_t j = 0; j < cols_; ++j) {
            const double* col = values_.data() + j * rows_;
            std::iota(order.begin(), order.end(), 0u);
            std::stable_sort(order.begin(), order.end(),
                             [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
            if (rows_ == 0 || col[order.front()] == col[order.back()]) continue;  // constant column
            active_.push_back(static_cast<std::uint32_t>(j));
            sorted_.insert(sorted_.end(), order.begin(), order.end());
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    /// Features that are not constant over the whole matrix, ascending.
    const std::vector<std::uint32_t>& active() const { return active_; }
    std::span<const std::uint32_t> sorted(std::size_t active_pos) const {
        return {sorted_.data() + active_pos * rows_, rows_};
    }
    const double* column(std::size_t feature) const { return values_.data() + feature * rows_; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> values_;
    std::vector<std::uint32_t> active_;
    std::vector<std::uint32_t> sorted_;
};

struct TreeParams {
    std::size_t max_depth = 0;  // 0 = unbounded
    std::size_t min_samples_leaf = 1;
    std::size_t max_features = 0;  // features tried per split; 0 = all
};

/// Weighted Gini impurity. Minimising sum_child W * gini is the same as
/// maximising sum_child sum_c w_c^2 / W.
struct GiniCriterion {
    using Stats = std::array<double, kNumClasses>;

    std::span<const std::uint8_t> labels;
    std::span<const double> weights;

    void add(Stats& s, std::uint32_t row) const { s[labels[row]] += weights[row]; }
    static Stats minus(const Stats& a, const Stats& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
    static double score(const Stats& s) {
        const double w = s[0] + s[1] + s[2];
        if (w <= 0.0) return 0.0;
        return (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) / w;
    }
    static bool pure(const Stats& s) { return (s[0] > 0.0) + (s[1] > 0.0) + (s[2] > 0.0) <= 1; }
    /// Impure nodes may split at zero gain so unbounded trees reach purity.
    static bool accept(double /*gain*/, double /*parent_score*/) { return true; }
};

/// Weighted squared error around the mean, for boosting residual trees.
struct SquaredErrorCriterion {
    using Stats = std::array<double, 3>;  // sum w*r, sum w, sum w*r^2

    std::span<const double> targets;
    std::span<const double> weights;

    void add(Stats& s, std::uint32_t row) const {
        const double w = weights[row];
        const double r = targets[row];
        s[0] += w * r;
        s[1] += w;
        s[2] += w * r * r;
    }
    static Stats minus(const Stats& a, const Stats& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
    static double score(const Stats& s) { return s[1] > 0.0 ? s[0] * s[0] / s[1] : 0.0; }
    static bool pure(const Stats& s) {
        if (s[1] <= 0.0) return true;
        const double sse = s[2] - s[0] * s[0] / s[1];
        return sse <= 1e-12 * std::max(1.0, s[2]);
    }
    static bool accept(double gain, double parent_score) { return gain > 1e-12 * std::max(1.0, std::fabs(parent_score)); }
};

struct FittedTree {
    Tree tree;
    std::vector<std::int32_t> leaf_of_row;  // node index per matrix row, -1 if the row was not used
};

namespace detail {

template <typename Criterion, typename LeafFn>
class TreeBuilder {
public:
    TreeBuilder(const ColumnIndex& index, const Criterion& crit, const TreeParams& params,
                std::span<const std::uint32_t> rows, LeafFn leaf_fn, std::mt19937_64* rng)
        : index_(index), crit_(crit), params_(params), leaf_fn_(leaf_fn), rng_(rng) {
        n_ = rows.size();
        const std::size_t n_features = index.active().size();
        // List 0 holds row ids in ascending order; list 1 + a is active feature a.
        lists_.resize((n_features + 1) * n_);
        std::vector<std::uint8_t> member(index.rows(), 0);
        for (auto r : rows) member[r] = 1;
        {
            std::size_t p = 0;
            for (std::uint32_t r = 0; r < index.rows(); ++r)
                if (member[r]) lists_[p++] = r;
        }
        for (std::size_t a = 0; a < n_features; ++a) {
            auto* dst = lists_.data() + (a + 1) * n_;
            std::size_t p = 0;
            for (auto r : index.sorted(a))
                if (member[r]) dst[p++] = r;
        }
        go_left_.assign(index.rows(), 0);
        scratch_.resize(n_);
        result_.leaf_of_row.assign(index.rows(), -1);
    }

    FittedTree build() {
        result_.tree.nodes.emplace_back();
        grow(0, 0, n_, 0);
        return std::move(result_);
    }

private:
    std::uint32_t* list(std::size_t l) { return lists_.data() + l * n_; }

    void make_leaf(std::size_t node, std::size_t begin, std::size_t end) {
        std::span<const std::uint32_t> rows(list(0) + begin, end - begin);
        auto& n = result_.tree.nodes[node];
        n.feature = -1;
        n.value = leaf_fn_(rows);
        for (auto r : rows) result_.leaf_of_row[r] = static_cast<std::int32_t>(node);
    }

    std::vector<std::size_t> candidates() {
        const std::size_t F = index_.active().size();
        std::vector<std::size_t> c(F);
        std::iota(c.begin(), c.end(), std::size_t{0});
        if (params_.max_features == 0 || params_.max_features >= F || rng_ == nullptr) return c;
        for (std::size_t i = 0; i < params_.max_features; ++i) {
            const std::size_t j = i + static_cast<std::size_t>((*rng_)() % (F - i));
            std::swap(c[i], c[j]);
        }
        c.resize(params_.max_features);
        std::sort(c.begin(), c.end());
        return c;
    }

    void grow(std::size_t node, std::size_t begin, std::size_t end, std::size_t depth) {
        typename Criterion::Stats total{};
        for (std::size_t i = begin; i < end; ++i) crit_.add(total, list(0)[i]);
        const std::size_t count = end - begin;
        if (Criterion::pure(total) || (params_.max_depth != 0 && depth >= params_.max_depth) ||
            count < 2 * params_.min_samples_leaf) {
            make_leaf(node, begin, end);
            return;
        }

        const double parent_score = Criterion::score(total);
        double best_gain = -std::numeric_limits<double>::infinity();
        std::size_t best_list = 0;
        std::size_t best_pos = 0;
        double best_threshold = 0.0;
        const std::size_t msl = params_.min_samples_leaf;

        for (std::size_t a : candidates()) {
            const std::uint32_t* order = list(a + 1);
            const double* col = index_.column(index_.active()[a]);
            if (col[order[begin]] == col[order[end - 1]]) continue;
            typename Criterion::Stats left{};
            for (std::size_t i = begin; i + 1 < end; ++i) {
                crit_.add(left, order[i]);
                const double v = col[order[i]];
                const double next = col[order[i + 1]];
                if (!(v < next)) continue;
                const std::size_t n_left = i + 1 - begin;
                if (n_left < msl) continue;
                if (count - n_left < msl) break;
                const double gain =
                    Criterion::score(left) + Criterion::score(Criterion::minus(total, left)) - parent_score;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_list = a + 1;
                    best_pos = i + 1;
                    double mid = v + (next - v) * 0.5;
                    if (!(mid < next)) mid = v;
                    best_threshold = mid;
                }
            }
        }
        if (best_list == 0 || !Criterion::accept(best_gain, parent_score)) {
            make_leaf(node, begin, end);
            return;
        }

        const std::uint32_t* chosen = list(best_list);
        for (std::size_t i = begin; i < end; ++i) go_left_[chosen[i]] = i < best_pos ? 1 : 0;
        // Children capped by depth become leaves and only need list 0.
        const bool children_are_leaves = params_.max_depth != 0 && depth + 1 >= params_.max_depth;
        const std::size_t n_lists = children_are_leaves ? 1 : lists_.size() / n_;
        for (std::size_t l = 0; l < n_lists; ++l) {
            std::uint32_t* lst = list(l);
            std::size_t lp = begin, rp = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto r = lst[i];
                if (go_left_[r]) lst[lp++] = r;
                else scratch_[rp++] = r;
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(rp), lst + lp);
        }

        const std::size_t mid = best_pos;
        const auto left_id = static_cast<std::int32_t>(result_.tree.nodes.size());
        result_.tree.nodes.emplace_back();
        const auto right_id = static_cast<std::int32_t>(result_.tree.nodes.size());
        result_.tree.nodes.emplace_back();
        {
            auto& n = result_.tree.nodes[node];
            n.feature = static_cast<std::int32_t>(index_.active()[best_list - 1]);
            n.threshold = best_threshold;
            n.left = left_id;
            n.right = right_id;
        }
        grow(static_cast<std::size_t>(left_id), begin, mid, depth + 1);
        grow(static_cast<std::size_t>(right_id), mid, end, depth + 1);
    }

    const ColumnIndex& index_;
    const Criterion& crit_;
    const TreeParams& params_;
    LeafFn leaf_fn_;
    std::mt19937_64* rng_;
    std::size_t n_ = 0;
    std::vector<std::uint32_t> lists_;
    std::vector<std::uint8_t> go_left_;
    std::vector<std::uint32_t> scratch_;
    FittedTree result_;
};

}  // namespace detail

/// Fits a tree on `rows` (each must carry positive weight). `leaf_fn` maps
/// the rows reaching a leaf to its payload.
template <typename Criterion, typename LeafFn>
FittedTree fit_tree(const ColumnIndex& index, const Criterion& crit, const TreeParams& params,
                    std::span<const std::uint32_t> rows, LeafFn leaf_fn, std::mt19937_64* rng = nullptr) {
    require(!rows.empty(), "fit_tree: no rows");
    detail::TreeBuilder<Criterion, LeafFn> builder(index, crit, params, rows, leaf_fn, rng);
    return builder.build();
}

/// Weighted classification tree; each leaf stores the normalised weighted
/// class distribution of the rows routed to it.
inline FittedTree fit_classification_tree(const ColumnIndex& index, std::span<const std::uint8_t> labels,
                                          std::span<const double> weights, std::span<const std::uint32_t> rows,
                                          const TreeParams& params, std::mt19937_64* rng = nullptr) {
    const GiniCriterion crit{labels, weights};
    auto leaf = [&](std::span<const std::uint32_t> leaf_rows) {
        Distribution d{};
        for (auto r : leaf_rows) d[labels[r]] += weights[r];
        const double total = d[0] + d[1] + d[2];
        for (auto& v : d) v /= total;
        return d;
    };
    return fit_tree(index, crit, params, rows, leaf, rng);
}

}  // namespace mandi::ml
