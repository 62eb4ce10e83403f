#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mandi/error.hpp"
#include "mandi/model.hpp"
#include "mandi/panel.hpp"
#include "mandi/window.hpp"

namespace mandi {

/// Rows are truth (Up, Down, Stay), columns are predictions.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    void add(Direction truth, Direction predicted) { ++counts[index_of(truth)][index_of(predicted)]; }
    void merge(const ConfusionMatrix& o) {
        for (std::size_t t = 0; t < kNumClasses; ++t)
            for (std::size_t p = 0; p < kNumClasses; ++p) counts[t][p] += o.counts[t][p];
    }
    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (const auto& row : counts)
            for (auto c : row) n += c;
        return n;
    }
    std::uint64_t correct() const { return counts[0][0] + counts[1][1] + counts[2][2]; }
    std::uint64_t truth_count(std::size_t c) const { return counts[c][0] + counts[c][1] + counts[c][2]; }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct Metrics {
    double raw_accuracy = 0.0;
    double balanced_accuracy = 0.0;
    std::array<std::optional<double>, kNumClasses> recall;  // nullopt where the truth class is absent
    bool some_class_absent = false;
};

/// Unweighted mean of per-class recalls.
inline double balanced_from_recalls(std::span<const double> recalls) {
    require(!recalls.empty(), "balanced_from_recalls: no recalls");
    double s = 0.0;
    for (double r : recalls) s += r;
    return s / static_cast<double>(recalls.size());
}

/// Raw = trace / total. Balanced = mean recall over truth classes present;
/// absent classes are excluded and flagged.
inline Metrics compute_metrics(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) fail(ErrorKind::DataError, "metrics: zero observed targets");
    Metrics m;
    m.raw_accuracy = static_cast<double>(cm.correct()) / static_cast<double>(total);
    std::vector<double> present;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto n = cm.truth_count(c);
        if (n == 0) {
            m.some_class_absent = true;
            continue;
        }
        m.recall[c] = static_cast<double>(cm.counts[c][c]) / static_cast<double>(n);
        present.push_back(*m.recall[c]);
    }
    m.balanced_accuracy = balanced_from_recalls(present);
    return m;
}

/// Selection objective (1 - alpha) * raw + alpha * balanced.
inline double selection_objective(const Metrics& m, double alpha) {
    if (alpha == 0.0) return m.raw_accuracy;
    if (alpha == 1.0) return m.balanced_accuracy;
    return (1.0 - alpha) * m.raw_accuracy + alpha * m.balanced_accuracy;
}

struct EvalReport {
    ConfusionMatrix confusion;
    Metrics metrics;
    double alpha = 0.0;
    std::size_t b = 0;
    std::size_t f = 0;
    std::optional<SplitSpec> split;
    std::uint64_t seed = 0;
    std::string family;
    std::string spec_digest;
};

/// Pools every (example, market, horizon) prediction with an observed target
/// into one confusion matrix. Inputs are built as at forecast time: the
/// future-mask segment is all ones.
inline EvalReport evaluate(const TrainedModel& model, std::span<const WindowExample> examples, std::size_t workers = 1) {
    std::vector<ConfusionMatrix> parts(examples.size());
    parallel_for(examples.size(), workers, [&](std::size_t i) {
        const auto& ex = examples[i];
        const auto fc = predict(model, inference_features(ex, model.window.doy));
        for (std::size_t o = 0; o < ex.future_mask.size(); ++o)
            if (ex.future_mask[o]) parts[i].add(ex.future_labels[o], fc.outputs[o].label);
    });
    EvalReport r;
    for (const auto& p : parts) r.confusion.merge(p);
    if (r.confusion.total() == 0) fail(ErrorKind::DataError, "evaluate: zero observed targets");
    r.metrics = compute_metrics(r.confusion);
    r.alpha = model.alpha;
    r.b = model.window.b;
    r.f = model.window.f;
    r.seed = model.spec.seed;
    r.family = to_string(model.spec.family);
    r.spec_digest = model.spec.digest();
    return r;
}

// ---------------------------------------------------------------------------
// Validation-driven selection and the alpha sweep
// ---------------------------------------------------------------------------

struct SelectionOptions {
    std::size_t workers = 1;
    bool refit_with_validation = false;
};

/// Windows and splits a panel once per b; shared across alphas and specs.
class WindowCache {
public:
    WindowCache(const AlignedPanel& panel, WindowConfig base, SplitSpec split)
        : panel_(panel), base_(base), split_(split) {
        split_.validate();
    }

    const SplitResult& get(std::size_t b) {
        auto it = cache_.find(b);
        if (it == cache_.end()) {
            WindowConfig cfg = base_;
            cfg.b = b;
            it = cache_.emplace(b, split(build_examples(panel_, cfg), split_)).first;
        }
        return it->second;
    }
    WindowConfig window(std::size_t b) const {
        WindowConfig cfg = base_;
        cfg.b = b;
        return cfg;
    }
    const AlignedPanel& panel() const { return panel_; }
    const SplitSpec& split_spec() const { return split_; }

private:
    const AlignedPanel& panel_;
    WindowConfig base_;
    SplitSpec split_;
    std::map<std::size_t, SplitResult> cache_;
};

struct CandidateScore {
    std::size_t spec_index = 0;
    std::size_t b = 0;
    Metrics validation;
    double objective = 0.0;
};

struct TuneResult {
    ModelSpec spec;
    std::size_t spec_index = 0;
    std::size_t b = 0;
    EvalReport validation;
    TrainedModel model;  // trained on the train split only
    std::vector<CandidateScore> candidates;
};

/// Grid search over specs x b, scored by the selection objective on the
/// validation split. Ties keep the smaller b, then the earlier spec.
inline TuneResult tune(std::span<const ModelSpec> specs, std::span<const std::size_t> b_grid, WindowCache& windows,
                       double alpha, const SelectionOptions& opt = {}) {
    if (specs.empty() || b_grid.empty()) fail(ErrorKind::InvalidArgument, "tune: empty grid");
    std::vector<std::size_t> bs(b_grid.begin(), b_grid.end());
    std::sort(bs.begin(), bs.end());
    bs.erase(std::unique(bs.begin(), bs.end()), bs.end());

    std::optional<TuneResult> best;
    std::vector<CandidateScore> all;
    for (std::size_t b : bs) {
        const auto& parts = windows.get(b);
        if (parts.train.empty()) fail(ErrorKind::DataError, "tune: empty training split for b=" + std::to_string(b));
        if (parts.val.empty()) fail(ErrorKind::DataError, "tune: empty validation split for b=" + std::to_string(b));
        for (std::size_t s = 0; s < specs.size(); ++s) {
            TrainOptions to;
            to.window = windows.window(b);
            to.market_ids = windows.panel().market_ids();
            to.workers = opt.workers;
            auto model = train(specs[s], parts.train, alpha, to);
            EvalReport val;
            try {
                val = evaluate(model, parts.val, opt.workers);
            } catch (const Error& e) {
                fail(ErrorKind::DataError, std::string("tune: validation split has no observed targets: ") + e.what());
            }
            val.split = windows.split_spec();
            const double j = selection_objective(val.metrics, alpha);
            all.push_back({s, b, val.metrics, j});
            if (!best || j > selection_objective(best->validation.metrics, alpha)) {
                best = TuneResult{specs[s], s, b, std::move(val), std::move(model), {}};
            }
        }
    }
    best->candidates = std::move(all);
    return std::move(*best);
}

struct SweepPoint {
    double alpha = 0.0;
    std::string family;
    std::size_t b = 0;
    ModelSpec spec;
    std::string spec_digest;
    Metrics validation;
    Metrics test;
    EvalReport test_report;
};

/// Groups specs by family (first-appearance order). For each family and each
/// alpha: tune on validation, take the winner trained on train (or retrained
/// on train + validation when refitting), and evaluate on test. Points are
/// ordered by family, then alpha.
inline std::vector<SweepPoint> alpha_sweep(std::span<const double> alphas, std::span<const ModelSpec> specs,
                                           std::span<const std::size_t> b_grid, WindowCache& windows,
                                           const SelectionOptions& opt = {}) {
    if (alphas.empty()) fail(ErrorKind::InvalidArgument, "alpha_sweep: no alphas");
    if (specs.empty()) fail(ErrorKind::InvalidArgument, "alpha_sweep: empty spec grid");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) fail(ErrorKind::InvalidArgument, "alpha_sweep: alpha outside [0, 1]");
        if (i > 0 && !(alphas[i - 1] < alphas[i])) fail(ErrorKind::InvalidArgument, "alpha_sweep: alphas must be sorted ascending");
    }
    std::vector<std::vector<ModelSpec>> groups;
    for (const auto& s : specs) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.front().family == s.family; });
        if (it == groups.end()) groups.push_back({s});
        else it->push_back(s);
    }

    std::vector<SweepPoint> points;
    for (const auto& group : groups) {
        for (double alpha : alphas) {
            auto tuned = tune(group, b_grid, windows, alpha, opt);
            const auto& parts = windows.get(tuned.b);
            if (parts.test.empty()) fail(ErrorKind::DataError, "alpha_sweep: empty test split");
            TrainedModel final_model;
            if (opt.refit_with_validation) {
                std::vector<WindowExample> both = parts.train;
                both.insert(both.end(), parts.val.begin(), parts.val.end());
                TrainOptions to;
                to.window = windows.window(tuned.b);
                to.market_ids = windows.panel().market_ids();
                to.workers = opt.workers;
                final_model = train(tuned.spec, both, alpha, to);
            } else {
                final_model = std::move(tuned.model);
            }
            auto report = evaluate(final_model, parts.test, opt.workers);
            report.split = windows.split_spec();
            SweepPoint p;
            p.alpha = alpha;
            p.family = to_string(tuned.spec.family);
            p.b = tuned.b;
            p.spec = tuned.spec;
            p.spec_digest = tuned.spec.digest();
            p.validation = tuned.validation.metrics;
            p.test = report.metrics;
            p.test_report = std::move(report);
            points.push_back(std::move(p));
        }
    }
    return points;
}

}  // namespace mandi
