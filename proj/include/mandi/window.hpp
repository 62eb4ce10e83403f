#pragma once

// Sliding-window examples over an AlignedPanel.
//
// An example anchored at calendar day d covers past days d-b+1..d (inputs)
// and future days d+1..d+f (targets). Missing past changes are zero-filled
// and flagged in past_mask; missing targets are Stay-filled and flagged in
// future_mask, which is itself part of the classifier input.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mandi/date.hpp"
#include "mandi/error.hpp"
#include "mandi/panel.hpp"

namespace mandi {

enum class DoyEncoding {
    Raw,     // ordinal 1..366, one value per past day
    Cyclic,  // (sin, cos) pair per past day
};

struct WindowConfig {
    std::size_t b = 7;  // past days
    std::size_t f = 7;  // horizon days
    double epsilon = 0.0;
    DoyEncoding doy = DoyEncoding::Raw;

    friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct WindowExample {
    Date anchor;
    std::size_t markets = 0;
    std::size_t b = 0;
    std::size_t f = 0;
    std::vector<double> past_changes;       // M x b, row-major, oldest day first
    std::vector<std::uint8_t> past_mask;    // M x b
    std::vector<std::uint8_t> future_mask;  // M x f
    std::vector<Direction> future_labels;   // M x f
    std::vector<int> doy;                   // b

    bool target_observed(std::size_t m, std::size_t k) const { return future_mask[m * f + k] != 0; }
    Direction target(std::size_t m, std::size_t k) const { return future_labels[m * f + k]; }

    friend bool operator==(const WindowExample&, const WindowExample&) = default;
};

/// Feature vector tagged with the layout it was built with; learners refuse
/// vectors whose layout differs from their training layout.
struct FeatureVector {
    std::string layout;
    std::vector<double> values;
};

inline constexpr const char* kFeatureLayoutVersion = "flat/1";

/// Layout id, e.g. "flat/1;M=14;b=7;f=7;doy=raw".
inline std::string feature_layout(std::size_t markets, std::size_t b, std::size_t f, DoyEncoding doy) {
    return std::string(kFeatureLayoutVersion) + ";M=" + std::to_string(markets) + ";b=" + std::to_string(b) +
           ";f=" + std::to_string(f) + ";doy=" + (doy == DoyEncoding::Raw ? "raw" : "cyclic");
}

/// [past_changes M*b] ++ [past_mask M*b] ++ [future_mask M*f] ++ [doy b, or 2b if cyclic]
inline std::size_t feature_count(std::size_t markets, std::size_t b, std::size_t f, DoyEncoding doy) {
    return 2 * markets * b + markets * f + (doy == DoyEncoding::Raw ? b : 2 * b);
}

namespace detail {

inline void validate_window(const AlignedPanel& panel, const WindowConfig& cfg) {
    if (cfg.b < 1 || cfg.f < 1) fail(ErrorKind::InvalidArgument, "window: b and f must be at least 1");
    if (panel.days() < cfg.b + cfg.f + 1)
        fail(ErrorKind::InvalidArgument, "window: calendar of " + std::to_string(panel.days()) +
                                             " days is too short for b=" + std::to_string(cfg.b) +
                                             ", f=" + std::to_string(cfg.f));
}

inline void fill_past(const AlignedPanel& panel, std::size_t anchor, std::size_t b, WindowExample& ex) {
    const std::size_t M = panel.markets();
    ex.past_changes.resize(M * b);
    ex.past_mask.resize(M * b);
    ex.doy.resize(b);
    const std::size_t start = anchor + 1 - b;
    for (std::size_t j = 0; j < b; ++j) ex.doy[j] = panel.day_of_year(start + j);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t j = 0; j < b; ++j) {
            const bool seen = panel.change_mask(m, start + j);
            ex.past_mask[m * b + j] = seen ? 1 : 0;
            ex.past_changes[m * b + j] = seen ? panel.change_or_zero(m, start + j) : 0.0;
        }
    }
}

inline void append_doy(std::span<const int> doy, DoyEncoding enc, std::vector<double>& out) {
    for (int d : doy) {
        if (enc == DoyEncoding::Raw) {
            out.push_back(static_cast<double>(d));
        } else {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(d - 1) / 366.0;
            out.push_back(std::sin(angle));
            out.push_back(std::cos(angle));
        }
    }
}

}  // namespace detail

/// Builds the example for one anchor day index. Requires b-1 change-days
/// before the anchor and f days after it.
inline WindowExample make_example(const AlignedPanel& panel, std::size_t anchor, const WindowConfig& cfg) {
    require(anchor >= cfg.b && anchor + cfg.f < panel.days(), "make_example: anchor out of range");
    const std::size_t M = panel.markets();
    WindowExample ex;
    ex.anchor = panel.date_at(anchor);
    ex.markets = M;
    ex.b = cfg.b;
    ex.f = cfg.f;
    detail::fill_past(panel, anchor, cfg.b, ex);
    ex.future_mask.resize(M * cfg.f);
    ex.future_labels.resize(M * cfg.f);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t k = 0; k < cfg.f; ++k) {
            const std::size_t day = anchor + 1 + k;
            const bool seen = panel.direction_mask(m, day);
            ex.future_mask[m * cfg.f + k] = seen ? 1 : 0;
            ex.future_labels[m * cfg.f + k] = seen ? panel.direction_or_stay(m, day) : Direction::Stay;
        }
    }
    return ex;
}

/// One example per anchor with b-1 change-day predecessors and f successors,
/// stride 1, in anchor order. With D calendar days there are D-1 change-days
/// and (D-1) - b - f + 1 examples.
inline std::vector<WindowExample> build_examples(const AlignedPanel& panel, const WindowConfig& cfg) {
    detail::validate_window(panel, cfg);
    if (cfg.epsilon != panel.epsilon())
        fail(ErrorKind::InvalidArgument, "build_examples: window epsilon differs from the panel's");
    std::vector<WindowExample> out;
    const std::size_t first = cfg.b;
    const std::size_t last = panel.days() - 1 - cfg.f;
    out.reserve(last - first + 1);
    for (std::size_t a = first; a <= last; ++a) out.push_back(make_example(panel, a, cfg));
    return out;
}

inline FeatureVector flatten_features(const WindowExample& ex, DoyEncoding doy = DoyEncoding::Raw) {
    FeatureVector fv;
    fv.layout = feature_layout(ex.markets, ex.b, ex.f, doy);
    auto& v = fv.values;
    v.reserve(feature_count(ex.markets, ex.b, ex.f, doy));
    v.insert(v.end(), ex.past_changes.begin(), ex.past_changes.end());
    for (auto m : ex.past_mask) v.push_back(m ? 1.0 : 0.0);
    for (auto m : ex.future_mask) v.push_back(m ? 1.0 : 0.0);
    detail::append_doy(ex.doy, doy, v);
    return fv;
}

/// Same layout as flatten_features with the future-mask segment set to all
/// ones. Reads no data after the anchor, so the last calendar day is valid.
inline FeatureVector inference_features(const AlignedPanel& panel, Date anchor, const WindowConfig& cfg) {
    if (cfg.b < 1 || cfg.f < 1) fail(ErrorKind::InvalidArgument, "window: b and f must be at least 1");
    const auto a = panel.day_index(anchor);
    if (!a) fail(ErrorKind::InvalidArgument, "inference_features: anchor " + format_date(anchor) + " outside panel");
    if (*a < cfg.b)
        fail(ErrorKind::InvalidArgument, "inference_features: anchor " + format_date(anchor) +
                                             " has fewer than b-1 change-day predecessors");
    WindowExample ex;
    ex.anchor = anchor;
    ex.markets = panel.markets();
    ex.b = cfg.b;
    ex.f = cfg.f;
    detail::fill_past(panel, *a, cfg.b, ex);
    ex.future_mask.assign(ex.markets * cfg.f, 1);
    ex.future_labels.assign(ex.markets * cfg.f, Direction::Stay);
    return flatten_features(ex, cfg.doy);
}

/// Feature vector of an existing example as it would be seen at forecast time.
inline FeatureVector inference_features(const WindowExample& ex, DoyEncoding doy = DoyEncoding::Raw) {
    FeatureVector fv = flatten_features(ex, doy);
    const std::size_t begin = 2 * ex.markets * ex.b;
    for (std::size_t i = 0; i < ex.markets * ex.f; ++i) fv.values[begin + i] = 1.0;
    return fv;
}

// ---------------------------------------------------------------------------
// Chronological split
// ---------------------------------------------------------------------------

struct SplitSpec {
    Date train_end;
    Date val_end;
    Date test_end;

    void validate() const {
        if (!(train_end < val_end && val_end < test_end))
            fail(ErrorKind::InvalidArgument, "split: require train_end < val_end < test_end");
    }

    friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

struct SplitResult {
    std::vector<WindowExample> train;
    std::vector<WindowExample> val;
    std::vector<WindowExample> test;
    std::size_t dropped = 0;  // last target after test_end
    std::vector<std::string> warnings;
};

enum class SplitPart { Train, Val, Test, Dropped };

/// Assigns by the example's last target day (anchor + f), so a window that
/// straddles a boundary lands in the later split.
inline SplitPart split_part(Date anchor, std::size_t f, const SplitSpec& spec) {
    const Date last_target = anchor + std::chrono::days{static_cast<int>(f)};
    if (last_target <= spec.train_end) return SplitPart::Train;
    if (last_target <= spec.val_end) return SplitPart::Val;
    if (last_target <= spec.test_end) return SplitPart::Test;
    return SplitPart::Dropped;
}

inline SplitResult split(std::vector<WindowExample> examples, const SplitSpec& spec) {
    spec.validate();
    SplitResult r;
    for (auto& ex : examples) {
        switch (split_part(ex.anchor, ex.f, spec)) {
            case SplitPart::Train: r.train.push_back(std::move(ex)); break;
            case SplitPart::Val: r.val.push_back(std::move(ex)); break;
            case SplitPart::Test: r.test.push_back(std::move(ex)); break;
            case SplitPart::Dropped: ++r.dropped; break;
        }
    }
    if (r.train.empty()) r.warnings.emplace_back("train split is empty");
    if (r.val.empty()) r.warnings.emplace_back("validation split is empty");
    if (r.test.empty()) r.warnings.emplace_back("test split is empty");
    return r;
}

}  // namespace mandi
