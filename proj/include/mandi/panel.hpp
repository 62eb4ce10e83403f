#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mandi/date.hpp"
#include "mandi/error.hpp"

namespace mandi {

// ---------------------------------------------------------------------------
// Direction labels
// ---------------------------------------------------------------------------

/// Serialized codes are fixed: Up=0, Down=1, Stay=2. Argmax ties resolve in
/// this order too.
enum class Direction : std::uint8_t { Up = 0, Down = 1, Stay = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Direction, kNumClasses> kAllDirections{Direction::Up, Direction::Down,
                                                                   Direction::Stay};

inline constexpr std::size_t index_of(Direction d) { return static_cast<std::size_t>(d); }
inline constexpr Direction direction_from_index(std::size_t i) { return static_cast<Direction>(i); }

inline const char* to_string(Direction d) {
    switch (d) {
        case Direction::Up: return "up";
        case Direction::Down: return "down";
        case Direction::Stay: return "stay";
    }
    return "?";
}

inline Direction direction_of(double change, double epsilon = 0.0) {
    require(std::isfinite(change), "direction_of: change must be finite");
    require(epsilon >= 0.0, "direction_of: epsilon must be non-negative");
    if (change > epsilon) return Direction::Up;
    if (change < -epsilon) return Direction::Down;
    return Direction::Stay;
}

// ---------------------------------------------------------------------------
// Raw series
// ---------------------------------------------------------------------------

struct PriceObservation {
    Date date;
    double price = 0.0;                // INR per quintal
    std::optional<double> arrivals;    // metric tons

    friend bool operator==(const PriceObservation&, const PriceObservation&) = default;
};

struct PriceSeries {
    std::string market_id;
    std::string commodity;
    std::vector<PriceObservation> observations;  // strictly increasing by date

    void validate() const {
        for (std::size_t i = 0; i < observations.size(); ++i) {
            const auto& o = observations[i];
            if (!(o.price > 0.0) || !std::isfinite(o.price))
                fail(ErrorKind::DataError, "series '" + market_id + "': non-positive price on " +
                                               format_date(o.date));
            if (o.arrivals && !(*o.arrivals >= 0.0))
                fail(ErrorKind::DataError,
                     "series '" + market_id + "': negative arrivals on " + format_date(o.date));
            if (i > 0 && !(observations[i - 1].date < o.date))
                fail(ErrorKind::DataError, "series '" + market_id +
                                               "': observations not strictly increasing at " +
                                               format_date(o.date));
        }
    }

    friend bool operator==(const PriceSeries&, const PriceSeries&) = default;
};

// ---------------------------------------------------------------------------
// Aligned panel
// ---------------------------------------------------------------------------

/// Markets x calendar-days grid. Immutable once built.
///
/// A change at (m, d) exists iff prices at d and d-1 are both observed; the
/// first calendar day never has one. Direction labels exist exactly where
/// changes do.
class AlignedPanel {
public:
    AlignedPanel() = default;

    /// `prices` is row-major M x D; nullopt marks a missing day.
    static AlignedPanel from_prices(std::vector<std::string> market_ids, DateRange calendar,
                                    std::vector<std::optional<double>> prices,
                                    double epsilon = 0.0) {
        if (calendar.empty()) fail(ErrorKind::InvalidArgument, "align: empty calendar range");
        require(epsilon >= 0.0, "align: epsilon must be non-negative");
        const std::size_t M = market_ids.size();
        const std::size_t D = calendar.days();
        require(prices.size() == M * D, "align: price grid has wrong size");
        {
            std::unordered_set<std::string> seen;
            for (const auto& id : market_ids)
                if (!seen.insert(id).second)
                    fail(ErrorKind::InvalidArgument, "align: duplicate market_id '" + id + "'");
        }

        AlignedPanel p;
        p.markets_ = std::move(market_ids);
        p.calendar_ = calendar;
        p.epsilon_ = epsilon;
        p.price_ = std::move(prices);
        p.change_.assign(M * D, 0.0);
        p.mask_.assign(M * D, 0);
        p.direction_.assign(M * D, Direction::Stay);
        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t d = 1; d < D; ++d) {
                const auto& prev = p.price_[m * D + d - 1];
                const auto& cur = p.price_[m * D + d];
                if (!prev || !cur) continue;
                const double c = (*cur - *prev) / *prev;
                p.change_[m * D + d] = c;
                p.mask_[m * D + d] = 1;
                p.direction_[m * D + d] = direction_of(c, epsilon);
            }
        }
        p.doy_.resize(D);
        for (std::size_t d = 0; d < D; ++d) p.doy_[d] = mandi::day_of_year(p.date_at(d));
        return p;
    }

    std::size_t markets() const { return markets_.size(); }
    std::size_t days() const { return calendar_.days(); }
    const std::vector<std::string>& market_ids() const { return markets_; }
    const DateRange& calendar() const { return calendar_; }
    double epsilon() const { return epsilon_; }

    Date date_at(std::size_t d) const { return calendar_.first + std::chrono::days{d}; }

    std::optional<std::size_t> day_index(Date date) const {
        if (!calendar_.contains(date)) return std::nullopt;
        return static_cast<std::size_t>((date - calendar_.first).count());
    }

    std::optional<std::size_t> market_index(std::string_view id) const {
        for (std::size_t m = 0; m < markets_.size(); ++m)
            if (markets_[m] == id) return m;
        return std::nullopt;
    }

    const std::optional<double>& price(std::size_t m, std::size_t d) const { return price_[at(m, d)]; }

    bool change_mask(std::size_t m, std::size_t d) const { return mask_[at(m, d)] != 0; }
    bool direction_mask(std::size_t m, std::size_t d) const { return change_mask(m, d); }

    std::optional<double> change(std::size_t m, std::size_t d) const {
        if (!change_mask(m, d)) return std::nullopt;
        return change_[at(m, d)];
    }
    std::optional<Direction> direction(std::size_t m, std::size_t d) const {
        if (!change_mask(m, d)) return std::nullopt;
        return direction_[at(m, d)];
    }

    /// Unchecked fast paths for windowing: value is 0 / Stay where masked.
    double change_or_zero(std::size_t m, std::size_t d) const { return change_[at(m, d)]; }
    Direction direction_or_stay(std::size_t m, std::size_t d) const { return direction_[at(m, d)]; }

    int day_of_year(std::size_t d) const { return doy_[d]; }

private:
    std::size_t at(std::size_t m, std::size_t d) const { return m * days() + d; }

    std::vector<std::string> markets_;
    DateRange calendar_{};
    double epsilon_ = 0.0;
    std::vector<std::optional<double>> price_;
    std::vector<double> change_;
    std::vector<std::uint8_t> mask_;
    std::vector<Direction> direction_;
    std::vector<int> doy_;
};

/// Places every series on the contiguous calendar `range`, markets in input
/// order. Observations outside the range are ignored.
inline AlignedPanel align(std::span<const PriceSeries> series, DateRange range, double epsilon = 0.0) {
    if (range.empty()) fail(ErrorKind::InvalidArgument, "align: empty calendar range");
    if (!series.empty()) {
        const auto& commodity = series.front().commodity;
        for (const auto& s : series)
            if (s.commodity != commodity)
                fail(ErrorKind::InvalidArgument, "align: mixed commodities '" + commodity + "' and '" +
                                                     s.commodity + "'");
    }
    const std::size_t D = range.days();
    std::vector<std::string> ids;
    std::vector<std::optional<double>> prices(series.size() * D);
    for (std::size_t m = 0; m < series.size(); ++m) {
        series[m].validate();
        ids.push_back(series[m].market_id);
        for (const auto& o : series[m].observations) {
            if (!range.contains(o.date)) continue;
            prices[m * D + static_cast<std::size_t>((o.date - range.first).count())] = o.price;
        }
    }
    return AlignedPanel::from_prices(std::move(ids), range, std::move(prices), epsilon);
}

/// Fraction of days in `range` whose price is unobserved for `market`.
inline double missing_fraction(const AlignedPanel& panel, std::string_view market, DateRange range) {
    const auto m = panel.market_index(market);
    if (!m) fail(ErrorKind::InvalidArgument, "missing_fraction: unknown market '" + std::string(market) + "'");
    if (range.empty() || !panel.calendar().contains(range.first) || !panel.calendar().contains(range.last))
        fail(ErrorKind::InvalidArgument, "missing_fraction: range outside panel calendar");
    const std::size_t first = *panel.day_index(range.first);
    const std::size_t last = *panel.day_index(range.last);
    std::size_t missing = 0;
    for (std::size_t d = first; d <= last; ++d)
        if (!panel.price(*m, d)) ++missing;
    return static_cast<double>(missing) / static_cast<double>(last - first + 1);
}

}  // namespace mandi
