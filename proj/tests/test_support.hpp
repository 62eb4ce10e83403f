#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mandi/panel.hpp"
#include "mandi/window.hpp"

namespace mandi::testutil {

/// Random M x D price grid with roughly `missing` of the cells absent and
/// prices drawn from a handful of levels so exact repeats are common.
inline AlignedPanel random_panel(std::mt19937_64& rng, std::size_t M, std::size_t D, double missing,
                                 Date start = make_date(2014, 12, 20), double epsilon = 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> level(8, 12);
    std::vector<std::optional<double>> prices(M * D);
    for (auto& p : prices)
        if (u(rng) >= missing) p = 100.0 * level(rng);
    std::vector<std::string> ids;
    for (std::size_t m = 0; m < M; ++m) ids.push_back("m" + std::to_string(m));
    return AlignedPanel::from_prices(ids, {start, start + std::chrono::days{static_cast<int>(D) - 1}}, prices, epsilon);
}

/// Enumerates windows straight from the price grid, without going through
/// the panel's change/direction caches.
inline std::vector<WindowExample> brute_force_windows(const std::vector<std::optional<double>>& prices,
                                                      std::size_t M, std::size_t D, Date start, std::size_t b, std::size_t f,
                                                      double eps) {
    auto price = [&](std::size_t m, std::size_t d) { return prices[m * D + d]; };
    std::vector<WindowExample> out;
    for (std::size_t a = 0; a < D; ++a) {
        if (a + 1 < b + 1 || a + f > D - 1) continue;  // first past day must be a change-day (index >= 1)
        WindowExample ex;
        ex.anchor = start + std::chrono::days{static_cast<int>(a)};
        ex.markets = M;
        ex.b = b;
        ex.f = f;
        for (std::size_t j = 0; j < b; ++j) {
            const Date day = ex.anchor - std::chrono::days{static_cast<int>(b - 1 - j)};
            ex.doy.push_back(static_cast<int>(
                (std::chrono::sys_days{day} -
                 std::chrono::sys_days{std::chrono::year_month_day{std::chrono::year_month_day{day}.year() /
                                                                   std::chrono::January / 1}})
                    .count() +
                1));
        }
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t j = 0; j < b; ++j) {
                const std::size_t d = a + 1 - b + j;
                const auto cur = price(m, d), prev = price(m, d - 1);
                ex.past_mask.push_back(cur && prev ? 1 : 0);
                ex.past_changes.push_back(cur && prev ? (*cur - *prev) / *prev : 0.0);
            }
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < f; ++k) {
                const std::size_t d = a + 1 + k;
                const auto cur = price(m, d), prev = price(m, d - 1);
                ex.future_mask.push_back(cur && prev ? 1 : 0);
                Direction lab = Direction::Stay;
                if (cur && prev) {
                    const double c = (*cur - *prev) / *prev;
                    lab = c > eps ? Direction::Up : c < -eps ? Direction::Down : Direction::Stay;
                }
                ex.future_labels.push_back(lab);
            }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace mandi::testutil
