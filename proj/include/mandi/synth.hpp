#pragma once

// Seeded synthetic price panels: annual seasonal mean, AR(1) log-noise,
// sticky exact repeats, availability windows and block + random gaps.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mandi/date.hpp"
#include "mandi/error.hpp"
#include "mandi/evaluation.hpp"
#include "mandi/format.hpp"
#include "mandi/ingest.hpp"
#include "mandi/panel.hpp"

namespace mandi {

struct BlockMissing {
    double mean_length = 0.0;  // expected run length in days
    double rate = 0.0;         // per-day probability of a run starting

    friend bool operator==(const BlockMissing&, const BlockMissing&) = default;
};

struct SynthConfig {
    std::size_t markets = 14;
    std::size_t years = 4;
    int start_year = 2012;
    double base_price = 2000.0;       // INR per quintal
    double season_amplitude = 0.3;    // relative to the market level
    int peak_day_of_year = 330;       // must fall in Aug..Mar
    double phase_jitter_days = 15.0;  // per-market shift of the seasonal peak
    double stickiness = 0.6;
    double noise_scale = 0.002;       // sd of the daily AR(1) innovation in log price
    double ar_coefficient = 0.9;
    std::vector<std::optional<DateRange>> availability;  // empty, or one entry per market
    double random_missing = 0.0;
    BlockMissing block_missing;
    std::uint64_t seed = 0;

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;

    DateRange calendar() const {
        return {make_date(start_year, 1, 1), make_date(start_year + static_cast<int>(years) - 1, 12, 31)};
    }

    void validate() const {
        auto bad = [](const std::string& m) { fail(ErrorKind::InvalidConfig, "synth: " + m); };
        if (markets == 0) bad("markets must be >= 1");
        if (years == 0) bad("years must be >= 1");
        if (!(base_price > 0.0) || !std::isfinite(base_price)) bad("base_price must be positive");
        if (!(season_amplitude >= 0.0 && season_amplitude < 1.0)) bad("season_amplitude must be in [0, 1)");
        if (!(peak_day_of_year >= 213 || (peak_day_of_year >= 1 && peak_day_of_year <= 90)) || peak_day_of_year > 366)
            bad("peak_day_of_year must fall between August and March");
        if (!(phase_jitter_days >= 0.0)) bad("phase_jitter_days must be non-negative");
        if (!(stickiness >= 0.0 && stickiness <= 1.0)) bad("stickiness must be in [0, 1]");
        if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) bad("noise_scale must be non-negative");
        if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) bad("ar_coefficient must be in [0, 1)");
        if (!(random_missing >= 0.0 && random_missing < 1.0)) bad("random_missing must be in [0, 1)");
        if (!(block_missing.rate >= 0.0 && block_missing.rate <= 1.0)) bad("block_missing.rate must be in [0, 1]");
        if (block_missing.rate > 0.0 && !(block_missing.mean_length >= 1.0))
            bad("block_missing.mean_length must be >= 1 when rate > 0");
        if (!availability.empty()) {
            if (availability.size() != markets) bad("availability needs one entry per market");
            const auto cal = calendar();
            for (std::size_t m = 0; m < markets; ++m) {
                const auto& a = availability[m];
                if (!a) continue;
                if (a->empty()) bad("availability range " + std::to_string(m) + " ends before it starts");
                if (a->last < cal.first || a->first > cal.last)
                    bad("availability range " + std::to_string(m) + " lies outside the calendar");
            }
        }
    }
};

/// Latent quantities behind a generated panel, row-major M x D.
struct GroundTruth {
    std::vector<double> seasonal;          // seasonal mean price
    std::vector<double> latent;            // seasonal mean times AR noise, before rounding
    std::vector<double> underlying;        // whole-INR price whether or not observed
    std::vector<std::uint8_t> sticky;      // day repeated the previous price by the stickiness draw
    std::vector<Direction> intended;       // direction of the day's move had it not been sticky
    std::size_t days = 0;

    double seasonal_at(std::size_t m, std::size_t d) const { return seasonal[m * days + d]; }
};

struct SynthResult {
    AlignedPanel panel;
    GroundTruth truth;
};

inline std::string synth_market_id(std::size_t m) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mkt%02zu", m);
    return buf;
}

/// Stationary missing fraction inside an availability window.
inline double expected_missing_fraction(const SynthConfig& cfg) {
    const double L = cfg.block_missing.mean_length, rho = cfg.block_missing.rate;
    const double in_block = rho > 0.0 ? rho * L / (1.0 + rho * L) : 0.0;
    return 1.0 - (1.0 - cfg.random_missing) * (1.0 - in_block);
}

inline SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    const auto cal = cfg.calendar();
    const std::size_t M = cfg.markets, D = cal.days();
    const double two_pi = 2.0 * std::numbers::pi;
    const double period = 365.25;
    // Day count (since 1970-01-01) of a reference seasonal peak.
    const double peak_ref = static_cast<double>(
        (make_date(1970, 1, 1) + std::chrono::days{cfg.peak_day_of_year - 1}).time_since_epoch().count());

    GroundTruth gt;
    gt.days = D;
    gt.seasonal.resize(M * D);
    gt.latent.resize(M * D);
    gt.underlying.resize(M * D);
    gt.sticky.assign(M * D, 0);
    gt.intended.assign(M * D, Direction::Stay);
    std::vector<std::optional<double>> prices(M * D);
    std::vector<std::string> ids;

    const double innovation = cfg.noise_scale;
    const double stationary_sd =
        innovation / std::sqrt(1.0 - cfg.ar_coefficient * cfg.ar_coefficient);
    const double p_block_stay = cfg.block_missing.rate > 0.0 ? 1.0 - 1.0 / cfg.block_missing.mean_length : 0.0;
    const double p_block_in = cfg.block_missing.rate > 0.0
                                  ? cfg.block_missing.rate * cfg.block_missing.mean_length /
                                        (1.0 + cfg.block_missing.rate * cfg.block_missing.mean_length)
                                  : 0.0;

    for (std::size_t m = 0; m < M; ++m) {
        ids.push_back(synth_market_id(m));
        std::mt19937_64 rng(mix_seed(cfg.seed ^ mix_seed(m + 1)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);

        const double level = cfg.base_price * (0.8 + 0.4 * unif(rng));
        const double shift = cfg.phase_jitter_days * (2.0 * unif(rng) - 1.0);
        double x = stationary_sd * normal(rng);
        bool in_block = unif(rng) < p_block_in;
        double prev = 0.0;

        for (std::size_t d = 0; d < D; ++d) {
            const std::size_t i = m * D + d;
            const Date date = cal.first + std::chrono::days{d};
            const double t = static_cast<double>(date.time_since_epoch().count());
            const double mu = level * (1.0 + cfg.season_amplitude * std::cos(two_pi * (t - peak_ref - shift) / period));
            if (d > 0) x = cfg.ar_coefficient * x + innovation * normal(rng);
            const double latent = mu * std::exp(x);
            const double rounded = std::max(1.0, std::round(latent));
            const bool sticky = d > 0 && unif(rng) < cfg.stickiness;
            const double price = sticky ? prev : rounded;
            gt.seasonal[i] = mu;
            gt.latent[i] = latent;
            gt.underlying[i] = price;
            gt.sticky[i] = sticky;
            if (d > 0) gt.intended[i] = direction_of((rounded - prev) / prev);
            prev = price;

            // Missingness draws happen every day so they never shift the price stream.
            if (d > 0) in_block = in_block ? unif(rng) < p_block_stay : unif(rng) < cfg.block_missing.rate;
            const bool dropped = unif(rng) < cfg.random_missing;
            bool available = true;
            if (!cfg.availability.empty() && cfg.availability[m]) available = cfg.availability[m]->contains(date);
            if (available && !in_block && !dropped) prices[i] = price;
        }
    }
    return {AlignedPanel::from_prices(std::move(ids), cal, std::move(prices)), std::move(gt)};
}

/// Observed prices as a canonical dataset, so the CLI pipeline can run on
/// generated data. Markets with no observations are omitted.
inline CanonicalDataset to_dataset(const AlignedPanel& panel, const std::string& commodity) {
    CanonicalDataset ds;
    ds.commodity = commodity;
    for (std::size_t m = 0; m < panel.markets(); ++m) {
        PriceSeries s;
        s.market_id = panel.market_ids()[m];
        s.commodity = commodity;
        for (std::size_t d = 0; d < panel.days(); ++d)
            if (const auto p = panel.price(m, d)) s.observations.push_back({panel.date_at(d), *p, std::nullopt});
        if (!s.observations.empty()) ds.series.push_back(std::move(s));
    }
    return ds;
}

struct ReferenceAccuracy {
    double raw_ref = 0.0;
    double balanced_ref = 0.0;
    bool single_class = false;      // only one truth class occurred; balanced covers that class alone
    double stay_prevalence = 0.0;
    Metrics seasonal_oracle;        // predicts the sign of the latent seasonal drift
    Metrics stay_oracle;            // predicts Stay everywhere
};

/// Monte Carlo reference over `trials` independent panels (seeds derived from
/// cfg.seed). Two oracles see the latent state: the seasonal-drift sign and
/// constant Stay. Each reference takes the better of the two.
inline ReferenceAccuracy reference_accuracy(const SynthConfig& cfg, std::size_t trials) {
    if (trials == 0) fail(ErrorKind::InvalidArgument, "reference_accuracy: trials must be >= 1");
    ConfusionMatrix drift_cm, stay_cm;
    for (std::size_t t = 0; t < trials; ++t) {
        SynthConfig c = cfg;
        c.seed = mix_seed(cfg.seed ^ mix_seed(0x5eedULL + t));
        const auto res = generate(c);
        std::mt19937_64 rng(mix_seed(c.seed + 1));
        std::uniform_int_distribution<int> coin(0, 2);
        const auto& p = res.panel;
        for (std::size_t m = 0; m < p.markets(); ++m) {
            for (std::size_t d = 1; d < p.days(); ++d) {
                if (!p.change_mask(m, d)) continue;
                const Direction truth = p.direction_or_stay(m, d);
                const double drift = res.truth.seasonal_at(m, d) - res.truth.seasonal_at(m, d - 1);
                const Direction guess = drift > 0.0   ? Direction::Up
                                        : drift < 0.0 ? Direction::Down
                                                      : direction_from_index(static_cast<std::size_t>(coin(rng)));
                drift_cm.add(truth, guess);
                stay_cm.add(truth, Direction::Stay);
            }
        }
    }
    if (drift_cm.total() == 0) fail(ErrorKind::DataError, "reference_accuracy: no observed changes");
    ReferenceAccuracy r;
    r.seasonal_oracle = compute_metrics(drift_cm);
    r.stay_oracle = compute_metrics(stay_cm);
    r.raw_ref = std::max(r.seasonal_oracle.raw_accuracy, r.stay_oracle.raw_accuracy);
    r.balanced_ref = std::max(r.seasonal_oracle.balanced_accuracy, r.stay_oracle.balanced_accuracy);
    r.stay_prevalence = r.stay_oracle.raw_accuracy;
    std::size_t present = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) present += stay_cm.truth_count(c) > 0;
    r.single_class = present == 1;
    return r;
}

}  // namespace mandi
