#include <cmath>

#include <gtest/gtest.h>

#include "mandi/synth.hpp"

using namespace mandi;

namespace {

SynthConfig small(std::uint64_t seed = 1) {
    SynthConfig c;
    c.markets = 4;
    c.years = 2;
    c.seed = seed;
    return c;
}

double stay_share(const AlignedPanel& p) {
    std::size_t stay = 0, total = 0;
    for (std::size_t m = 0; m < p.markets(); ++m)
        for (std::size_t d = 1; d < p.days(); ++d)
            if (p.change_mask(m, d)) {
                ++total;
                stay += p.direction_or_stay(m, d) == Direction::Stay;
            }
    return static_cast<double>(stay) / static_cast<double>(total);
}

double missing_share(const AlignedPanel& p) {
    std::size_t miss = 0;
    for (std::size_t m = 0; m < p.markets(); ++m)
        for (std::size_t d = 0; d < p.days(); ++d) miss += !p.price(m, d).has_value();
    return static_cast<double>(miss) / static_cast<double>(p.markets() * p.days());
}

}  // namespace

TEST(Synth, ShapeIdsAndCalendar) {
    const auto r = generate(small());
    EXPECT_EQ(r.panel.markets(), 4u);
    EXPECT_EQ(r.panel.days(), 731u);  // 2012 is a leap year
    EXPECT_EQ(r.panel.market_ids()[3], "mkt03");
    EXPECT_EQ(r.panel.date_at(0), make_date(2012, 1, 1));
    EXPECT_EQ(r.panel.calendar().last, make_date(2013, 12, 31));
}

TEST(Synth, FullStickinessIsAllStay) {
    auto c = small();
    c.stickiness = 1.0;
    const auto r = generate(c);
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t d = 1; d < r.panel.days(); ++d) EXPECT_EQ(r.panel.direction(m, d), Direction::Stay);
}

TEST(Synth, FullAvailabilityObservesEveryChange) {
    const auto r = generate(small(2));
    for (std::size_t m = 0; m < 4; ++m) {
        EXPECT_FALSE(r.panel.change_mask(m, 0));
        for (std::size_t d = 1; d < r.panel.days(); ++d) ASSERT_TRUE(r.panel.change_mask(m, d));
    }
}

TEST(Synth, StayPrevalenceNearStickinessTarget) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig c;
        c.seed = seed;
        EXPECT_NEAR(stay_share(generate(c).panel), 0.6, 0.03) << seed;
    }
}

TEST(Synth, PricesArePositiveWholeRupees) {
    const auto r = generate(small(3));
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t d = 0; d < r.panel.days(); ++d) {
            const double p = *r.panel.price(m, d);
            EXPECT_GE(p, 1.0);
            EXPECT_EQ(p, std::round(p));
        }
}

TEST(Synth, SeasonalPeakNearConfiguredDay) {
    auto c = small(4);
    c.phase_jitter_days = 0;
    const auto r = generate(c);
    std::size_t best = 0;
    for (std::size_t d = 0; d < 366; ++d)
        if (r.truth.seasonal_at(0, d) > r.truth.seasonal_at(0, best)) best = d;
    EXPECT_NEAR(static_cast<double>(day_of_year(r.panel.date_at(best))), 330.0, 1.0);
}

TEST(Synth, MissingFractionsMatchConfiguration) {
    struct Case {
        double random;
        BlockMissing block;
    };
    for (const Case& k : {Case{0.1, {}}, Case{0.0, {7.0, 0.02}}, Case{0.05, {10.0, 0.01}}, Case{0.2, {3.0, 0.05}}}) {
        double total = 0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            SynthConfig c;
            c.seed = seed;
            c.random_missing = k.random;
            c.block_missing = k.block;
            total += missing_share(generate(c).panel);
        }
        SynthConfig c;
        c.random_missing = k.random;
        c.block_missing = k.block;
        EXPECT_NEAR(total / 3.0, expected_missing_fraction(c), 0.02) << k.random << " " << k.block.rate;
    }
}

TEST(Synth, AvailabilityWindows) {
    auto c = small(5);
    c.availability = {std::nullopt, DateRange{make_date(2012, 6, 1), make_date(2013, 3, 31)}, std::nullopt,
                      DateRange{make_date(2011, 1, 1), make_date(2012, 1, 10)}};
    const auto r = generate(c);
    for (std::size_t d = 0; d < r.panel.days(); ++d) {
        const Date date = r.panel.date_at(d);
        EXPECT_EQ(r.panel.price(1, d).has_value(), c.availability[1]->contains(date));
        EXPECT_EQ(r.panel.price(3, d).has_value(), date <= make_date(2012, 1, 10));
    }
    EXPECT_DOUBLE_EQ(missing_fraction(r.panel, "mkt01", {make_date(2012, 6, 1), make_date(2013, 3, 31)}), 0.0);
}

TEST(Synth, DeterministicPerSeed) {
    const auto a = generate(small(7));
    const auto b = generate(small(7));
    const auto c = generate(small(8));
    bool differs = false;
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t d = 0; d < a.panel.days(); ++d) {
            EXPECT_EQ(a.panel.price(m, d), b.panel.price(m, d));
            differs |= a.panel.price(m, d) != c.panel.price(m, d);
        }
    EXPECT_TRUE(differs);
    EXPECT_EQ(serialize_dataset(to_dataset(a.panel, "Onion")), serialize_dataset(to_dataset(b.panel, "Onion")));
}

TEST(Synth, MissingnessDoesNotShiftPriceStream) {
    auto base = small(9);
    auto holed = base;
    holed.random_missing = 0.3;
    const auto a = generate(base), b = generate(holed);
    EXPECT_EQ(a.truth.underlying, b.truth.underlying);
}

TEST(Synth, InvalidConfigsRejected) {
    auto expect_invalid = [](const SynthConfig& c) {
        try {
            generate(c);
            ADD_FAILURE();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
        }
    };
    auto c = small();
    c.availability = {std::nullopt};
    expect_invalid(c);
    c = small();
    c.availability = {std::nullopt, DateRange{make_date(2012, 5, 1), make_date(2012, 4, 1)}, std::nullopt,
                      std::nullopt};
    expect_invalid(c);
    c = small();
    c.availability = {std::nullopt, DateRange{make_date(2020, 1, 1), make_date(2020, 2, 1)}, std::nullopt,
                      std::nullopt};
    expect_invalid(c);
    c = small();
    c.stickiness = 1.5;
    expect_invalid(c);
    c = small();
    c.peak_day_of_year = 150;
    expect_invalid(c);
    c = small();
    c.block_missing = {0.5, 0.1};
    expect_invalid(c);
    c = small();
    c.markets = 0;
    expect_invalid(c);
}

TEST(ReferenceAccuracy, FullStickinessIsSingleClass) {
    auto c = small();
    c.stickiness = 1.0;
    const auto r = reference_accuracy(c, 2);
    EXPECT_TRUE(r.single_class);
    EXPECT_DOUBLE_EQ(r.raw_ref, 1.0);
    EXPECT_DOUBLE_EQ(r.stay_prevalence, 1.0);
}

TEST(ReferenceAccuracy, PureNoiseIsChance) {
    auto c = small();
    c.season_amplitude = 0.0;
    c.stickiness = 0.0;
    c.noise_scale = 0.01;
    const auto r = reference_accuracy(c, 3);
    EXPECT_NEAR(r.balanced_ref, 1.0 / 3.0, 0.02);
    EXPECT_FALSE(r.single_class);
}

TEST(ReferenceAccuracy, DefaultsBeatStayBaseline) {
    SynthConfig c;
    const auto r = reference_accuracy(c, 1);
    EXPECT_GE(r.raw_ref, r.stay_prevalence);
    EXPECT_DOUBLE_EQ(r.stay_oracle.balanced_accuracy, 1.0 / 3.0);
    EXPECT_GT(r.balanced_ref, 0.5);
    EXPECT_THROW(reference_accuracy(c, 0), Error);
}
