#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "test_support.hpp"
#include "webgym/metrics.hpp"

using namespace webgym;

TEST_CASE("window 1 is the identity") {
    const std::vector<double> xs{3, 1, 4, 1, 5};
    CHECK(moving_average(xs, 1) == xs);
}

TEST_CASE("constant series smooth to themselves") {
    const std::vector<double> xs(40, 0.625);
    const auto smoothed = moving_average(xs, 10);
    for (double x : smoothed) CHECK(x == doctest::Approx(0.625).epsilon(1e-15));
}

TEST_CASE("window 10 over a step function matches direct convolution") {
    std::vector<double> xs;
    for (int i = 0; i < 50; ++i) xs.push_back(i < 25 ? 0.0 : 1.0);
    const auto got = moving_average(xs, 10);
    // independent oracle: direct windowed mean
    for (size_t i = 0; i < xs.size(); ++i) {
        const size_t begin = i + 1 >= 10 ? i + 1 - 10 : 0;
        double sum = 0.0;
        for (size_t j = begin; j <= i; ++j) sum += xs[j];
        CHECK(got[i] == doctest::Approx(sum / static_cast<double>(i - begin + 1)).epsilon(1e-15));
    }
    // spot values of the standard moving average across the step
    CHECK(got[24] == doctest::Approx(0.0));
    CHECK(got[29] == doctest::Approx(0.5));
    CHECK(got[34] == doctest::Approx(1.0));
}

TEST_CASE("metrics tables round-trip through text") {
    MetricsTable t;
    t.columns = {"update", "loss"};
    t.add_row({0, 5.55683});
    t.add_row({1, 5.25});
    t.add_row({2, 0.0001220703125});
    const std::string text = metrics_to_text(t);
    const auto parsed = parse_metrics_text(text);
    CHECK(parsed.columns == t.columns);
    REQUIRE(parsed.rows.size() == 3);
    CHECK(parsed.rows[2][1] == doctest::Approx(0.0001220703125).epsilon(1e-12));
    CHECK(metrics_to_text(parsed) == text);

    const auto dir = testsupport::temp_dir("metrics");
    save_metrics(dir + "/m.tsv", t);
    CHECK(metrics_to_text(load_metrics(dir + "/m.tsv")) == text);
}

TEST_CASE("report_dynamics emits the smoothed training curves") {
    MetricsTable t;
    t.columns = {"update", "mean_reward", "mean_traj_tokens", "mean_interactions",
                 "mean_kl", "clip_fraction", "degenerate", "loss"};
    for (int i = 0; i < 30; ++i)
        t.add_row({static_cast<double>(i), i < 15 ? 0.0 : 1.0, 100.0 + i, 4.0, 0.0, 0.0, 0.0, 0.0});
    const auto smoothed = report_dynamics(t, 10);
    CHECK(smoothed.columns ==
          std::vector<std::string>{"update", "reward_smooth", "traj_tokens_smooth", "interactions_smooth"});
    REQUIRE(smoothed.rows.size() == 30);
    CHECK(smoothed.rows[29][1] == doctest::Approx(1.0));
    CHECK(smoothed.rows[19][1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(report_dynamics(MetricsTable{}, 5), std::invalid_argument);
    CHECK_THROWS_AS(moving_average({1.0}, 0), std::invalid_argument);
}
