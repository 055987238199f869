#include <catch2/catch_amalgamated.hpp>

#include "oaprog/metrics.hpp"
#include "oaprog/rng.hpp"

using namespace oaprog;

TEST_CASE("confusion matrix counts truth rows against prediction columns") {
    auto m = confusion_matrix({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(0, 1) == 1);
    CHECK(m.at(1, 0) == 0);
    CHECK(m.at(1, 1) == 2);
    CHECK(m.total() == 4);
    CHECK_THROWS_AS(confusion_matrix({0}, {5}, 2), DataError);
    CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}, 2), DataError);
}

TEST_CASE("weighted F1 on the two-class hand case") {
    // class 0: P=1, R=1/2, F1=2/3; class 1: P=2/3, R=1, F1=4/5
    // supports are equal, so the weighted mean is 11/15
    double f1 = weighted_f1({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(f1 == Catch::Approx(11.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("weighted F1 degenerate classes score zero") {
    // class 1 never predicted: F1 contribution 0, weight 1/2
    CHECK(weighted_f1({0, 1}, {0, 0}, 2) == Catch::Approx(1.0 / 3.0));
    // perfect prediction
    CHECK(weighted_f1({0, 1, 2, 3}, {0, 1, 2, 3}, 4) == 1.0);
    // an absent class carries no weight
    CHECK(weighted_f1({0, 0}, {0, 0}, 3) == 1.0);
    CHECK_THROWS_AS(weighted_f1({}, {}, 2), DataError);
}

TEST_CASE("weighted F1 matches sklearn on a 3-class example") {
    // truth (0,1,2,0,1,2) pred (0,2,1,0,0,1):
    // class0: tp=2, pred=3, support=2 -> P=2/3, R=1, F1=4/5
    // class1: tp=0 -> 0;  class2: tp=0 -> 0
    // weighted = (2/6)*(4/5) = 4/15
    CHECK(weighted_f1({0, 1, 2, 0, 1, 2}, {0, 2, 1, 0, 0, 1}, 3) ==
          Catch::Approx(4.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("median of odd and even lengths") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(median({7.0}) == 7.0);
    CHECK_THROWS_AS(median({}), DataError);
}

TEST_CASE("median absolute deviation resists one outlier") {
    CHECK(median_absolute_deviation({1.0, 2.0, 3.0, 4.0, 100.0}) == 1.0);
    CHECK(median_absolute_deviation({5.0, 5.0, 5.0}) == 0.0);
}

TEST_CASE("binomial order-statistic CI uses ranks 40 and 60 at n=100") {
    // the values are 1..100 shuffled, so rank r has value r
    std::vector<double> v(100);
    for (std::size_t i = 0; i < 100; ++i) v[i] = static_cast<double>(i + 1);
    Rng rng(1);
    rng.shuffle(v);
    auto [lo, hi] = binomial_ci_median(v);
    CHECK(lo == 40.0);
    CHECK(hi == 60.0);
}

TEST_CASE("binomial CI ranks at n=9 are 2 and 7") {
    std::vector<double> v{9, 8, 7, 6, 5, 4, 3, 2, 1};
    auto [lo, hi] = binomial_ci_median(v);
    CHECK(lo == 2.0);
    CHECK(hi == 7.0);
}

TEST_CASE("binomial CI collapses to the value itself at n=1") {
    auto [lo, hi] = binomial_ci_median({0.42});
    CHECK(lo == 0.42);
    CHECK(hi == 0.42);
    CHECK_THROWS_AS(binomial_ci_median({}), DataError);
    CHECK_THROWS_AS(binomial_ci_median({1.0}, 1.5), ConfigError);
}

TEST_CASE("binomial quantile against known Binomial(100, 1/2) values") {
    CHECK(detail::binom_quantile(0.025, 100, 0.5) == 40);
    CHECK(detail::binom_quantile(0.975, 100, 0.5) == 60);
    CHECK(detail::binom_quantile(0.5, 100, 0.5) == 50);
}

TEST_CASE("ROC curve on the classic four-point example") {
    auto roc = roc_curve({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0});
    CHECK(roc.auc == Catch::Approx(0.75));
    REQUIRE(roc.points.size() == 5);
    CHECK(roc.points.front() == std::pair{0.0, 0.0});
    CHECK(roc.points.back() == std::pair{1.0, 1.0});
}

TEST_CASE("ROC extremes: separable, inverted, and all-tied scores") {
    CHECK(roc_curve({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}).auc == Catch::Approx(1.0));
    CHECK(roc_curve({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}).auc == Catch::Approx(0.0));
    CHECK(roc_curve({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}).auc == Catch::Approx(0.5));
    CHECK_THROWS_AS(roc_curve({0.5}, {1}), DataError);
}

TEST_CASE("kNN vote with k=5 on a separable line") {
    std::vector<std::vector<double>> train;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
        train.push_back({i < 5 ? 0.1 * i : 0.5 + 0.1 * i});
        labels.push_back(i < 5 ? 0 : 1);
    }
    auto pred = knn_predict(train, labels, {{0.0}, {1.4}}, 2, 5);
    CHECK(pred == std::vector<int>{0, 1});
}

TEST_CASE("kNN vote ties resolve to the lowest class index") {
    // four neighbours at the same distance, two of each class, k=4
    std::vector<std::vector<double>> train{{0.0}, {0.0}, {2.0}, {2.0}};
    std::vector<int> labels{1, 1, 0, 0};
    auto pred = knn_predict(train, labels, {{1.0}}, 2, 4);
    CHECK(pred == std::vector<int>{0});
}

TEST_CASE("kNN clamps k to the training size") {
    auto pred = knn_predict({{0.0}}, {1}, {{5.0}}, 2, 5);
    CHECK(pred == std::vector<int>{1});
    CHECK_THROWS_AS(knn_predict({}, {}, {{1.0}}, 2, 5), DataError);
}
