#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "oaprog/rng.hpp"
#include "oaprog/select.hpp"

using namespace oaprog;

namespace {

KneeInputs qualifying_knee() {
    KneeInputs k;
    k.knee_pain = true;
    k.crepitus = true;
    k.osteophytes = false;
    k.kl_grade = 2;
    k.womac_pain = 55.0;
    return k;
}

ConventionalInputs qualifying_patient() {
    ConventionalInputs in;
    in.age = 62.0;
    in.stiffness_minutes = 10.0;
    in.left = qualifying_knee();
    in.right = KneeInputs{};
    in.right.knee_pain = false;
    return in;
}

}  // namespace

TEST_CASE("a fully qualifying knee passes the clinical criteria") {
    auto in = qualifying_patient();
    auto mask = conventional_select({in});
    CHECK(mask.selected == std::vector<bool>{true});
    CHECK(mask.unevaluable == std::vector<bool>{false});
}

TEST_CASE("knee pain is mandatory") {
    auto in = qualifying_patient();
    in.left.knee_pain = false;
    auto mask = conventional_select({in});
    CHECK(mask.selected == std::vector<bool>{false});
    CHECK(mask.unevaluable == std::vector<bool>{false});  // decided, not unknown
}

TEST_CASE("KL grade must lie in 1..3") {
    auto in = qualifying_patient();
    in.left.kl_grade = 4;  // end-stage disease is excluded
    CHECK(conventional_select({in}).selected == std::vector<bool>{false});
    in.left.kl_grade = 0;  // no radiographic disease
    CHECK(conventional_select({in}).selected == std::vector<bool>{false});
    in.left.kl_grade = 1;
    CHECK(conventional_select({in}).selected == std::vector<bool>{true});
    in.left.kl_grade = 3;
    CHECK(conventional_select({in}).selected == std::vector<bool>{true});
}

TEST_CASE("the pain score floor is 40") {
    auto in = qualifying_patient();
    in.left.womac_pain = 39.9;
    CHECK(conventional_select({in}).selected == std::vector<bool>{false});
    in.left.womac_pain = 40.0;
    CHECK(conventional_select({in}).selected == std::vector<bool>{true});
}

TEST_CASE("one true clinical sign suffices; age and stiffness have cutoffs") {
    auto in = qualifying_patient();
    // remove every sign, then re-add one at a time
    in.age = 50.0;  // not > 50
    in.stiffness_minutes = 30.0;  // not < 30
    in.left.crepitus = false;
    in.left.osteophytes = false;
    CHECK(conventional_select({in}).selected == std::vector<bool>{false});

    auto with_age = in;
    with_age.age = 51.0;
    CHECK(conventional_select({with_age}).selected == std::vector<bool>{true});
    auto with_stiffness = in;
    with_stiffness.stiffness_minutes = 29.0;
    CHECK(conventional_select({with_stiffness}).selected == std::vector<bool>{true});
    auto with_crepitus = in;
    with_crepitus.left.crepitus = true;
    CHECK(conventional_select({with_crepitus}).selected == std::vector<bool>{true});
    auto with_osteophytes = in;
    with_osteophytes.left.osteophytes = true;
    CHECK(conventional_select({with_osteophytes}).selected == std::vector<bool>{true});
}

TEST_CASE("missing measurements are unevaluable, not rejected") {
    auto in = qualifying_patient();
    in.left.kl_grade = std::nullopt;  // KL never taken
    auto mask = conventional_select({in});
    CHECK(mask.selected == std::vector<bool>{false});
    CHECK(mask.unevaluable == std::vector<bool>{true});

    // a present failing conjunct beats missing fields: still a decided no
    in.left.womac_pain = 10.0;
    mask = conventional_select({in});
    CHECK(mask.selected == std::vector<bool>{false});
    CHECK(mask.unevaluable == std::vector<bool>{false});

    // all clinical signs reported false fails the disjunction outright
    auto no_signs = qualifying_patient();
    no_signs.age = 45.0;
    no_signs.stiffness_minutes = 60.0;
    no_signs.left.crepitus = false;
    no_signs.left.osteophytes = false;
    mask = conventional_select({no_signs});
    CHECK(mask.selected == std::vector<bool>{false});
    CHECK(mask.unevaluable == std::vector<bool>{false});

    // but if one sign is missing while the rest are false, it stays open
    no_signs.left.osteophytes = std::nullopt;
    mask = conventional_select({no_signs});
    CHECK(mask.selected == std::vector<bool>{false});
    CHECK(mask.unevaluable == std::vector<bool>{true});
}

TEST_CASE("either knee qualifying selects the patient") {
    ConventionalInputs in;
    in.age = 62.0;
    in.stiffness_minutes = 10.0;
    in.left.knee_pain = false;      // left is out
    in.right = qualifying_knee();   // right carries it
    CHECK(conventional_select({in}).selected == std::vector<bool>{true});
}

TEST_CASE("role-driven extraction from dataset rows, with KL range checks") {
    Dataset ds;
    auto add = [&](const std::string& name, AttributeRole role) {
        AttributeMeta m;
        m.name = name;
        m.kind = AttributeKind::ordinal;
        m.role = role;
        ds.attrs.push_back(m);
    };
    add("age", AttributeRole::age);
    add("kp_l", AttributeRole::knee_pain_left);
    add("kl_l", AttributeRole::kl_left);
    add("kl_r", AttributeRole::kl_right);
    add("wp_l", AttributeRole::pain_left);
    ds.rows.push_back({Value(62.0), Value(std::string("true")), Value(2.0), Value(7.0), Value(44.0)});
    ds.rows.push_back({Value{}, Value(0.0), Value(2.5), Value(1.0), Value{}});

    auto in0 = conventional_inputs(ds, 0);
    CHECK(in0.age == 62.0);
    CHECK(in0.left.knee_pain == true);
    CHECK(in0.left.kl_grade == 2);
    CHECK_FALSE(in0.right.kl_grade.has_value());  // 7 is out of range
    CHECK(in0.left.womac_pain == 44.0);
    CHECK_FALSE(in0.stiffness_minutes.has_value());  // no such column

    auto in1 = conventional_inputs(ds, 1);
    CHECK_FALSE(in1.age.has_value());
    CHECK(in1.left.knee_pain == false);              // numeric zero
    CHECK_FALSE(in1.left.kl_grade.has_value());      // 2.5 is not a grade
    CHECK(in1.right.kl_grade == 1);
}

TEST_CASE("label-driven selection takes every predicted progressor") {
    auto mask = ml_label_select({ProgressionClass::N, ProgressionClass::P, ProgressionClass::S,
                                 ProgressionClass::PS, ProgressionClass::N});
    CHECK(mask.selected == std::vector<bool>{false, true, true, true, false});
    CHECK(std::none_of(mask.unevaluable.begin(), mask.unevaluable.end(), [](bool b) { return b; }));
}

TEST_CASE("probability-ranked selection with disjoint list tops") {
    // id 0 dominates p(P)+p(S); id 1 dominates p(S); id 2 dominates p(P)
    std::vector<std::pair<double, double>> probs{
        {0.50, 0.49},  // sum 0.99
        {0.01, 0.90},  // top structure
        {0.95, 0.01},  // top pain
        {0.10, 0.10},
        {0.20, 0.05},
    };
    auto mask = ml_prob_select(probs, 3);
    CHECK(mask.selected == std::vector<bool>{true, true, true, false, false});
}

TEST_CASE("duplicates are skipped while walking each ranked list") {
    // one instance leads every list; the quotas must not double-count it
    std::vector<std::pair<double, double>> probs{
        {0.90, 0.90},
        {0.80, 0.10},
        {0.10, 0.80},
        {0.05, 0.05},
    };
    auto mask = ml_prob_select(probs, 3);
    std::size_t count = 0;
    for (bool b : mask.selected) count += b ? 1 : 0;
    CHECK(count == 3);
    CHECK(mask.selected[0]);  // the triple leader was taken once
    CHECK(mask.selected[1]);  // pain list contributes the runner-up
    CHECK(mask.selected[2]);  // structure list contributes its runner-up
}

TEST_CASE("the remainder of the quota goes to the combined list first") {
    std::vector<std::pair<double, double>> probs{
        {0.40, 0.40},  // combined leader
        {0.45, 0.30},  // combined runner-up
        {0.01, 0.44},  // structure leader
        {0.44, 0.01},  // pain leader
    };
    // target 4 = quotas (2, 1, 1)
    auto mask4 = ml_prob_select(probs, 4);
    CHECK(mask4.selected == std::vector<bool>{true, true, true, true});
    // target 2 = quotas (1, 1, 0): combined leader + structure leader
    auto mask2 = ml_prob_select(probs, 2);
    CHECK(mask2.selected == std::vector<bool>{true, false, true, false});
}

TEST_CASE("selection cardinality is exact for any feasible target") {
    Rng rng(44);
    std::vector<std::pair<double, double>> probs;
    for (int i = 0; i < 37; ++i) probs.push_back({rng.unit(), rng.unit()});
    for (std::size_t target : {0u, 1u, 2u, 3u, 12u, 36u, 37u}) {
        auto mask = ml_prob_select(probs, target);
        std::size_t count = 0;
        for (bool b : mask.selected) count += b ? 1 : 0;
        CHECK(count == target);
    }
    CHECK_THROWS_AS(ml_prob_select(probs, 38), ConfigError);
}

TEST_CASE("probability ties break by instance id") {
    std::vector<std::pair<double, double>> probs{
        {0.5, 0.5},
        {0.5, 0.5},
        {0.5, 0.5},
    };
    auto mask = ml_prob_select(probs, 2);
    CHECK(mask.selected == std::vector<bool>{true, true, false});
}

TEST_CASE("selection report aggregates counts, shares, and recalls") {
    std::vector<ProgressionClass> truth{
        ProgressionClass::N, ProgressionClass::N, ProgressionClass::P, ProgressionClass::P,
        ProgressionClass::S, ProgressionClass::S, ProgressionClass::PS, ProgressionClass::PS,
    };
    SelectionMask mask;
    mask.selected = {true, false, true, false, true, false, true, false};
    mask.unevaluable = {false, true, false, false, false, false, false, false};
    auto rep = selection_report(mask, truth);
    CHECK(rep.selected_total == 4);
    CHECK(rep.unevaluable_total == 1);
    CHECK(rep.counts == std::array<std::size_t, 4>{1, 1, 1, 1});
    for (double share : rep.shares) CHECK(share == 0.25);
    for (double recall : rep.recalls) CHECK(recall == 0.5);
    CHECK(rep.progressive_recall == 0.5);  // 3 of 6 progressors captured

    SelectionMask empty;
    empty.selected.assign(8, false);
    empty.unevaluable.assign(8, false);
    auto rep0 = selection_report(empty, truth);
    CHECK(rep0.selected_total == 0);
    CHECK(rep0.shares[0] == 0.0);

    SelectionMask bad;
    bad.selected = {true};
    CHECK_THROWS_AS(selection_report(bad, truth), DataError);
}
