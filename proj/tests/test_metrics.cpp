#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qalab/metrics.hpp"

using namespace qalab;

TEST_CASE("answer normalization") {
    CHECK(normalize_answer("Really  Sluggish!") == "really sluggish");
    CHECK(normalize_answer("  The answer.  ") == "the answer");
    CHECK(normalize_answer("a, b; c") == "a b c");
    CHECK(normalize_answer("") == "");
    CHECK(normalize_answer("...") == "");
    // articles are kept, unlike the common variant that strips them
    CHECK(normalize_answer("the battery") == "the battery");
}

TEST_CASE("exact match ignores case, punctuation and extra whitespace") {
    CHECK(exact_match("really sluggish", "Really Sluggish") == 1);
    CHECK(exact_match("really  sluggish.", "really sluggish") == 1);
    CHECK(exact_match("really sluggish", "sluggish") == 0);
    CHECK(exact_match("", "") == 1);
    CHECK(exact_match("x", "") == 0);
    CHECK(exact_match("", "x") == 0);
}

TEST_CASE("span F1 on a partial overlap") {
    // pred has 6 of 7 gold tokens and nothing else: p = 1, r = 6/7
    std::string gold = "one two three four five six seven";
    std::string pred = "one two three four five six";
    double p = 1.0, r = 6.0 / 7.0;
    CHECK(span_f1(pred, gold) == doctest::Approx(2 * p * r / (p + r)));
    CHECK(span_f1(gold, gold) == doctest::Approx(1.0));
    CHECK(span_f1("unrelated words", gold) == doctest::Approx(0.0));
    CHECK(span_f1("", "") == doctest::Approx(1.0));
    CHECK(span_f1("", gold) == doctest::Approx(0.0));
    CHECK(span_f1(pred, "") == doctest::Approx(0.0));
}

TEST_CASE("span F1 counts duplicate tokens by multiplicity") {
    // pred "a a", gold "a": one shared token, p = 1/2, r = 1
    CHECK(span_f1("a a", "a") == doctest::Approx(2 * 0.5 * 1.0 / 1.5));
    CHECK(span_f1("a a", "a a") == doctest::Approx(1.0));
}

TEST_CASE("macro F1 hand-checked on a two-class fixture") {
    // golds: 0 0 0 1, preds: 0 0 1 1
    // class 0: p = 1, r = 2/3, f1 = 0.8; class 1: p = 1/2, r = 1, f1 = 2/3
    std::vector<int> golds{0, 0, 0, 1};
    std::vector<int> preds{0, 0, 1, 1};
    CHECK(macro_f1(preds, golds, 2) == doctest::Approx((0.8 + 2.0 / 3.0) / 2));
}

TEST_CASE("macro F1 counts absent classes as zero") {
    // class 2 never appears in gold or pred: contributes 0 to the mean
    std::vector<int> golds{0, 0, 1, 1};
    std::vector<int> preds{0, 0, 1, 1};
    CHECK(macro_f1(preds, golds, 3) == doctest::Approx(2.0 / 3.0));
    CHECK(macro_f1(preds, golds, 2) == doctest::Approx(1.0));
}

TEST_CASE("macro F1 near-perfect minority example") {
    // 18 of class 0 all correct, 2 of class 1 both predicted as 0
    std::vector<int> golds(20, 0), preds(20, 0);
    golds[18] = golds[19] = 1;
    // class 0: p = 18/20, r = 1 -> 18/19; class 1: 0
    double f0 = 2.0 * (18.0 / 20.0) * 1.0 / (18.0 / 20.0 + 1.0);
    CHECK(macro_f1(preds, golds, 2) == doctest::Approx(f0 / 2));
    CHECK(macro_f1(preds, golds, 2) == doctest::Approx(0.47368421).epsilon(1e-6));
}

TEST_CASE("confusion matrix layout and normalization") {
    std::vector<int> golds{0, 0, 1, 2, 2, 2};
    std::vector<int> preds{0, 1, 1, 2, 2, 0};
    ConfusionMatrix cm = confusion(preds, golds, 3, {"a", "b", "c"});
    CHECK(cm.total() == 6);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(2, 2) == 2);
    CHECK(cm.at(2, 0) == 1);
    auto norm = cm.normalized();
    CHECK(norm[0 * 3 + 0] == doctest::Approx(0.5));
    CHECK(norm[2 * 3 + 2] == doctest::Approx(2.0 / 3.0));
    // a class with no gold examples keeps a zero row
    ConfusionMatrix cm2 = confusion({0, 0}, {0, 0}, 2);
    auto norm2 = cm2.normalized();
    CHECK(norm2[1 * 2 + 0] == 0.0);
    CHECK(norm2[1 * 2 + 1] == 0.0);
    CHECK_THROWS_AS(confusion({0, 5}, {0, 0}, 2), std::out_of_range);
}

TEST_CASE("grouped report aggregates and sorts by EM descending") {
    std::vector<ScoredExample> ex{
        {"books", "how was it?", 1, 1.0},  {"books", "what is it?", 0, 0.5},
        {"movies", "how was it?", 1, 1.0}, {"movies", "is it good?", 1, 0.8},
        {"grocery", "how was it?", 0, 0.0}};
    auto by_domain = grouped_report(ex, GroupKey::domain);
    REQUIRE(by_domain.size() == 3);
    CHECK(by_domain[0].group == "movies");
    CHECK(by_domain[0].em == doctest::Approx(100.0));
    CHECK(by_domain[0].f1 == doctest::Approx(90.0));
    CHECK(by_domain[1].group == "books");
    CHECK(by_domain[1].em == doctest::Approx(50.0));
    CHECK(by_domain[2].group == "grocery");
    CHECK(by_domain[2].size == 1);

    auto by_word = grouped_report(ex, GroupKey::interrogative);
    REQUIRE(by_word.size() == 3);
    CHECK(by_word[0].group == "is");
    CHECK(by_word[0].em == doctest::Approx(100.0));
    bool found_how = false;
    for (const auto& r : by_word)
        if (r.group == "how") {
            found_how = true;
            CHECK(r.size == 3);
            CHECK(r.em == doctest::Approx(200.0 / 3.0));
        }
    CHECK(found_how);
}

TEST_CASE("group tables render every row") {
    std::vector<GroupRow> rows{{"books", 10, 75.0, 80.5}, {"movies", 5, 40.0, 55.25}};
    std::string table = format_group_table(rows);
    CHECK(table.find("books") != std::string::npos);
    CHECK(table.find("75.00") != std::string::npos);
    std::string csv = group_table_csv(rows);
    CHECK(csv.find("group,n,em,f1") != std::string::npos);
    CHECK(csv.find("movies,5,40.00,55.25") != std::string::npos);
}
