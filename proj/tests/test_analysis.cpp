#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qalab/analysis.hpp"

using namespace qalab;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Mat m(r, c);
    for (auto& v : m.v) v = d(rng);
    return m;
}

// mean cosine over ordered pairs of centered rows: the reference path for
// the full-variance pipeline
double centered_cosine(const Mat& rows) {
    int t = rows.rows, d = rows.cols;
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) mean[j] += rows.at(i, j) / t;
    double total = 0.0;
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) {
            if (i == j) continue;
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (int c = 0; c < d; ++c) {
                double a = rows.at(i, c) - mean[c];
                double b = rows.at(j, c) - mean[c];
                dot += a * b;
                ni += a * a;
                nj += b * b;
            }
            double cs = dot / std::sqrt(ni * nj);
            total += std::clamp(cs, -1.0, 1.0);
        }
    return total / (static_cast<double>(t) * t - t);
}

// traces with a planted effect: correct traces have nearly parallel answer
// rows, erroneous ones point in random directions
std::vector<HiddenTrace> planted_traces(int n_correct, int n_wrong, int layers,
                                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<HiddenTrace> traces;
    int t = 8, d = 12;
    for (int i = 0; i < n_correct + n_wrong; ++i) {
        HiddenTrace tr;
        tr.example_id = "ex-" + std::to_string(i);
        tr.correct = i < n_correct;
        tr.answerable = true;
        tr.gold_start = 4;
        tr.gold_end = 6;
        tr.roles.assign(t, TokenRole::context);
        tr.roles[0] = TokenRole::cls;
        tr.domain = i % 2 ? "books" : "movies";
        tr.dataset_source = "subj-like";
        for (int l = 0; l < layers; ++l) {
            Mat h = random_mat(t, d, rng);
            if (tr.correct) {
                // align the answer rows along one strong direction
                std::vector<double> dir(d);
                for (auto& v : dir) v = unit(rng);
                for (int r = tr.gold_start; r <= tr.gold_end; ++r)
                    for (int c = 0; c < d; ++c)
                        h.at(r, c) = 20.0 * dir[c] + noise(rng);
            }
            tr.layers.push_back(std::move(h));
        }
        traces.push_back(std::move(tr));
    }
    return traces;
}

}  // namespace

TEST_CASE("pca ratios are non-increasing and sum to one") {
    std::mt19937_64 rng(1);
    Mat x = random_mat(40, 6, rng);
    PcaResult r = pca_fit_transform(x, 0.95);
    double total = 0.0;
    for (std::size_t i = 0; i < r.explained_ratio.size(); ++i) {
        total += r.explained_ratio[i];
        if (i > 0) CHECK(r.explained_ratio[i] <= r.explained_ratio[i - 1] + 1e-12);
    }
    CHECK(total == doctest::Approx(1.0));
    CHECK(r.components >= 1);
    CHECK(r.components <= 6);
    CHECK(r.projected.rows == 40);
    CHECK(r.projected.cols == r.components);
}

TEST_CASE("pca keeps the minimal component count reaching the target") {
    // variance concentrated on two axes: 16 : 4 : ~0 -> ratios 0.8, 0.2
    std::mt19937_64 rng(2);
    Mat x(200, 3);
    std::normal_distribution<double> d1(0.0, 4.0), d2(0.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        x.at(i, 0) = d1(rng);
        x.at(i, 1) = d2(rng);
        x.at(i, 2) = 0.0;
    }
    CHECK(pca_fit_transform(x, 0.75).components == 1);
    CHECK(pca_fit_transform(x, 0.9).components == 2);
    CHECK(pca_fit_transform(x, 1.0).components <= 3);
}

TEST_CASE("pca on collinear points needs one component") {
    Mat x(5, 3);
    for (int i = 0; i < 5; ++i) {
        x.at(i, 0) = i * 1.0;
        x.at(i, 1) = i * 2.0;
        x.at(i, 2) = -i * 1.0;
    }
    PcaResult r = pca_fit_transform(x, 0.95);
    CHECK(r.components == 1);
    CHECK(r.explained_ratio[0] == doctest::Approx(1.0));
}

TEST_CASE("full-variance pca is a distance-preserving rotation") {
    std::mt19937_64 rng(3);
    Mat x = random_mat(15, 5, rng);
    PcaResult r = pca_fit_transform(x, 1.0);
    // centered pairwise distances survive the change of basis
    std::vector<double> mean(5, 0.0);
    for (int i = 0; i < 15; ++i)
        for (int j = 0; j < 5; ++j) mean[j] += x.at(i, j) / 15;
    for (int i = 0; i < 15; ++i)
        for (int j = i + 1; j < 15; ++j) {
            double d_orig = 0.0, d_proj = 0.0;
            for (int c = 0; c < 5; ++c) {
                double diff = x.at(i, c) - x.at(j, c);
                d_orig += diff * diff;
            }
            for (int c = 0; c < r.projected.cols; ++c) {
                double diff = r.projected.at(i, c) - r.projected.at(j, c);
                d_proj += diff * diff;
            }
            CHECK(std::sqrt(d_proj) == doctest::Approx(std::sqrt(d_orig)).epsilon(1e-8));
        }
}

TEST_CASE("tsne affinities are symmetric, non-negative and sum to one") {
    std::mt19937_64 rng(4);
    Mat x = random_mat(20, 4, rng);
    Mat p = tsne_affinities(x, 5.0);
    REQUIRE(p.rows == 20);
    REQUIRE(p.cols == 20);
    double total = 0.0;
    for (int i = 0; i < 20; ++i) {
        CHECK(p.at(i, i) == doctest::Approx(0.0));
        for (int j = 0; j < 20; ++j) {
            CHECK(p.at(i, j) >= 0.0);
            CHECK(p.at(i, j) == doctest::Approx(p.at(j, i)).epsilon(1e-12));
            total += p.at(i, j);
        }
    }
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("tsne keeps well-separated clusters separated") {
    // three tight clusters far apart in 10 dimensions; after the embedding,
    // at least 90 percent of points have a same-cluster nearest neighbor
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    int per = 15, d = 10;
    Mat x(3 * per, d);
    std::vector<int> label(3 * per);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per; ++i) {
            int r = c * per + i;
            label[r] = c;
            for (int j = 0; j < d; ++j)
                x.at(r, j) = (j == c ? 25.0 : 0.0) + noise(rng);
        }
    TsneConfig config;
    config.perplexity = 8.0;
    config.iters = 400;
    config.seed = 7;
    Mat y = tsne_2d(x, config);
    REQUIRE(y.rows == 3 * per);
    REQUIRE(y.cols == 2);
    int pure = 0;
    for (int i = 0; i < y.rows; ++i) {
        double best = 1e300;
        int nn = -1;
        for (int j = 0; j < y.rows; ++j) {
            if (i == j) continue;
            double dx = y.at(i, 0) - y.at(j, 0), dy = y.at(i, 1) - y.at(j, 1);
            double dist = dx * dx + dy * dy;
            if (dist < best) {
                best = dist;
                nn = j;
            }
        }
        if (label[nn] == label[i]) ++pure;
    }
    CHECK(static_cast<double>(pure) / y.rows >= 0.9);
}

TEST_CASE("tsne is deterministic for a fixed seed") {
    std::mt19937_64 rng(6);
    Mat x = random_mat(12, 3, rng);
    TsneConfig config;
    config.perplexity = 4.0;
    config.iters = 100;
    config.seed = 3;
    Mat a = tsne_2d(x, config);
    Mat b = tsne_2d(x, config);
    CHECK(a.v == b.v);
}

TEST_CASE("average answer cosine on the unit-vector fixture") {
    // rows e1, e1, e2: ordered-pair cosines are 1, 0, 0 each counted twice
    Mat rows(3, 3);
    rows.at(0, 0) = 1.0;
    rows.at(1, 0) = 1.0;
    rows.at(2, 1) = 1.0;
    CHECK(avg_answer_cosine(rows) == doctest::Approx(1.0 / 3.0));
    // identical rows: exactly 1, clamped against rounding
    Mat same(4, 2);
    for (int i = 0; i < 4; ++i) {
        same.at(i, 0) = 0.6;
        same.at(i, 1) = 0.8;
    }
    CHECK(avg_answer_cosine(same) == doctest::Approx(1.0));
    CHECK(avg_answer_cosine(same) <= 1.0);
    // opposite rows: -1
    Mat opp(2, 2);
    opp.at(0, 0) = 1.0;
    opp.at(1, 0) = -1.0;
    CHECK(avg_answer_cosine(opp) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(avg_answer_cosine(Mat(1, 2)), std::invalid_argument);
}

TEST_CASE("cosine distributions skip unanswerable and single-token spans") {
    auto traces = planted_traces(4, 4, 2, 11);
    traces[0].answerable = false;
    traces[0].gold_start = 0;
    traces[0].gold_end = 0;
    traces[1].gold_end = traces[1].gold_start;  // single token
    CosineGroups g = cosine_distributions(traces, 1, 0.95);
    CHECK(g.skipped_unanswerable == 1);
    CHECK(g.skipped_single_token == 1);
    CHECK(g.correct.size() == 2);
    CHECK(g.erroneous.size() == 4);
    for (const auto& s : g.correct) {
        CHECK(s.layer == 1);
        CHECK(s.correct);
        CHECK(s.cos_a >= -1.0);
        CHECK(s.cos_a <= 1.0);
    }
}

TEST_CASE("full-variance pipeline equals the center-then-cosine reference") {
    // with every component kept, PCA only rotates the centered rows, so the
    // pipeline must agree with a direct computation on the centered matrix
    auto traces = planted_traces(3, 3, 1, 12);
    CosineGroups g = cosine_distributions(traces, 1, 1.0);
    REQUIRE(g.correct.size() == 3);
    REQUIRE(g.erroneous.size() == 3);
    std::vector<CosineSample> all = g.correct;
    all.insert(all.end(), g.erroneous.begin(), g.erroneous.end());
    std::size_t idx = 0;
    for (const auto& trace : traces) {
        const Mat& h = trace.layers[0];
        int span = trace.gold_end - trace.gold_start + 1;
        Mat answer(span, h.cols);
        for (int r = 0; r < span; ++r)
            for (int c = 0; c < h.cols; ++c)
                answer.at(r, c) = h.at(trace.gold_start + r, c);
        // reference: center the full matrix, then cosine over answer rows
        Mat centered = h;
        for (int c = 0; c < h.cols; ++c) {
            double m = 0.0;
            for (int r = 0; r < h.rows; ++r) m += h.at(r, c) / h.rows;
            for (int r = 0; r < h.rows; ++r) centered.at(r, c) -= m;
        }
        Mat centered_answer(span, h.cols);
        for (int r = 0; r < span; ++r)
            for (int c = 0; c < h.cols; ++c)
                centered_answer.at(r, c) = centered.at(trace.gold_start + r, c);
        double expect = avg_answer_cosine(centered_answer);
        REQUIRE(idx < all.size());
        // match the sample for this trace by correctness group ordering
        double got = trace.correct ? g.correct[idx % 3].cos_a
                                   : g.erroneous[idx % 3].cos_a;
        CHECK(got == doctest::Approx(expect).epsilon(1e-9));
        ++idx;
    }
}

TEST_CASE("analysis report finds the planted alignment effect") {
    auto traces = planted_traces(12, 12, 3, 13);
    AnalysisReport report = analysis_report(traces, 0.95);
    CHECK(report.num_layers == 3);
    REQUIRE(report.layers.size() == 3);
    for (const auto& ls : report.layers) {
        REQUIRE(ls.test_applicable);
        CHECK(ls.correct.n == 12);
        CHECK(ls.erroneous.n == 12);
        // aligned answer rows give a higher mean cosine and a significant gap
        CHECK(ls.correct.mean > ls.erroneous.mean);
        CHECK(ls.p_raw < 0.05);
        CHECK(ls.p_corrected == doctest::Approx(std::min(1.0, ls.p_raw * 3)));
        CHECK(ls.correct.histogram.size() == kHistogramBins);
        long long mass = 0;
        for (long long b : ls.correct.histogram) mass += b;
        CHECK(mass == ls.correct.n);
        CHECK(ls.correct.frac_above_half > ls.erroneous.frac_above_half);
        CHECK(ls.correct.box.min <= ls.correct.box.q1);
        CHECK(ls.correct.box.q1 <= ls.correct.box.median);
        CHECK(ls.correct.box.median <= ls.correct.box.q3);
        CHECK(ls.correct.box.q3 <= ls.correct.box.max);
    }
}

TEST_CASE("report serialization carries the layer table") {
    auto traces = planted_traces(5, 5, 2, 14);
    AnalysisReport report = analysis_report(traces, 0.9);
    std::string json = report_to_json(report);
    CHECK(json.find("\"histogram_bins\": 41") != std::string::npos);
    CHECK(json.find("\"p_corrected\"") != std::string::npos);
    CHECK(json.find("\"frac_above_half\"") != std::string::npos);
    std::string csv = layer_samples_csv(report, 1);
    CHECK(csv.find("layer,cos_a,correct") != std::string::npos);
    // header plus one row per retained sample
    int lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == 1 + static_cast<int>(report.layer_samples[0].size()));
    CHECK_THROWS_AS(layer_samples_csv(report, 3), std::out_of_range);
}

TEST_CASE("cls projections label points per view") {
    auto traces = planted_traces(6, 6, 2, 15);
    for (auto& tr : traces) {
        tr.subj_question = tr.correct;
        tr.subj_answer = false;
    }
    TsneConfig config;
    config.perplexity = 3.0;
    config.iters = 60;
    config.seed = 1;
    auto views = project_cls(traces, ProjectionLabel::domain, 0.95, config);
    REQUIRE(views.size() == 2);
    for (const auto& layer_points : views) {
        REQUIRE(layer_points.size() == traces.size());
        for (const auto& p : layer_points)
            CHECK((p.label == "books" || p.label == "movies"));
    }
    auto subj = project_cls(traces, ProjectionLabel::subjectivity3way, 0.95, config);
    bool saw_subjective = false, saw_objective = false;
    for (const auto& p : subj[0]) {
        if (p.label.find("subjective") != std::string::npos) saw_subjective = true;
        if (p.label.rfind("objective-", 0) == 0) saw_objective = true;
    }
    CHECK(saw_subjective);
    CHECK(saw_objective);
    std::string csv = projection_csv(subj[0]);
    CHECK(csv.find("id,x,y,label") != std::string::npos);
}
