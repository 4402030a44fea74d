#include "qalab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace qalab {

// ---- PCA ----

namespace {

// cyclic Jacobi eigendecomposition of a symmetric matrix; returns
// (eigenvalues, eigenvectors as columns), both unsorted
void jacobi_eigen(Mat a, std::vector<double>& eigvals, Mat& eigvecs) {
    int n = a.rows;
    eigvecs = Mat(n, n);
    for (int i = 0; i < n; ++i) eigvecs.at(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
        double scale = 0.0;
        for (int i = 0; i < n; ++i) scale += std::abs(a.at(i, i));
        if (off <= 1e-24 * std::max(scale * scale, 1e-300)) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a.at(i, p), aiq = a.at(i, q);
                    a.at(i, p) = c * aip - s * aiq;
                    a.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = a.at(p, i), aqi = a.at(q, i);
                    a.at(p, i) = c * api - s * aqi;
                    a.at(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = eigvecs.at(i, p), viq = eigvecs.at(i, q);
                    eigvecs.at(i, p) = c * vip - s * viq;
                    eigvecs.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (int i = 0; i < n; ++i) eigvals[i] = a.at(i, i);
}

}  // namespace

PcaResult pca_fit_transform(const Mat& x, double variance_target) {
    int n = x.rows, d = x.cols;
    if (n < 2) throw std::invalid_argument("pca: need at least 2 samples");
    if (variance_target <= 0.0 || variance_target > 1.0)
        throw std::invalid_argument("pca: variance target must be in (0, 1]");
    // center columns
    Mat centered = x;
    for (int j = 0; j < d; ++j) {
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += x.at(i, j);
        mu /= n;
        for (int i = 0; i < n; ++i) centered.at(i, j) -= mu;
    }
    Mat cov(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            double s = 0.0;
            for (int r = 0; r < n; ++r) s += centered.at(r, i) * centered.at(r, j);
            s /= (n - 1);
            cov.at(i, j) = s;
            cov.at(j, i) = s;
        }
    double total_var = 0.0;
    for (int i = 0; i < d; ++i) total_var += cov.at(i, i);
    if (total_var <= 0.0)
        throw std::invalid_argument("pca: zero total variance");

    std::vector<double> eigvals;
    Mat eigvecs;
    jacobi_eigen(cov, eigvals, eigvecs);
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return eigvals[a] > eigvals[b]; });

    PcaResult res;
    res.explained_ratio.resize(d);
    for (int i = 0; i < d; ++i)
        res.explained_ratio[i] = std::max(0.0, eigvals[order[i]]) / total_var;
    double cum = 0.0;
    int p = d;
    for (int i = 0; i < d; ++i) {
        cum += res.explained_ratio[i];
        if (cum >= variance_target - 1e-12) {
            p = i + 1;
            break;
        }
    }
    res.components = p;
    res.projected = Mat(n, p);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < p; ++c) {
            double s = 0.0;
            for (int j = 0; j < d; ++j)
                s += centered.at(i, j) * eigvecs.at(j, order[c]);
            res.projected.at(i, c) = s;
        }
    return res;
}

// ---- t-SNE ----

Mat tsne_affinities(const Mat& x, double perplexity) {
    int n = x.rows;
    if (n < 4) throw std::invalid_argument("tsne: need at least 4 points");
    if (perplexity >= n) throw std::invalid_argument("tsne: perplexity must be < n");
    Mat d2(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int c = 0; c < x.cols; ++c) {
                double diff = x.at(i, c) - x.at(j, c);
                s += diff * diff;
            }
            d2.at(i, j) = s;
            d2.at(j, i) = s;
        }
    double target_entropy = std::log(perplexity);
    Mat cond(n, n);  // p_{j|i}
    for (int i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = 0.0, beta_hi = 1e300;
        for (int iter = 0; iter < 64; ++iter) {
            double z = 0.0, acc = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double pj = std::exp(-beta * d2.at(i, j));
                cond.at(i, j) = pj;
                z += pj;
                acc += beta * d2.at(i, j) * pj;
            }
            double entropy = std::log(z) + acc / z;
            double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0.0) {
                beta_lo = beta;
                beta = beta_hi >= 1e300 ? beta * 2.0 : 0.5 * (beta_lo + beta_hi);
            } else {
                beta_hi = beta;
                beta = beta_lo <= 0.0 ? beta / 2.0 : 0.5 * (beta_lo + beta_hi);
            }
        }
        double z = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) z += cond.at(i, j);
        for (int j = 0; j < n; ++j)
            if (j != i) cond.at(i, j) /= z;
    }
    Mat p(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j)
                p.at(i, j) = (cond.at(i, j) + cond.at(j, i)) / (2.0 * n);
    return p;
}

Mat tsne_2d(const Mat& x_in, const TsneConfig& config) {
    int n = x_in.rows;
    Mat x = x_in;
    // degenerate duplicate points get a seeded jitter
    bool has_duplicate = false;
    for (int i = 0; i < n && !has_duplicate; ++i)
        for (int j = i + 1; j < n && !has_duplicate; ++j) {
            double s = 0.0;
            for (int c = 0; c < x.cols; ++c) {
                double diff = x.at(i, c) - x.at(j, c);
                s += diff * diff;
            }
            if (s == 0.0) has_duplicate = true;
        }
    std::mt19937_64 rng(config.seed);
    if (has_duplicate) {
        std::normal_distribution<double> jitter(0.0, 1e-10);
        for (auto& v : x.v) v += jitter(rng);
    }
    Mat p = tsne_affinities(x, config.perplexity);
    for (auto& v : p.v) v = std::max(v, 1e-12);

    Mat y(n, 2);
    std::normal_distribution<double> init(0.0, 1e-4);
    for (auto& v : y.v) v = init(rng);
    Mat vel(n, 2), gains(n, 2);
    for (auto& g : gains.v) g = 1.0;

    const double lr = 200.0;
    const int exaggeration_iters = 250;
    for (int iter = 0; iter < config.iters; ++iter) {
        double exaggeration = iter < exaggeration_iters ? 12.0 : 1.0;
        double momentum = iter < exaggeration_iters ? 0.5 : 0.8;
        // student-t kernel
        Mat num(n, n);
        double z = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double dx = y.at(i, 0) - y.at(j, 0);
                double dy = y.at(i, 1) - y.at(j, 1);
                double k = 1.0 / (1.0 + dx * dx + dy * dy);
                num.at(i, j) = k;
                num.at(j, i) = k;
                z += 2.0 * k;
            }
        // all gradients come from the same snapshot of y; updating points
        // mid-sweep against the stale kernel makes the layout diverge
        Mat grad(n, 2);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double q = std::max(num.at(i, j) / z, 1e-12);
                double mult = (exaggeration * p.at(i, j) - q) * num.at(i, j);
                grad.at(i, 0) += 4.0 * mult * (y.at(i, 0) - y.at(j, 0));
                grad.at(i, 1) += 4.0 * mult * (y.at(i, 1) - y.at(j, 1));
            }
        }
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                double g = grad.at(i, c);
                bool same_sign = (g > 0.0) == (vel.at(i, c) > 0.0);
                gains.at(i, c) = std::max(0.01, same_sign ? gains.at(i, c) * 0.8
                                                          : gains.at(i, c) + 0.2);
                vel.at(i, c) = momentum * vel.at(i, c) - lr * gains.at(i, c) * g;
                y.at(i, c) += vel.at(i, c);
            }
        }
        // keep the embedding centered
        for (int c = 0; c < 2; ++c) {
            double mu = 0.0;
            for (int i = 0; i < n; ++i) mu += y.at(i, c);
            mu /= n;
            for (int i = 0; i < n; ++i) y.at(i, c) -= mu;
        }
    }
    return y;
}

// ---- cosine statistics ----

double avg_answer_cosine(const Mat& answer_rows) {
    int t = answer_rows.rows, p = answer_rows.cols;
    if (t < 2)
        throw std::invalid_argument("avg_answer_cosine: need at least 2 rows");
    std::vector<double> norms(t);
    for (int i = 0; i < t; ++i) {
        double s = 0.0;
        for (int c = 0; c < p; ++c) s += answer_rows.at(i, c) * answer_rows.at(i, c);
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            throw std::invalid_argument("avg_answer_cosine: zero-norm row " +
                                        std::to_string(i));
    }
    double acc = 0.0;
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) {
            if (i == j) continue;
            double dot = 0.0;
            for (int c = 0; c < p; ++c) dot += answer_rows.at(i, c) * answer_rows.at(j, c);
            acc += dot / (norms[i] * norms[j]);
        }
    double result = acc / (static_cast<double>(t) * t - t);
    return std::clamp(result, -1.0, 1.0);
}

CosineGroups cosine_distributions(const std::vector<HiddenTrace>& traces, int layer,
                                  double variance_target) {
    CosineGroups out;
    for (const auto& trace : traces) {
        if (layer < 1 || layer > static_cast<int>(trace.layers.size()))
            throw std::out_of_range("cosine_distributions: layer out of range");
        if (!trace.answerable) {
            ++out.skipped_unanswerable;
            continue;
        }
        int t_a = trace.gold_end - trace.gold_start + 1;
        if (t_a < 2) {
            ++out.skipped_single_token;
            continue;
        }
        const Mat& h = trace.layers[layer - 1];
        PcaResult pca = pca_fit_transform(h, variance_target);
        Mat answer(t_a, pca.projected.cols);
        for (int i = 0; i < t_a; ++i)
            for (int c = 0; c < pca.projected.cols; ++c)
                answer.at(i, c) = pca.projected.at(trace.gold_start + i, c);
        CosineSample s{layer, avg_answer_cosine(answer), trace.correct};
        (trace.correct ? out.correct : out.erroneous).push_back(s);
    }
    return out;
}

// ---- report ----

namespace {

double percentile_sorted(const std::vector<double>& sorted, double q) {
    // linear interpolation between closest ranks
    double pos = q * (sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - lo;
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

GroupStats group_stats(const std::vector<CosineSample>& samples) {
    GroupStats g;
    g.n = static_cast<int>(samples.size());
    g.histogram.assign(kHistogramBins, 0);
    if (samples.empty()) return g;
    std::vector<double> vals;
    vals.reserve(samples.size());
    for (const auto& s : samples) vals.push_back(s.cos_a);
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    int above = 0;
    for (double v : vals) {
        sum += v;
        if (v > 0.5) ++above;
        int bin = static_cast<int>((v + 1.0) / 2.0 * kHistogramBins);
        ++g.histogram[std::clamp(bin, 0, kHistogramBins - 1)];
    }
    g.mean = sum / g.n;
    g.frac_above_half = static_cast<double>(above) / g.n;
    g.box.min = vals.front();
    g.box.max = vals.back();
    g.box.q1 = percentile_sorted(vals, 0.25);
    g.box.median = percentile_sorted(vals, 0.5);
    g.box.q3 = percentile_sorted(vals, 0.75);
    double iqr = g.box.q3 - g.box.q1;
    g.box.whisker_lo = g.box.q1 - 1.5 * iqr;
    g.box.whisker_hi = g.box.q3 + 1.5 * iqr;
    return g;
}

}  // namespace

AnalysisReport analysis_report(const std::vector<HiddenTrace>& traces,
                               double variance_target) {
    if (traces.empty())
        throw std::invalid_argument("analysis_report: no traces");
    int num_layers = static_cast<int>(traces.front().layers.size());
    AnalysisReport report;
    report.num_layers = num_layers;
    report.variance_target = variance_target;
    std::vector<double> p_raw(num_layers, 1.0);
    for (int layer = 1; layer <= num_layers; ++layer) {
        CosineGroups groups = cosine_distributions(traces, layer, variance_target);
        LayerStats ls;
        ls.layer = layer;
        ls.correct = group_stats(groups.correct);
        ls.erroneous = group_stats(groups.erroneous);
        if (groups.correct.size() >= 2 && groups.erroneous.size() >= 2) {
            std::vector<double> a, b;
            for (const auto& s : groups.correct) a.push_back(s.cos_a);
            for (const auto& s : groups.erroneous) b.push_back(s.cos_a);
            try {
                TTestResult tt = t_test_ind(a, b);
                ls.test_applicable = true;
                ls.t = tt.t;
                ls.p_raw = tt.p;
            } catch (const std::invalid_argument&) {
                ls.test_applicable = false;
            }
        }
        p_raw[layer - 1] = ls.p_raw;
        report.layers.push_back(ls);
        std::vector<CosineSample> merged = groups.correct;
        merged.insert(merged.end(), groups.erroneous.begin(), groups.erroneous.end());
        report.layer_samples.push_back(std::move(merged));
    }
    auto corrected = bonferroni(p_raw, num_layers);
    for (int i = 0; i < num_layers; ++i) report.layers[i].p_corrected = corrected[i];
    return report;
}

namespace {

nlohmann::json group_to_json(const GroupStats& g) {
    return {{"n", g.n},
            {"mean", g.mean},
            {"frac_above_half", g.frac_above_half},
            {"box",
             {{"min", g.box.min},
              {"q1", g.box.q1},
              {"median", g.box.median},
              {"q3", g.box.q3},
              {"max", g.box.max},
              {"whisker_lo", g.box.whisker_lo},
              {"whisker_hi", g.box.whisker_hi}}},
            {"histogram", g.histogram}};
}

}  // namespace

std::string report_to_json(const AnalysisReport& report) {
    nlohmann::json j;
    j["num_layers"] = report.num_layers;
    j["variance_target"] = report.variance_target;
    j["histogram_bins"] = kHistogramBins;
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& ls : report.layers) {
        nlohmann::json lj;
        lj["layer"] = ls.layer;
        lj["correct"] = group_to_json(ls.correct);
        lj["erroneous"] = group_to_json(ls.erroneous);
        lj["test_applicable"] = ls.test_applicable;
        if (ls.test_applicable) {
            lj["t"] = ls.t;
            lj["p_raw"] = ls.p_raw;
            lj["p_corrected"] = ls.p_corrected;
        }
        layers.push_back(lj);
    }
    return j.dump(2);
}

std::string layer_samples_csv(const AnalysisReport& report, int layer) {
    if (layer < 1 || layer > report.num_layers)
        throw std::out_of_range("layer_samples_csv: layer out of range");
    std::ostringstream out;
    out << "layer,cos_a,correct\n";
    char line[96];
    for (const auto& s : report.layer_samples[layer - 1]) {
        std::snprintf(line, sizeof(line), "%d,%.9f,%d\n", s.layer, s.cos_a,
                      s.correct ? 1 : 0);
        out << line;
    }
    return out.str();
}

// ---- projection views ----

namespace {

std::string point_label(const HiddenTrace& t, ProjectionLabel key) {
    switch (key) {
        case ProjectionLabel::domain:
            return t.domain;
        case ProjectionLabel::domain_subjectivity:
            return t.domain + "/" + (t.subj_question ? "subjective" : "objective");
        case ProjectionLabel::subjectivity3way:
            // the objective class splits by dataset source
            if (t.subj_question) return "subjective";
            return t.dataset_source == "squad-like" ? "objective-squad"
                                                    : "objective-subjqa";
    }
    throw std::invalid_argument("unknown projection label key");
}

}  // namespace

std::vector<std::vector<ProjectedPoint>> project_cls(
    const std::vector<HiddenTrace>& traces, ProjectionLabel label_key,
    double variance_target, const TsneConfig& tsne) {
    if (traces.empty()) throw std::invalid_argument("project_cls: no traces");
    int num_layers = static_cast<int>(traces.front().layers.size());
    int n = static_cast<int>(traces.size());
    std::vector<std::vector<ProjectedPoint>> out;
    for (int layer = 0; layer < num_layers; ++layer) {
        int d = traces.front().layers[layer].cols;
        Mat cls(n, d);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c)
                cls.at(i, c) = traces[i].layers[layer].at(0, c);
        PcaResult pca = pca_fit_transform(cls, variance_target);
        Mat y = tsne_2d(pca.projected, tsne);
        std::vector<ProjectedPoint> points(n);
        for (int i = 0; i < n; ++i) {
            points[i].example_id = traces[i].example_id;
            points[i].x = y.at(i, 0);
            points[i].y = y.at(i, 1);
            points[i].label = point_label(traces[i], label_key);
        }
        out.push_back(std::move(points));
    }
    return out;
}

std::string projection_csv(const std::vector<ProjectedPoint>& points) {
    std::ostringstream out;
    out << "id,x,y,label\n";
    char line[256];
    for (const auto& p : points) {
        std::snprintf(line, sizeof(line), "%s,%.9f,%.9f,%s\n", p.example_id.c_str(),
                      p.x, p.y, p.label.c_str());
        out << line;
    }
    return out.str();
}

}  // namespace qalab
