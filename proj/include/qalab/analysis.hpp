#pragma once

// Latent-representation analysis: per-example PCA, exact t-SNE, answer-span
// cosine statistics, and the per-layer correct-vs-erroneous significance
// report.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qalab/stats.hpp"

namespace qalab {

// minimal row-major matrix for analysis data (outside the autodiff graph)
struct Mat {
    int rows{0};
    int cols{0};
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

enum class TokenRole { cls, question, sep, context, answer };

struct HiddenTrace {
    std::string example_id;
    std::vector<Mat> layers;  // L matrices, T' x D, no [PAD] rows
    std::vector<TokenRole> roles;
    bool correct{false};
    int gold_start{0};
    int gold_end{0};  // token indices into the unpadded sequence; (0,0) = unanswerable
    bool answerable{false};
    // labels for the projection views
    std::string domain;
    std::string dataset_source;
    bool subj_question{false};
    bool subj_answer{false};
    std::string question_type;  // interrogative word
};

// ---- PCA ----

struct PcaResult {
    Mat projected;                        // n x P
    std::vector<double> explained_ratio;  // all components, non-increasing
    int components{0};                    // P: minimal count reaching the target
};

// center columns, eigendecompose the covariance, keep the smallest component
// count whose cumulative explained-variance ratio reaches variance_target
PcaResult pca_fit_transform(const Mat& x, double variance_target);

// ---- t-SNE ----

struct TsneConfig {
    double perplexity{10.0};
    int iters{500};
    std::uint64_t seed{0};
};

// exact O(n^2) t-SNE with per-point bandwidth search, early exaggeration and
// momentum gradient descent
Mat tsne_2d(const Mat& x, const TsneConfig& config);

// symmetrized input affinities (diagnostic path; rows x rows, sums to 1)
Mat tsne_affinities(const Mat& x, double perplexity);

// ---- cosine statistics ----

// (1/(T_a^2 - T_a)) * sum over ordered pairs of cos(row_j, row_k)
double avg_answer_cosine(const Mat& answer_rows);

struct CosineSample {
    int layer{0};
    double cos_a{0.0};
    bool correct{false};
};

struct CosineGroups {
    std::vector<CosineSample> correct;
    std::vector<CosineSample> erroneous;
    int skipped_single_token{0};
    int skipped_unanswerable{0};
};

// per trace at one layer: PCA(variance_target) on the full unpadded matrix,
// answer rows extracted, avg_answer_cosine; single-token and unanswerable
// gold spans are skipped
CosineGroups cosine_distributions(const std::vector<HiddenTrace>& traces, int layer,
                                  double variance_target = 0.95);

// ---- report ----

struct FiveNumber {
    double min{0}, q1{0}, median{0}, q3{0}, max{0};
    double whisker_lo{0}, whisker_hi{0};  // 1.5 IQR
};

struct GroupStats {
    int n{0};
    double mean{0.0};
    FiveNumber box;
    std::vector<long long> histogram;  // 41 bins over [-1, 1]
    double frac_above_half{0.0};       // P(cos_a > 0.5)
};

struct LayerStats {
    int layer{0};
    GroupStats correct;
    GroupStats erroneous;
    bool test_applicable{false};
    double t{0.0};
    double p_raw{1.0};
    double p_corrected{1.0};
};

inline constexpr int kHistogramBins = 41;

struct AnalysisReport {
    int num_layers{0};
    double variance_target{0.95};
    std::vector<LayerStats> layers;                       // layer 1..L
    std::vector<std::vector<CosineSample>> layer_samples;  // both groups merged
};

AnalysisReport analysis_report(const std::vector<HiddenTrace>& traces,
                               double variance_target = 0.95);

std::string report_to_json(const AnalysisReport& report);
// per-layer CSV of the raw cosine samples: layer,cos_a,correct
std::string layer_samples_csv(const AnalysisReport& report, int layer);

// ---- projection views ----

enum class ProjectionLabel { subjectivity3way, domain, domain_subjectivity };

struct ProjectedPoint {
    std::string example_id;
    double x{0.0}, y{0.0};
    std::string label;
};

// per layer: gather position-0 ([CLS]) vectors over all traces, PCA to the
// variance target, t-SNE to 2D, attach labels
std::vector<std::vector<ProjectedPoint>> project_cls(
    const std::vector<HiddenTrace>& traces, ProjectionLabel label_key,
    double variance_target, const TsneConfig& tsne);

std::string projection_csv(const std::vector<ProjectedPoint>& points);

}  // namespace qalab
