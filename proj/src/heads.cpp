#include "qalab/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qalab {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kMaskBias = -1e9;
}  // namespace

QaHead::QaHead(int in_dim, ParamRegistry& reg, std::uint64_t seed) : in_dim_(in_dim) {
    std::mt19937_64 rng(seed);
    w_ = reg.add("head.qa.w", randn({in_dim, 2}, kInitStd, rng));
    b_ = reg.add("head.qa.b", zeros({2}), false);
}

std::pair<Tensor, Tensor> QaHead::forward(const Tensor& states,
                                          const std::vector<bool>& mask) const {
    if (states->cols() != in_dim_)
        throw std::invalid_argument("qa head: input width mismatch");
    int t = states->rows();
    if (static_cast<int>(mask.size()) != t)
        throw std::invalid_argument("qa head: mask length mismatch");
    Tensor logits = add_row_broadcast(matmul(states, w_), b_);  // T x 2
    std::vector<double> bias(t, 0.0);
    for (int i = 0; i < t; ++i)
        if (!mask[i]) bias[i] = kMaskBias;
    Tensor bias_t = make_tensor({t}, bias);
    Tensor start = add_row_broadcast(transpose(slice_cols(logits, 0, 1)), bias_t);
    Tensor end = add_row_broadcast(transpose(slice_cols(logits, 1, 2)), bias_t);
    return {start, end};
}

SubjectivityHead::SubjectivityHead(int in_dim, ParamRegistry& reg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    wq_ = reg.add("head.sbj.q.w", randn({in_dim, 1}, kInitStd, rng));
    bq_ = reg.add("head.sbj.q.b", zeros({1}), false);
    wa_ = reg.add("head.sbj.a.w", randn({in_dim, 1}, kInitStd, rng));
    ba_ = reg.add("head.sbj.a.b", zeros({1}), false);
}

std::pair<Tensor, Tensor> SubjectivityHead::forward(const Tensor& vec) const {
    return {add_row_broadcast(matmul(vec, wq_), bq_),
            add_row_broadcast(matmul(vec, wa_), ba_)};
}

DomainHead::DomainHead(int in_dim, int num_domains, ParamRegistry& reg,
                       std::uint64_t seed)
    : num_domains_(num_domains) {
    if (num_domains < 2) throw std::invalid_argument("domain head: need >= 2 classes");
    std::mt19937_64 rng(seed);
    w_ = reg.add("head.dom.w", randn({in_dim, num_domains}, kInitStd, rng));
    b_ = reg.add("head.dom.b", zeros({num_domains}), false);
}

Tensor DomainHead::forward(const Tensor& vec) const {
    return add_row_broadcast(matmul(vec, w_), b_);
}

DatasetHead::DatasetHead(int in_dim, ParamRegistry& reg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    w_ = reg.add("head.dataset.w", randn({in_dim, 1}, kInitStd, rng));
    b_ = reg.add("head.dataset.b", zeros({1}), false);
}

Tensor DatasetHead::forward(const Tensor& vec) const {
    return add_row_broadcast(matmul(vec, w_), b_);
}

Tensor qa_loss(const Tensor& start_logits, const Tensor& end_logits, int y_start,
               int y_end) {
    int t = static_cast<int>(start_logits->numel());
    if (y_start < 0 || y_end < 0 || y_start >= t || y_end >= t || y_start > y_end)
        throw std::invalid_argument("qa_loss: invalid gold span (" +
                                    std::to_string(y_start) + ", " +
                                    std::to_string(y_end) + ")");
    Tensor ce_start = cross_entropy(start_logits, {y_start});
    Tensor ce_end = cross_entropy(end_logits, {y_end});
    return scale(add(ce_start, ce_end), 0.5);
}

Tensor subjectivity_loss(const Tensor& logit_q, const Tensor& logit_a, int y_q,
                         int y_a, double pos_weight) {
    Tensor lq = binary_cross_entropy(logit_q, {y_q}, pos_weight);
    Tensor la = binary_cross_entropy(logit_a, {y_a}, pos_weight);
    return scale(add(lq, la), 0.5);
}

Tensor domain_loss(const Tensor& logits, const std::vector<int>& y,
                   const std::vector<double>& weights) {
    return cross_entropy(logits, y, weights);
}

std::vector<double> compute_class_weights(const std::vector<long long>& counts) {
    if (counts.empty())
        throw std::invalid_argument("compute_class_weights: empty counts");
    long long total = 0;
    for (long long c : counts) {
        if (c < 0) throw std::invalid_argument("compute_class_weights: negative count");
        total += c;
    }
    if (total <= 0)
        throw std::invalid_argument("compute_class_weights: counts sum to zero");
    std::vector<double> w(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        w[k] = 1.0 - static_cast<double>(counts[k]) / static_cast<double>(total);
    return w;
}

Tensor reverse_loss(const Tensor& loss) { return neg(loss); }

Tensor grl_apply(const Tensor& states, double lambda) {
    return grad_reverse(states, lambda);
}

SpanPrediction predict_span(const std::vector<double>& start_logits,
                            const std::vector<double>& end_logits,
                            int max_answer_len) {
    int t = static_cast<int>(start_logits.size());
    if (t == 0 || static_cast<int>(end_logits.size()) != t)
        throw std::invalid_argument("predict_span: logit length mismatch");
    if (max_answer_len < 1)
        throw std::invalid_argument("predict_span: max_answer_len must be >= 1");
    double null_score = start_logits[0] + end_logits[0];
    // ties keep the lexicographically smallest (start, end) pair
    SpanPrediction best{0, 0};
    double best_score = 0.0;
    bool found = false;
    for (int s = 1; s < t; ++s) {
        int e_hi = std::min(t - 1, s + max_answer_len - 1);
        for (int e = s; e <= e_hi; ++e) {
            double score = start_logits[s] + end_logits[e];
            if (!found || score > best_score) {
                best = {s, e};
                best_score = score;
                found = true;
            }
        }
    }
    if (!found || best_score <= null_score) return {0, 0};
    return best;
}

}  // namespace qalab
