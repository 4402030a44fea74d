#pragma once

// Task-specific output layers and their losses: span-selection QA head,
// two-gate subjectivity classifier, domain classifier, the binary
// dataset-source classifier, class weighting, span decoding, and the two
// adversarial mechanisms (loss reversal and the gradient reversal layer).

#include <random>
#include <utility>
#include <vector>

#include "qalab/params.hpp"
#include "qalab/tensor.hpp"

namespace qalab {

// shared linear layer applied per token, split into start/end logit rows
class QaHead {
public:
    QaHead(int in_dim, ParamRegistry& reg, std::uint64_t seed);

    // returns (start_logits, end_logits), each 1 x T; padded positions get a
    // -1e9 bias so they never win a softmax or an argmax
    std::pair<Tensor, Tensor> forward(const Tensor& states,
                                      const std::vector<bool>& mask) const;
    int in_dim() const { return in_dim_; }

private:
    int in_dim_;
    Tensor w_, b_;
};

// two independent binary logits: question subjectivity and answer/context
// subjectivity
class SubjectivityHead {
public:
    SubjectivityHead(int in_dim, ParamRegistry& reg, std::uint64_t seed);
    // input is the classification vector (1 x D'); returns (logit_q, logit_a)
    std::pair<Tensor, Tensor> forward(const Tensor& vec) const;

private:
    Tensor wq_, bq_, wa_, ba_;
};

class DomainHead {
public:
    DomainHead(int in_dim, int num_domains, ParamRegistry& reg, std::uint64_t seed);
    Tensor forward(const Tensor& vec) const;  // 1 x k_dom logits
    int num_domains() const { return num_domains_; }

private:
    int num_domains_;
    Tensor w_, b_;
};

// binary dataset-source classifier (subj-like vs squad-like), used by the
// adversarial dataset task
class DatasetHead {
public:
    DatasetHead(int in_dim, ParamRegistry& reg, std::uint64_t seed);
    Tensor forward(const Tensor& vec) const;  // 1 x 1 logit

private:
    Tensor w_, b_;
};

// ---- losses ----

// 0.5 * (CE over start positions + CE over end positions)
Tensor qa_loss(const Tensor& start_logits, const Tensor& end_logits, int y_start,
               int y_end);

// mean of the two heads' weighted binary cross-entropies
Tensor subjectivity_loss(const Tensor& logit_q, const Tensor& logit_a, int y_q,
                         int y_a, double pos_weight = 1.0);

// class-weighted categorical cross-entropy
Tensor domain_loss(const Tensor& logits, const std::vector<int>& y,
                   const std::vector<double>& weights);

// w_k = 1 - n_k / N
std::vector<double> compute_class_weights(const std::vector<long long>& counts);

// simple adversarial mode: minimizing -loss maximizes the auxiliary loss
Tensor reverse_loss(const Tensor& loss);

// GRL: identity forward, backward gradient scaled by -lambda
Tensor grl_apply(const Tensor& states, double lambda = 1.0);

// ---- span decoding ----

struct SpanPrediction {
    int start{0};
    int end{0};
    bool answerable() const { return !(start == 0 && end == 0); }
};

inline constexpr int kMaxAnswerLen = 30;

// best (s, e) with 1 <= s <= e, e - s < max_len among unmasked positions;
// falls back to (0, 0) when the null score is at least as good
SpanPrediction predict_span(const std::vector<double>& start_logits,
                            const std::vector<double>& end_logits,
                            int max_answer_len = kMaxAnswerLen);

}  // namespace qalab
