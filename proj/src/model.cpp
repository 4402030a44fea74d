#include "qalab/model.hpp"

#include <stdexcept>

#include "qalab/metrics.hpp"

namespace qalab {

QaModel::QaModel(const ModelSpec& spec) : spec_(spec) {
    spec_.encoder.validate();
    std::uint64_t seed = spec_.encoder.seed;
    encoder_ = std::make_unique<Encoder>(spec_.encoder, reg_);
    int d = spec_.encoder.hidden_size;
    if (spec_.phi == PostEncoderKind::bilstm)
        lstm_ = std::make_unique<BiLstmBlock>(d, reg_, seed + 1);
    else if (spec_.phi == PostEncoderKind::highway)
        highway_ = std::make_unique<HighwayBlock>(d, reg_, seed + 2);
    qa_ = std::make_unique<QaHead>(d + spec_.concat_width, reg_, seed + 3);
    if (spec_.sbj_head)
        sbj_ = std::make_unique<SubjectivityHead>(d, reg_, seed + 4);
    if (spec_.dom_head)
        dom_ = std::make_unique<DomainHead>(d, spec_.num_domains, reg_, seed + 5);
    if (spec_.dataset_head)
        dataset_ = std::make_unique<DatasetHead>(d, reg_, seed + 6);
}

QaModel::Forward QaModel::forward_shared(const std::vector<int>& token_ids,
                                         const std::vector<bool>& mask, bool train,
                                         std::mt19937_64& rng) const {
    Forward f;
    f.seq = encoder_->encode(token_ids, mask, train, rng);
    if (lstm_)
        f.shared = lstm_->forward(f.seq.last(), mask, train, rng);
    else if (highway_)
        f.shared = highway_->forward(f.seq.last());
    else
        f.shared = f.seq.last();
    return f;
}

Tensor QaModel::class_vector(const Tensor& shared,
                             const std::vector<bool>& mask) const {
    if (lstm_) return last_step_representation(shared, mask);
    return row(shared, 0);
}

std::pair<Tensor, Tensor> QaModel::qa_logits(
    const Tensor& shared, const std::vector<bool>& mask,
    const std::vector<double>* soft_target) const {
    Tensor states = shared;
    if (spec_.concat_width > 0) {
        if (soft_target == nullptr)
            throw std::invalid_argument("qa_logits: soft target required but missing");
        if (static_cast<int>(soft_target->size()) != spec_.concat_width)
            throw std::invalid_argument("qa_logits: soft target width mismatch");
        states = concat_cols_broadcast(
            states, make_tensor({spec_.concat_width}, *soft_target));
    } else if (soft_target != nullptr) {
        throw std::invalid_argument("qa_logits: model has no concat inputs");
    }
    return qa_->forward(states, mask);
}

const SubjectivityHead& QaModel::sbj_head() const {
    if (!sbj_) throw std::logic_error("model has no subjectivity head");
    return *sbj_;
}

const DomainHead& QaModel::dom_head() const {
    if (!dom_) throw std::logic_error("model has no domain head");
    return *dom_;
}

const DatasetHead& QaModel::dataset_head() const {
    if (!dataset_) throw std::logic_error("model has no dataset head");
    return *dataset_;
}

void QaModel::save(const std::string& bin_path,
                   const std::string& manifest_path) const {
    save_checkpoint(reg_, bin_path, manifest_path);
}

void QaModel::load(const std::string& bin_path, const std::string& manifest_path) {
    load_checkpoint(reg_, bin_path, manifest_path);
}

std::vector<HiddenTrace> capture_traces(const QaModel& model,
                                        const std::vector<QAExample>& examples,
                                        const Vocab& vocab,
                                        const SoftTargetMap* soft_targets,
                                        int max_answer_len) {
    std::vector<HiddenTrace> traces;
    std::mt19937_64 rng(0);  // unused in eval mode
    for (const auto& ex : examples) {
        EncodedExample enc = encode_example(ex, InputMode::question_context, vocab,
                                            model.spec().encoder.max_seq_len);
        auto fwd = model.forward_shared(enc.token_ids, enc.mask, false, rng);
        const std::vector<double>* target = nullptr;
        if (model.spec().concat_width > 0) {
            if (soft_targets == nullptr || !soft_targets->count(ex.id))
                throw std::invalid_argument("capture_traces: missing soft target for " +
                                            ex.id);
            target = &soft_targets->at(ex.id);
        }
        auto [start_logits, end_logits] = model.qa_logits(fwd.shared, enc.mask, target);
        SpanPrediction pred = predict_span(start_logits->data, end_logits->data,
                                           max_answer_len);
        std::string pred_text = span_to_text(ex, enc, pred.start, pred.end);

        HiddenTrace trace;
        trace.example_id = ex.id;
        int t = static_cast<int>(enc.token_ids.size());
        int layers = model.spec().encoder.num_layers;
        for (int l = 1; l <= layers; ++l) {
            const Tensor& h = fwd.seq.layer_states[l];
            Mat m(t, h->cols());
            m.v = h->data;
            trace.layers.push_back(std::move(m));
        }
        trace.roles.assign(t, TokenRole::context);
        trace.roles[0] = TokenRole::cls;
        int q_end = enc.question_token_count;  // question tokens at 1..q_end
        for (int i = 1; i <= q_end; ++i) trace.roles[i] = TokenRole::question;
        trace.roles[q_end + 1] = TokenRole::sep;
        trace.roles[t - 1] = TokenRole::sep;
        trace.answerable = ex.is_answerable && !enc.gold_truncated &&
                           !(enc.gold_start == 0 && enc.gold_end == 0);
        trace.gold_start = enc.gold_start;
        trace.gold_end = enc.gold_end;
        for (int i = enc.gold_start; i <= enc.gold_end; ++i)
            trace.roles[i] = TokenRole::answer;
        trace.correct = exact_match(pred_text, ex.answer) == 1;
        trace.domain = ex.domain;
        trace.dataset_source = ex.dataset_source;
        trace.subj_question = likert_subjective(ex.subj_question);
        trace.subj_answer = likert_subjective(ex.subj_answer);
        auto q_tokens = tokenize(ex.question);
        trace.question_type = q_tokens.empty() ? "" : q_tokens.front();
        traces.push_back(std::move(trace));
    }
    return traces;
}

}  // namespace qalab
