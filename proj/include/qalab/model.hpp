#pragma once

// Composition of the Transformer encoder, optional post-encoder and task
// heads into one trainable model, plus hidden-state trace capture for the
// analysis pipeline.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qalab/analysis.hpp"
#include "qalab/data.hpp"
#include "qalab/encoder.hpp"
#include "qalab/heads.hpp"
#include "qalab/params.hpp"
#include "qalab/post_encoder.hpp"

namespace qalab {

struct ModelSpec {
    EncoderConfig encoder;
    PostEncoderKind phi{PostEncoderKind::identity};
    int num_domains{6};
    bool sbj_head{true};
    bool dom_head{true};
    bool dataset_head{false};
    // extra QA-head input width for sequential-transfer target concatenation
    int concat_width{0};
};

// per-example soft/oracle target vectors keyed by example id
using SoftTargetMap = std::map<std::string, std::vector<double>>;

class QaModel {
public:
    explicit QaModel(const ModelSpec& spec);

    const ModelSpec& spec() const { return spec_; }
    ParamRegistry& params() { return reg_; }
    const ParamRegistry& params() const { return reg_; }
    const Encoder& encoder() const { return *encoder_; }

    // theta(x) then phi, with every encoder layer recorded
    struct Forward {
        EncodedSequence seq;
        Tensor shared;  // phi(theta(x)), T x D
    };
    Forward forward_shared(const std::vector<int>& token_ids,
                           const std::vector<bool>& mask, bool train,
                           std::mt19937_64& rng) const;

    // classification input: [CLS] state for identity/Highway phi, the last
    // unmasked step for the BiLSTM phi
    Tensor class_vector(const Tensor& shared, const std::vector<bool>& mask) const;

    // (start_logits, end_logits); soft_target, when present, is broadcast-
    // concatenated to every token row before the QA head
    std::pair<Tensor, Tensor> qa_logits(const Tensor& shared,
                                        const std::vector<bool>& mask,
                                        const std::vector<double>* soft_target) const;

    const QaHead& qa_head() const { return *qa_; }
    const SubjectivityHead& sbj_head() const;
    const DomainHead& dom_head() const;
    const DatasetHead& dataset_head() const;
    bool has_sbj() const { return sbj_ != nullptr; }
    bool has_dom() const { return dom_ != nullptr; }
    bool has_dataset() const { return dataset_ != nullptr; }

    void save(const std::string& bin_path, const std::string& manifest_path) const;
    void load(const std::string& bin_path, const std::string& manifest_path);

private:
    ModelSpec spec_;
    ParamRegistry reg_;
    std::unique_ptr<Encoder> encoder_;
    std::unique_ptr<BiLstmBlock> lstm_;
    std::unique_ptr<HighwayBlock> highway_;
    std::unique_ptr<QaHead> qa_;
    std::unique_ptr<SubjectivityHead> sbj_;
    std::unique_ptr<DomainHead> dom_;
    std::unique_ptr<DatasetHead> dataset_;
};

// eval-mode forward per example, recording all L transformer-layer outputs
// with token roles and span-prediction correctness (exact match)
std::vector<HiddenTrace> capture_traces(const QaModel& model,
                                        const std::vector<QAExample>& examples,
                                        const Vocab& vocab,
                                        const SoftTargetMap* soft_targets = nullptr,
                                        int max_answer_len = kMaxAnswerLen);

}  // namespace qalab
