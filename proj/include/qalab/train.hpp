#pragma once

// Fine-tuning loop: task samplers, batch alternation, AdamW with linear
// warm-up, evaluation cadences, early stopping, checkpointing, and the
// sequential-transfer pipeline with soft/oracle target concatenation.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qalab/data.hpp"
#include "qalab/model.hpp"

namespace qalab {

enum class TaskKind { qa, sbj, dom, dataset };
enum class SamplerKind { uniform, oversampling };
enum class AdversarialMode { none, simple, grl };
enum class EvalCadence { per_epoch, ten_per_epoch };

std::string task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);

struct TrainConfig {
    int epochs{3};
    int batch_size{16};
    double lr{5e-5};
    int warmup_steps{-1};  // -1: 10% of total steps
    EvalCadence cadence{EvalCadence::per_epoch};
    int patience{5};
    SamplerKind sampler{SamplerKind::uniform};
    std::vector<TaskKind> task_set{TaskKind::qa};
    AdversarialMode adversarial{AdversarialMode::none};
    InputMode sbj_input{InputMode::question_answer};
    double grl_lambda{1.0};
    int max_answer_len{kMaxAnswerLen};
    bool early_stopping{true};
    long long max_steps{0};  // 0: no cap
    std::uint64_t seed{0};

    void validate() const;  // QA must be present; it is always the main task
};

// uniform: equal probability across tasks; oversampling: P(qa)=2/3 and the
// remaining 1/3 split equally among auxiliaries
TaskKind sample_task(SamplerKind sampler, const std::vector<TaskKind>& task_set,
                     std::mt19937_64& rng);

// shuffled index batches of size b (last may be smaller)
std::vector<std::vector<int>> make_batches(int n, int b, std::mt19937_64& rng);

// (q,a) sequences feed the subjectivity head; every other task sees (q,c)
InputMode task_input_mode(TaskKind task, InputMode sbj_input);

// ---- optimizer ----

struct AdamConfig {
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
    double weight_decay{0.01};  // skipped for biases and layer-norm terms
};

class AdamW {
public:
    AdamW(ParamRegistry& reg, AdamConfig config = {});
    // one decoupled-weight-decay step over every registered parameter;
    // throws on non-finite gradients before touching any weight
    void step(double lr);
    long long steps_taken() const { return t_; }

private:
    ParamRegistry* reg_;
    AdamConfig config_;
    long long t_{0};
    std::vector<std::vector<double>> m_, v_;
};

// linear warm-up to eta at warmup_steps, then linear decay to 0 at total_steps
double lr_schedule(long long step, long long warmup_steps, long long total_steps,
                   double eta);

// ---- evaluation / early stopping ----

struct EvalResult {
    double qa_loss{0.0};
    double em{0.0};  // percent
    double f1{0.0};  // percent
};

EvalResult evaluate(const QaModel& model, const std::vector<QAExample>& dev_set,
                    const Vocab& vocab, int max_answer_len = kMaxAnswerLen,
                    const SoftTargetMap* soft_targets = nullptr);

// ten_per_epoch: stop after `patience` evaluations without a new minimum;
// per_epoch: stop when the loss exceeds the previous evaluation's
bool early_stop_check(const std::vector<double>& history, EvalCadence cadence,
                      int patience);

// writes the checkpoint iff current < best; returns the updated best
double save_best(const QaModel& model, double current_loss, double best_loss,
                 const std::string& bin_path, const std::string& manifest_path);

// ---- training ----

struct LogRecord {
    long long step{0};
    std::string task;
    double loss{0.0};
    double lr{0.0};
    std::string split;  // "train" or "dev"
    double em{-1.0};    // negative: not applicable
    double f1{-1.0};
};

std::string log_to_text(const std::vector<LogRecord>& log);

struct TrainResult {
    std::vector<LogRecord> log;
    double best_dev_loss{0.0};
    long long steps{0};
    bool early_stopped{false};
};

// run_dir, when non-empty, receives best.bin / best.manifest.json and the
// metric log; pass empty to train without artifacts
TrainResult train(QaModel& model, const std::vector<QAExample>& train_set,
                  const std::vector<QAExample>& dev_set, const Vocab& vocab,
                  const std::vector<std::string>& domains, const TrainConfig& config,
                  const std::string& run_dir = "",
                  const SoftTargetMap* soft_targets = nullptr);

enum class TransferTargets { soft, oracle };

struct SequentialResult {
    TrainResult dom_stage;
    TrainResult sbj_stage;
    TrainResult qa_stage;
    SoftTargetMap targets;  // per example: [p_sbj_q, p_sbj_a, p_dom...]
};

// domain stage, subjectivity stage, target-collection epoch, then QA with
// per-token target concatenation; model must be built with
// concat_width == 2 + num_domains
SequentialResult sequential_transfer(QaModel& model,
                                     const std::vector<QAExample>& train_set,
                                     const std::vector<QAExample>& dev_set,
                                     const Vocab& vocab,
                                     const std::vector<std::string>& domains,
                                     const TrainConfig& config, TransferTargets mode,
                                     const std::string& run_dir = "");

// oracle encoding: [1{q subjective}, 1{a subjective}, one-hot domain]
std::vector<double> oracle_target(const QAExample& ex,
                                  const std::vector<std::string>& domains);

}  // namespace qalab
