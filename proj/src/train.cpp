#include "qalab/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qalab/metrics.hpp"

namespace qalab {

std::string task_name(TaskKind task) {
    switch (task) {
        case TaskKind::qa: return "qa";
        case TaskKind::sbj: return "sbj";
        case TaskKind::dom: return "dom";
        case TaskKind::dataset: return "dataset";
    }
    throw std::invalid_argument("unknown task");
}

TaskKind task_from_name(const std::string& name) {
    if (name == "qa") return TaskKind::qa;
    if (name == "sbj") return TaskKind::sbj;
    if (name == "dom") return TaskKind::dom;
    if (name == "dataset") return TaskKind::dataset;
    throw std::invalid_argument("unknown task name: " + name);
}

void TrainConfig::validate() const {
    if (std::find(task_set.begin(), task_set.end(), TaskKind::qa) == task_set.end())
        throw std::invalid_argument("task_set must contain qa (the main task)");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("lr must be positive");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (adversarial != AdversarialMode::none && task_set.size() < 2)
        throw std::invalid_argument(
            "adversarial training requires at least one auxiliary task");
}

TaskKind sample_task(SamplerKind sampler, const std::vector<TaskKind>& task_set,
                     std::mt19937_64& rng) {
    if (task_set.empty()) throw std::invalid_argument("sample_task: empty task set");
    if (task_set.size() == 1) return task_set.front();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (sampler == SamplerKind::uniform) {
        double r = u(rng);
        auto idx = std::min(task_set.size() - 1,
                            static_cast<std::size_t>(r * task_set.size()));
        return task_set[idx];
    }
    // oversampling: qa 2/3, the rest split equally
    double r = u(rng);
    if (r < 2.0 / 3.0) return TaskKind::qa;
    std::vector<TaskKind> aux;
    for (TaskKind t : task_set)
        if (t != TaskKind::qa) aux.push_back(t);
    double slot = (r - 2.0 / 3.0) / (1.0 / 3.0);
    auto idx = std::min(aux.size() - 1, static_cast<std::size_t>(slot * aux.size()));
    return aux[idx];
}

std::vector<std::vector<int>> make_batches(int n, int b, std::mt19937_64& rng) {
    if (n < 1) throw std::invalid_argument("make_batches: empty dataset");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += b)
        batches.emplace_back(idx.begin() + start,
                             idx.begin() + std::min(n, start + b));
    return batches;
}

InputMode task_input_mode(TaskKind task, InputMode sbj_input) {
    return task == TaskKind::sbj ? sbj_input : InputMode::question_context;
}

// ---- optimizer ----

AdamW::AdamW(ParamRegistry& reg, AdamConfig config) : reg_(&reg), config_(config) {
    for (const auto& p : reg.params()) {
        m_.emplace_back(p.value->numel(), 0.0);
        v_.emplace_back(p.value->numel(), 0.0);
    }
}

void AdamW::step(double lr) {
    auto& params = reg_->params();
    for (const auto& p : params)
        if (!p.value->grad.empty())
            for (double g : p.value->grad)
                if (!std::isfinite(g))
                    throw std::runtime_error("non-finite gradient in parameter " +
                                             p.name + "; step aborted");
    ++t_;
    double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].value->data;
        const auto& grad = params[i].value->grad;
        for (std::size_t j = 0; j < w.size(); ++j) {
            double g = grad.empty() ? 0.0 : grad[j];
            m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g;
            v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g * g;
            double mhat = m_[i][j] / bc1;
            double vhat = v_[i][j] / bc2;
            double update = mhat / (std::sqrt(vhat) + config_.eps);
            if (params[i].decay) update += config_.weight_decay * w[j];
            w[j] -= lr * update;
        }
    }
}

double lr_schedule(long long step, long long warmup_steps, long long total_steps,
                   double eta) {
    if (warmup_steps >= total_steps)
        throw std::invalid_argument("lr_schedule: warmup must be < total steps");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("lr_schedule: step out of range");
    if (warmup_steps > 0 && step <= warmup_steps)
        return eta * static_cast<double>(step) / static_cast<double>(warmup_steps);
    return eta * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
}

// ---- evaluation ----

EvalResult evaluate(const QaModel& model, const std::vector<QAExample>& dev_set,
                    const Vocab& vocab, int max_answer_len,
                    const SoftTargetMap* soft_targets) {
    if (dev_set.empty()) throw std::invalid_argument("evaluate: empty dev set");
    std::mt19937_64 rng(0);  // unused in eval mode
    double loss = 0.0, em = 0.0, f1 = 0.0;
    for (const auto& ex : dev_set) {
        EncodedExample enc = encode_example(ex, InputMode::question_context, vocab,
                                            model.spec().encoder.max_seq_len);
        auto fwd = model.forward_shared(enc.token_ids, enc.mask, false, rng);
        const std::vector<double>* target = nullptr;
        if (model.spec().concat_width > 0) {
            if (soft_targets == nullptr || !soft_targets->count(ex.id))
                throw std::invalid_argument("evaluate: missing soft target for " +
                                            ex.id);
            target = &soft_targets->at(ex.id);
        }
        auto [start_logits, end_logits] = model.qa_logits(fwd.shared, enc.mask, target);
        loss += qa_loss(start_logits, end_logits, enc.gold_start, enc.gold_end)->data[0];
        SpanPrediction pred =
            predict_span(start_logits->data, end_logits->data, max_answer_len);
        std::string pred_text = span_to_text(ex, enc, pred.start, pred.end);
        const std::string& gold_text = enc.gold_truncated ? "" : ex.answer;
        em += exact_match(pred_text, gold_text);
        f1 += span_f1(pred_text, gold_text);
    }
    double n = static_cast<double>(dev_set.size());
    return {loss / n, 100.0 * em / n, 100.0 * f1 / n};
}

bool early_stop_check(const std::vector<double>& history, EvalCadence cadence,
                      int patience) {
    if (history.empty()) throw std::invalid_argument("early_stop_check: empty history");
    if (cadence == EvalCadence::per_epoch) {
        if (history.size() < 2) return false;
        return history.back() > history[history.size() - 2];
    }
    // stop once the running minimum has not improved for `patience` evaluations
    std::size_t argmin = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i] < history[argmin]) argmin = i;
    return history.size() - 1 - argmin >= static_cast<std::size_t>(patience);
}

double save_best(const QaModel& model, double current_loss, double best_loss,
                 const std::string& bin_path, const std::string& manifest_path) {
    if (current_loss < best_loss) {
        model.save(bin_path, manifest_path);
        return current_loss;
    }
    return best_loss;
}

std::string log_to_text(const std::vector<LogRecord>& log) {
    std::ostringstream out;
    out << "step\ttask\tloss\tlr\tsplit\tem\tf1\n";
    char line[160];
    for (const auto& r : log) {
        char em_buf[16] = "-", f1_buf[16] = "-";
        if (r.em >= 0.0) std::snprintf(em_buf, sizeof(em_buf), "%.2f", r.em);
        if (r.f1 >= 0.0) std::snprintf(f1_buf, sizeof(f1_buf), "%.2f", r.f1);
        std::snprintf(line, sizeof(line), "%lld\t%s\t%.6f\t%.8f\t%s\t%s\t%s\n", r.step,
                      r.task.c_str(), r.loss, r.lr, r.split.c_str(), em_buf, f1_buf);
        out << line;
    }
    return out.str();
}

// ---- training internals ----

namespace {

struct TaskContext {
    std::vector<double> dom_weights;
    double sbj_pos_weight{1.0};
    double dataset_pos_weight{1.0};
};

TaskContext build_task_context(const std::vector<QAExample>& train_set,
                               const std::vector<std::string>& domains) {
    TaskContext ctx;
    if (!domains.empty()) {
        std::vector<long long> counts(domains.size(), 0);
        for (const auto& ex : train_set)
            ++counts[domain_index(domains, ex.domain)];
        ctx.dom_weights = compute_class_weights(counts);
    }
    long long sbj_pos = 0, sbj_neg = 0, ds_pos = 0, ds_neg = 0;
    for (const auto& ex : train_set) {
        likert_subjective(ex.subj_question) ? ++sbj_pos : ++sbj_neg;
        likert_subjective(ex.subj_answer) ? ++sbj_pos : ++sbj_neg;
        ex.dataset_source == "subj-like" ? ++ds_pos : ++ds_neg;
    }
    if (sbj_pos > 0)
        ctx.sbj_pos_weight = static_cast<double>(sbj_neg) / sbj_pos;
    if (ds_pos > 0)
        ctx.dataset_pos_weight = static_cast<double>(ds_neg) / ds_pos;
    return ctx;
}

// per-example loss for one task; adversarial applies to auxiliary branches only
Tensor example_loss(const QaModel& model, const QAExample& ex, TaskKind task,
                    const TrainConfig& config,
                    const std::vector<std::string>& domains, const TaskContext& ctx,
                    const Vocab& vocab, const SoftTargetMap* soft_targets,
                    std::mt19937_64& rng) {
    InputMode mode = task_input_mode(task, config.sbj_input);
    EncodedExample enc =
        encode_example(ex, mode, vocab, model.spec().encoder.max_seq_len);
    auto fwd = model.forward_shared(enc.token_ids, enc.mask, true, rng);
    if (task == TaskKind::qa) {
        const std::vector<double>* target = nullptr;
        if (model.spec().concat_width > 0) {
            if (soft_targets == nullptr || !soft_targets->count(ex.id))
                throw std::invalid_argument("train: missing soft target for " + ex.id);
            target = &soft_targets->at(ex.id);
        }
        auto [start_logits, end_logits] = model.qa_logits(fwd.shared, enc.mask, target);
        return qa_loss(start_logits, end_logits, enc.gold_start, enc.gold_end);
    }
    Tensor vec = model.class_vector(fwd.shared, enc.mask);
    if (config.adversarial == AdversarialMode::grl)
        vec = grl_apply(vec, config.grl_lambda);
    Tensor loss;
    if (task == TaskKind::sbj) {
        auto [logit_q, logit_a] = model.sbj_head().forward(vec);
        loss = subjectivity_loss(logit_q, logit_a, likert_subjective(ex.subj_question),
                                 likert_subjective(ex.subj_answer), ctx.sbj_pos_weight);
    } else if (task == TaskKind::dom) {
        Tensor logits = model.dom_head().forward(vec);
        loss = domain_loss(logits, {domain_index(domains, ex.domain)}, ctx.dom_weights);
    } else {
        Tensor logit = model.dataset_head().forward(vec);
        int label = ex.dataset_source == "subj-like" ? 1 : 0;
        loss = binary_cross_entropy(logit, {label}, ctx.dataset_pos_weight);
    }
    if (config.adversarial == AdversarialMode::simple) loss = reverse_loss(loss);
    return loss;
}

Tensor batch_loss(const QaModel& model, const std::vector<QAExample>& train_set,
                  const std::vector<int>& batch, TaskKind task,
                  const TrainConfig& config, const std::vector<std::string>& domains,
                  const TaskContext& ctx, const Vocab& vocab,
                  const SoftTargetMap* soft_targets, std::mt19937_64& rng) {
    Tensor acc;
    for (int idx : batch) {
        Tensor l = example_loss(model, train_set[idx], task, config, domains, ctx,
                                vocab, soft_targets, rng);
        acc = acc ? add(acc, l) : l;
    }
    return scale(acc, 1.0 / static_cast<double>(batch.size()));
}

// mean auxiliary-task loss over a dataset (no adversarial transform), used to
// monitor sequential-transfer stage convergence
double task_eval_loss(const QaModel& model, const std::vector<QAExample>& dev_set,
                      TaskKind task, const TrainConfig& config,
                      const std::vector<std::string>& domains, const TaskContext& ctx,
                      const Vocab& vocab) {
    TrainConfig plain = config;
    plain.adversarial = AdversarialMode::none;
    std::mt19937_64 rng(0);
    double loss = 0.0;
    for (const auto& ex : dev_set) {
        // eval-mode path: rebuild the forward without dropout
        InputMode mode = task_input_mode(task, plain.sbj_input);
        EncodedExample enc =
            encode_example(ex, mode, vocab, model.spec().encoder.max_seq_len);
        auto fwd = model.forward_shared(enc.token_ids, enc.mask, false, rng);
        Tensor vec = model.class_vector(fwd.shared, enc.mask);
        Tensor l;
        if (task == TaskKind::sbj) {
            auto [logit_q, logit_a] = model.sbj_head().forward(vec);
            l = subjectivity_loss(logit_q, logit_a, likert_subjective(ex.subj_question),
                                  likert_subjective(ex.subj_answer),
                                  ctx.sbj_pos_weight);
        } else if (task == TaskKind::dom) {
            l = domain_loss(model.dom_head().forward(vec),
                            {domain_index(domains, ex.domain)}, ctx.dom_weights);
        } else {
            l = binary_cross_entropy(model.dataset_head().forward(vec),
                                     {ex.dataset_source == "subj-like" ? 1 : 0},
                                     ctx.dataset_pos_weight);
        }
        loss += l->data[0];
    }
    return loss / static_cast<double>(dev_set.size());
}

struct LoopOptions {
    // sequential-transfer auxiliary stages monitor their own task loss and
    // may run without qa in the task set
    bool monitor_task_loss{false};
    TaskKind monitor_task{TaskKind::qa};
};

TrainResult train_loop(QaModel& model, const std::vector<QAExample>& train_set,
                       const std::vector<QAExample>& dev_set, const Vocab& vocab,
                       const std::vector<std::string>& domains,
                       const TrainConfig& config, const std::string& run_dir,
                       const SoftTargetMap* soft_targets, const LoopOptions& opts) {
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (dev_set.empty()) throw std::invalid_argument("train: empty dev set");

    TaskContext ctx = build_task_context(train_set, domains);
    AdamW optimizer(model.params());
    std::mt19937_64 rng(config.seed);

    int n = static_cast<int>(train_set.size());
    long long steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    long long total_steps = steps_per_epoch * config.epochs;
    if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);
    long long warmup = config.warmup_steps >= 0
                           ? config.warmup_steps
                           : total_steps / 10;

    std::string best_bin, best_manifest;
    if (!run_dir.empty()) {
        std::filesystem::create_directories(run_dir);
        best_bin = run_dir + "/best.bin";
        best_manifest = run_dir + "/best.manifest.json";
    }

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    std::map<TaskKind, std::vector<std::vector<int>>> queues;
    long long global_step = 0;
    bool done = false;

    auto run_eval = [&](long long step, int epoch) {
        double monitored;
        LogRecord rec;
        rec.step = step;
        rec.task = opts.monitor_task_loss ? task_name(opts.monitor_task) : "qa";
        rec.split = "dev";
        if (opts.monitor_task_loss) {
            monitored = task_eval_loss(model, dev_set, opts.monitor_task, config,
                                       domains, ctx, vocab);
            rec.loss = monitored;
        } else {
            EvalResult ev = evaluate(model, dev_set, vocab, config.max_answer_len,
                                     soft_targets);
            monitored = ev.qa_loss;
            rec.loss = ev.qa_loss;
            rec.em = ev.em;
            rec.f1 = ev.f1;
        }
        result.log.push_back(rec);
        history.push_back(monitored);
        if (!run_dir.empty())
            best = save_best(model, monitored, best, best_bin, best_manifest);
        else
            best = std::min(best, monitored);
        if (config.early_stopping && epoch > 1 &&
            early_stop_check(history, config.cadence, config.patience)) {
            result.early_stopped = true;
            done = true;
        }
    };

    for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
        // ten_per_epoch evaluation points within this epoch (1-based local step)
        std::vector<long long> eval_points;
        if (config.cadence == EvalCadence::ten_per_epoch) {
            for (int k = 1; k <= 10; ++k)
                eval_points.push_back(std::max<long long>(
                    1, steps_per_epoch * k / 10));
        }
        for (long long local = 1; local <= steps_per_epoch && !done; ++local) {
            ++global_step;
            TaskKind task = sample_task(config.sampler, config.task_set, rng);
            auto& queue = queues[task];
            if (queue.empty()) queue = make_batches(n, config.batch_size, rng);
            std::vector<int> batch = std::move(queue.back());
            queue.pop_back();

            double lr_t = lr_schedule(global_step, warmup, total_steps, config.lr);
            Tensor loss = batch_loss(model, train_set, batch, task, config, domains,
                                     ctx, vocab, soft_targets, rng);
            check_finite(loss, "training loss at step " + std::to_string(global_step));
            backward(loss);
            optimizer.step(lr_t);

            result.log.push_back({global_step, task_name(task), loss->data[0], lr_t,
                                  "train", -1.0, -1.0});
            if (std::find(eval_points.begin(), eval_points.end(), local) !=
                eval_points.end())
                run_eval(global_step, epoch);
            if (config.max_steps > 0 && global_step >= config.max_steps) done = true;
        }
        if (!done && config.cadence == EvalCadence::per_epoch)
            run_eval(global_step, epoch);
    }
    result.steps = global_step;
    result.best_dev_loss = best;
    if (!run_dir.empty()) {
        std::ofstream log_file(run_dir + "/metrics.tsv");
        log_file << log_to_text(result.log);
    }
    return result;
}

}  // namespace

TrainResult train(QaModel& model, const std::vector<QAExample>& train_set,
                  const std::vector<QAExample>& dev_set, const Vocab& vocab,
                  const std::vector<std::string>& domains, const TrainConfig& config,
                  const std::string& run_dir, const SoftTargetMap* soft_targets) {
    config.validate();
    return train_loop(model, train_set, dev_set, vocab, domains, config, run_dir,
                      soft_targets, {});
}

std::vector<double> oracle_target(const QAExample& ex,
                                  const std::vector<std::string>& domains) {
    std::vector<double> p(2 + domains.size(), 0.0);
    p[0] = likert_subjective(ex.subj_question) ? 1.0 : 0.0;
    p[1] = likert_subjective(ex.subj_answer) ? 1.0 : 0.0;
    p[2 + domain_index(domains, ex.domain)] = 1.0;
    return p;
}

SequentialResult sequential_transfer(QaModel& model,
                                     const std::vector<QAExample>& train_set,
                                     const std::vector<QAExample>& dev_set,
                                     const Vocab& vocab,
                                     const std::vector<std::string>& domains,
                                     const TrainConfig& config, TransferTargets mode,
                                     const std::string& run_dir) {
    int k = 2 + static_cast<int>(domains.size());
    if (model.spec().concat_width != k)
        throw std::invalid_argument(
            "sequential_transfer: model concat width must be 2 + domain count");
    if (!model.has_sbj() || !model.has_dom())
        throw std::invalid_argument(
            "sequential_transfer: model needs subjectivity and domain heads");

    SequentialResult result;
    // context-domain classification, then subjectivity, then QA (in this order)
    for (TaskKind stage : {TaskKind::dom, TaskKind::sbj}) {
        TrainConfig stage_config = config;
        stage_config.task_set = {stage};
        stage_config.adversarial = AdversarialMode::none;
        LoopOptions opts;
        opts.monitor_task_loss = true;
        opts.monitor_task = stage;
        std::string stage_dir =
            run_dir.empty() ? "" : run_dir + "/stage_" + task_name(stage);
        auto stage_result = train_loop(model, train_set, dev_set, vocab, domains,
                                       stage_config, stage_dir, nullptr, opts);
        (stage == TaskKind::dom ? result.dom_stage : result.sbj_stage) =
            std::move(stage_result);
    }

    // additional synthetic evaluation epoch: store per-example targets
    std::mt19937_64 rng(0);
    auto collect = [&](const std::vector<QAExample>& examples) {
        for (const auto& ex : examples) {
            if (mode == TransferTargets::oracle) {
                result.targets[ex.id] = oracle_target(ex, domains);
                continue;
            }
            std::vector<double> p(static_cast<std::size_t>(k), 0.0);
            EncodedExample enc_sbj =
                encode_example(ex, config.sbj_input, vocab,
                               model.spec().encoder.max_seq_len);
            auto fwd_sbj = model.forward_shared(enc_sbj.token_ids, enc_sbj.mask,
                                                false, rng);
            Tensor vec_sbj = model.class_vector(fwd_sbj.shared, enc_sbj.mask);
            auto [logit_q, logit_a] = model.sbj_head().forward(vec_sbj);
            p[0] = sigmoid(logit_q)->data[0];
            p[1] = sigmoid(logit_a)->data[0];
            EncodedExample enc_dom =
                encode_example(ex, InputMode::question_context, vocab,
                               model.spec().encoder.max_seq_len);
            auto fwd_dom = model.forward_shared(enc_dom.token_ids, enc_dom.mask,
                                                false, rng);
            Tensor dom_probs = softmax(
                model.dom_head().forward(model.class_vector(fwd_dom.shared,
                                                            enc_dom.mask)));
            for (std::size_t j = 0; j < domains.size(); ++j)
                p[2 + j] = dom_probs->data[j];
            result.targets[ex.id] = std::move(p);
        }
    };
    collect(train_set);
    collect(dev_set);

    TrainConfig qa_config = config;
    qa_config.task_set = {TaskKind::qa};
    qa_config.adversarial = AdversarialMode::none;
    std::string qa_dir = run_dir.empty() ? "" : run_dir + "/stage_qa";
    result.qa_stage = train_loop(model, train_set, dev_set, vocab, domains, qa_config,
                                 qa_dir, &result.targets, {});
    return result;
}

}  // namespace qalab
