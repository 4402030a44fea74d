// Command-line front end: synthetic data generation, training, evaluation
// and latent-representation analysis, each driven by one resolved config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qalab/analysis.hpp"
#include "qalab/data.hpp"
#include "qalab/metrics.hpp"
#include "qalab/model.hpp"
#include "qalab/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qalab;

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitEmptyResult = 3;

// raised when a command completes but has nothing to report on
struct EmptyResultError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string out_root() {
    const char* env = std::getenv("QALAB_OUT_ROOT");
    return env != nullptr && *env != '\0' ? env : "runs";
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw std::invalid_argument("cannot create directory " + path + ": " +
                                        ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return j;
}

// pre-pass: values from --config become defaults, explicit flags override
json config_file_defaults(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return load_json_file(argv[i + 1]);
    return json::object();
}

template <typename T>
void apply_default(const json& j, const std::string& key, T& value) {
    if (j.contains(key)) value = j.at(key).get<T>();
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// ---- gen-data ----

struct GenDataArgs {
    std::string preset{"subjqa-like"};
    std::string out;
    int n_per_domain{100};
    int num_domains{6};
    double train_frac{0.8};
    double dev_frac{0.1};
    std::uint64_t seed{0};
};

int cmd_gen_data(const GenDataArgs& args) {
    SyntheticConfig config;
    if (args.preset == "subjqa-like") {
        if (args.num_domains < 1 ||
            args.num_domains > static_cast<int>(config.domains.size()))
            throw std::invalid_argument("--domains must be between 1 and " +
                                        std::to_string(config.domains.size()));
        config.domains.resize(args.num_domains);
        config.n_per_domain = args.n_per_domain;
        config.seed = args.seed;
    } else if (args.preset == "squad-like") {
        config = squad_like_config(args.n_per_domain, args.seed);
    } else {
        throw std::invalid_argument("unknown preset: " + args.preset);
    }
    ensure_dir(args.out);

    auto data = generate_synthetic(config);
    SplitSet split = split_dataset(data, args.train_frac, args.dev_frac, args.seed);
    save_jsonl(args.out + "/train.jsonl", split.train);
    save_jsonl(args.out + "/dev.jsonl", split.dev);
    save_jsonl(args.out + "/test.jsonl", split.test);
    save_split_manifest(args.out + "/split_manifest.json", split);

    json echo{{"command", "gen-data"},
              {"preset", args.preset},
              {"domains", config.domains},
              {"n_per_domain", config.n_per_domain},
              {"answerable_rate", config.answerable_rate},
              {"subjective_rate", config.subjective_rate},
              {"train_frac", args.train_frac},
              {"dev_frac", args.dev_frac},
              {"seed", args.seed}};
    write_text(args.out + "/config.json", echo.dump(2) + "\n");
    std::cout << "wrote " << split.train.size() << "/" << split.dev.size() << "/"
              << split.test.size() << " train/dev/test examples to " << args.out
              << "\n";
    return 0;
}

// ---- shared model/run plumbing ----

struct RunArgs {
    std::string data_dir;
    std::string run_dir;
    // model
    int hidden_size{64};
    int num_layers{6};
    int num_heads{4};
    int ffn_size{256};
    int max_seq_len{128};
    double dropout{0.1};
    std::string phi{"identity"};
    std::uint64_t model_seed{42};
    // training
    std::string mode{"standard"};
    std::string targets{"soft"};
    std::string tasks{"qa"};
    std::string sampler{"uniform"};
    std::string adversarial{"none"};
    std::string cadence{"per-epoch"};
    std::string sbj_input{"question-answer"};
    int epochs{3};
    int batch_size{16};
    double lr{5e-5};
    int warmup_steps{-1};
    int patience{5};
    double grl_lambda{1.0};
    bool no_early_stopping{false};
    long long max_steps{0};
    std::uint64_t seed{0};
};

PostEncoderKind parse_phi(const std::string& name) {
    if (name == "identity") return PostEncoderKind::identity;
    if (name == "bilstm") return PostEncoderKind::bilstm;
    if (name == "highway") return PostEncoderKind::highway;
    throw std::invalid_argument("--phi must be identity, bilstm or highway");
}

TrainConfig parse_train_config(const RunArgs& args) {
    TrainConfig config;
    config.epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.lr = args.lr;
    config.warmup_steps = args.warmup_steps;
    config.patience = args.patience;
    config.grl_lambda = args.grl_lambda;
    config.early_stopping = !args.no_early_stopping;
    config.max_steps = args.max_steps;
    config.seed = args.seed;
    if (args.sampler == "uniform")
        config.sampler = SamplerKind::uniform;
    else if (args.sampler == "oversampling")
        config.sampler = SamplerKind::oversampling;
    else
        throw std::invalid_argument("--sampler must be uniform or oversampling");
    if (args.adversarial == "none")
        config.adversarial = AdversarialMode::none;
    else if (args.adversarial == "simple")
        config.adversarial = AdversarialMode::simple;
    else if (args.adversarial == "grl")
        config.adversarial = AdversarialMode::grl;
    else
        throw std::invalid_argument("--adversarial must be none, simple or grl");
    if (args.cadence == "per-epoch")
        config.cadence = EvalCadence::per_epoch;
    else if (args.cadence == "ten-per-epoch")
        config.cadence = EvalCadence::ten_per_epoch;
    else
        throw std::invalid_argument("--cadence must be per-epoch or ten-per-epoch");
    if (args.sbj_input == "question-answer")
        config.sbj_input = InputMode::question_answer;
    else if (args.sbj_input == "question-context")
        config.sbj_input = InputMode::question_context;
    else
        throw std::invalid_argument(
            "--sbj-input must be question-answer or question-context");
    config.task_set.clear();
    for (const auto& name : split_csv(args.tasks))
        config.task_set.push_back(task_from_name(name));
    if (config.task_set.empty())
        throw std::invalid_argument("--tasks must name at least one task");
    return config;
}

struct LoadedData {
    std::vector<QAExample> train, dev, test;
    Vocab vocab;
    std::vector<std::string> domains;
};

LoadedData load_data(const std::string& data_dir) {
    LoadedData d;
    d.train = load_jsonl(data_dir + "/train.jsonl");
    d.dev = load_jsonl(data_dir + "/dev.jsonl");
    std::string test_path = data_dir + "/test.jsonl";
    if (fs::exists(test_path)) d.test = load_jsonl(test_path);
    if (d.train.empty()) throw std::invalid_argument("empty training set");
    d.vocab = Vocab::build(d.train);
    std::vector<QAExample> all = d.train;
    all.insert(all.end(), d.dev.begin(), d.dev.end());
    all.insert(all.end(), d.test.begin(), d.test.end());
    d.domains = collect_domains(all);
    return d;
}

json run_config_json(const RunArgs& args, const ModelSpec& spec) {
    return {{"data_dir", args.data_dir},
            {"model",
             {{"vocab_size", spec.encoder.vocab_size},
              {"max_seq_len", spec.encoder.max_seq_len},
              {"hidden_size", spec.encoder.hidden_size},
              {"num_layers", spec.encoder.num_layers},
              {"num_heads", spec.encoder.num_heads},
              {"ffn_size", spec.encoder.ffn_size},
              {"dropout", spec.encoder.dropout_rate},
              {"seed", spec.encoder.seed},
              {"phi", args.phi},
              {"num_domains", spec.num_domains},
              {"dataset_head", spec.dataset_head},
              {"concat_width", spec.concat_width}}},
            {"train",
             {{"mode", args.mode},
              {"targets", args.targets},
              {"tasks", args.tasks},
              {"sampler", args.sampler},
              {"adversarial", args.adversarial},
              {"cadence", args.cadence},
              {"sbj_input", args.sbj_input},
              {"epochs", args.epochs},
              {"batch_size", args.batch_size},
              {"lr", args.lr},
              {"warmup_steps", args.warmup_steps},
              {"patience", args.patience},
              {"grl_lambda", args.grl_lambda},
              {"early_stopping", !args.no_early_stopping},
              {"max_steps", args.max_steps},
              {"seed", args.seed}}}};
}

ModelSpec spec_from_config(const json& config) {
    const json& m = config.at("model");
    ModelSpec spec;
    spec.encoder.vocab_size = m.at("vocab_size");
    spec.encoder.max_seq_len = m.at("max_seq_len");
    spec.encoder.hidden_size = m.at("hidden_size");
    spec.encoder.num_layers = m.at("num_layers");
    spec.encoder.num_heads = m.at("num_heads");
    spec.encoder.ffn_size = m.at("ffn_size");
    spec.encoder.dropout_rate = m.at("dropout");
    spec.encoder.seed = m.at("seed");
    spec.phi = parse_phi(m.at("phi"));
    spec.num_domains = m.at("num_domains");
    spec.dataset_head = m.value("dataset_head", false);
    spec.concat_width = m.at("concat_width");
    return spec;
}

SoftTargetMap load_targets(const std::string& path) {
    json j = load_json_file(path);
    SoftTargetMap targets;
    for (auto it = j.begin(); it != j.end(); ++it)
        targets[it.key()] = it.value().get<std::vector<double>>();
    return targets;
}

// ---- train ----

int cmd_train(const RunArgs& args) {
    if (args.data_dir.empty()) throw std::invalid_argument("--data is required");
    LoadedData data = load_data(args.data_dir);
    TrainConfig config = parse_train_config(args);

    bool sequential = args.mode == "sequential";
    if (!sequential && args.mode != "standard")
        throw std::invalid_argument("--mode must be standard or sequential");
    if (sequential) {
        if (args.targets != "soft" && args.targets != "oracle")
            throw std::invalid_argument("--targets must be soft or oracle");
    } else {
        config.validate();
    }

    ModelSpec spec;
    spec.encoder.vocab_size = data.vocab.size();
    spec.encoder.max_seq_len = args.max_seq_len;
    spec.encoder.hidden_size = args.hidden_size;
    spec.encoder.num_layers = args.num_layers;
    spec.encoder.num_heads = args.num_heads;
    spec.encoder.ffn_size = args.ffn_size;
    spec.encoder.dropout_rate = args.dropout;
    spec.encoder.seed = args.model_seed;
    spec.phi = parse_phi(args.phi);
    spec.num_domains = static_cast<int>(data.domains.size());
    spec.concat_width = sequential ? 2 + spec.num_domains : 0;
    for (TaskKind task : config.task_set)
        if (task == TaskKind::dataset) spec.dataset_head = true;
    spec.encoder.validate();

    std::string run_dir = args.run_dir.empty() ? out_root() + "/train" : args.run_dir;
    ensure_dir(run_dir);
    json echo = run_config_json(args, spec);
    echo["domains"] = data.domains;
    write_text(run_dir + "/config.json", echo.dump(2) + "\n");

    QaModel model(spec);
    if (sequential) {
        TransferTargets mode = args.targets == "soft" ? TransferTargets::soft
                                                      : TransferTargets::oracle;
        SequentialResult result = sequential_transfer(
            model, data.train, data.dev, data.vocab, data.domains, config, mode,
            run_dir);
        json targets_json = json::object();
        for (const auto& [id, vec] : result.targets) targets_json[id] = vec;
        write_text(run_dir + "/targets.json", targets_json.dump() + "\n");
        model.save(run_dir + "/final.bin", run_dir + "/final.manifest.json");
        std::cout << "sequential transfer done: dom " << result.dom_stage.steps
                  << " steps, sbj " << result.sbj_stage.steps << " steps, qa "
                  << result.qa_stage.steps << " steps; best qa dev loss "
                  << result.qa_stage.best_dev_loss << "\n";
    } else {
        TrainResult result =
            train(model, data.train, data.dev, data.vocab, data.domains, config,
                  run_dir);
        model.save(run_dir + "/final.bin", run_dir + "/final.manifest.json");
        std::cout << "training done: " << result.steps << " steps, best dev loss "
                  << result.best_dev_loss
                  << (result.early_stopped ? " (early stopped)" : "") << "\n";
    }
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string run_dir;
    std::string data_dir;  // defaults to the training data dir
    std::string split{"test"};
    std::string group_by{"none"};
    std::string checkpoint{"best"};
};

const std::vector<QAExample>& pick_split(const LoadedData& data,
                                         const std::string& split) {
    if (split == "train") return data.train;
    if (split == "dev") return data.dev;
    if (split == "test") return data.test;
    throw std::invalid_argument("--split must be train, dev or test");
}

struct LoadedModel {
    ModelSpec spec;
    std::unique_ptr<QaModel> model;
    SoftTargetMap targets;
    const SoftTargetMap* targets_ptr{nullptr};
    std::string data_dir;
};

LoadedModel load_run(const std::string& run_dir, const std::string& checkpoint) {
    LoadedModel lm;
    json config = load_json_file(run_dir + "/config.json");
    lm.spec = spec_from_config(config);
    lm.data_dir = config.value("data_dir", "");
    lm.model = std::make_unique<QaModel>(lm.spec);
    std::string bin = run_dir + "/" + checkpoint + ".bin";
    std::string manifest = run_dir + "/" + checkpoint + ".manifest.json";
    if (!fs::exists(bin) && fs::exists(run_dir + "/stage_qa/" + checkpoint + ".bin")) {
        // sequential-transfer runs keep the best QA checkpoint in the last stage
        bin = run_dir + "/stage_qa/" + checkpoint + ".bin";
        manifest = run_dir + "/stage_qa/" + checkpoint + ".manifest.json";
    }
    if (!fs::exists(bin) || !fs::exists(manifest))
        throw std::invalid_argument("checkpoint not found: " + bin);
    try {
        lm.model->load(bin, manifest);
    } catch (const std::exception& e) {
        throw std::invalid_argument("checkpoint does not match the config: " +
                                    std::string(e.what()));
    }
    if (lm.spec.concat_width > 0) {
        std::string targets_path = run_dir + "/targets.json";
        if (!fs::exists(targets_path))
            throw std::invalid_argument(
                "sequential-transfer run without targets.json");
        lm.targets = load_targets(targets_path);
        lm.targets_ptr = &lm.targets;
    }
    return lm;
}

int cmd_eval(const EvalArgs& args) {
    if (args.run_dir.empty()) throw std::invalid_argument("--run-dir is required");
    LoadedModel lm = load_run(args.run_dir, args.checkpoint);
    std::string data_dir = args.data_dir.empty() ? lm.data_dir : args.data_dir;
    if (data_dir.empty()) throw std::invalid_argument("--data is required");
    LoadedData data = load_data(data_dir);
    if (data.vocab.size() != lm.spec.encoder.vocab_size)
        throw std::invalid_argument(
            "dataset vocabulary does not match the checkpoint (" +
            std::to_string(data.vocab.size()) + " vs " +
            std::to_string(lm.spec.encoder.vocab_size) + " tokens)");
    const auto& examples = pick_split(data, args.split);
    if (examples.empty()) throw EmptyResultError("selected split is empty");

    std::mt19937_64 rng(0);
    double em_total = 0.0, f1_total = 0.0;
    std::vector<ScoredExample> scored;
    for (const auto& ex : examples) {
        EncodedExample enc = encode_example(ex, InputMode::question_context,
                                            data.vocab, lm.spec.encoder.max_seq_len);
        auto fwd = lm.model->forward_shared(enc.token_ids, enc.mask, false, rng);
        const std::vector<double>* target = nullptr;
        if (lm.targets_ptr != nullptr) {
            auto it = lm.targets.find(ex.id);
            if (it == lm.targets.end())
                throw std::invalid_argument("no stored target for example " + ex.id);
            target = &it->second;
        }
        auto [start_logits, end_logits] =
            lm.model->qa_logits(fwd.shared, enc.mask, target);
        SpanPrediction pred = predict_span(start_logits->data, end_logits->data);
        std::string pred_text = span_to_text(ex, enc, pred.start, pred.end);
        const std::string& gold = enc.gold_truncated ? "" : ex.answer;
        int em = exact_match(pred_text, gold);
        double f1 = span_f1(pred_text, gold);
        em_total += em;
        f1_total += f1;
        auto q_tokens = tokenize(ex.question);
        scored.push_back({ex.domain, q_tokens.empty() ? "" : q_tokens.front(), em, f1});
    }
    double n = static_cast<double>(examples.size());
    json report{{"split", args.split},
                {"examples", examples.size()},
                {"em", 100.0 * em_total / n},
                {"f1", 100.0 * f1_total / n}};

    std::string eval_dir = args.run_dir + "/eval";
    ensure_dir(eval_dir);
    write_text(eval_dir + "/metrics_" + args.split + ".json", report.dump(2) + "\n");
    std::cout << "split " << args.split << ": EM "
              << json(report["em"]).dump() << " F1 " << json(report["f1"]).dump()
              << " over " << examples.size() << " examples\n";

    auto emit_group = [&](GroupKey key, const std::string& name) {
        auto rows = grouped_report(scored, key);
        write_text(eval_dir + "/by_" + name + "_" + args.split + ".csv",
                   group_table_csv(rows));
        std::string table = format_group_table(rows);
        write_text(eval_dir + "/by_" + name + "_" + args.split + ".txt", table);
        std::cout << table;
    };
    if (args.group_by == "domain")
        emit_group(GroupKey::domain, "domain");
    else if (args.group_by == "interrogative")
        emit_group(GroupKey::interrogative, "interrogative");
    else if (args.group_by == "all") {
        emit_group(GroupKey::domain, "domain");
        emit_group(GroupKey::interrogative, "interrogative");
    } else if (args.group_by != "none")
        throw std::invalid_argument(
            "--group-by must be none, domain, interrogative or all");
    return 0;
}

// ---- analyze ----

struct AnalyzeArgs {
    std::string run_dir;
    std::string data_dir;
    std::string split{"dev"};
    std::string checkpoint{"best"};
    std::string projection{"subjectivity"};
    double variance{0.95};
    double perplexity{10.0};
    int tsne_iters{500};
    std::uint64_t seed{0};
};

int cmd_analyze(const AnalyzeArgs& args) {
    if (args.run_dir.empty()) throw std::invalid_argument("--run-dir is required");
    LoadedModel lm = load_run(args.run_dir, args.checkpoint);
    std::string data_dir = args.data_dir.empty() ? lm.data_dir : args.data_dir;
    if (data_dir.empty()) throw std::invalid_argument("--data is required");
    LoadedData data = load_data(data_dir);
    const auto& examples = pick_split(data, args.split);
    if (examples.empty()) throw EmptyResultError("selected split is empty");

    auto traces = capture_traces(*lm.model, examples, data.vocab, lm.targets_ptr);
    std::string analysis_dir = args.run_dir + "/analysis";
    ensure_dir(analysis_dir);

    AnalysisReport report = analysis_report(traces, args.variance);
    bool any_samples = false;
    for (const auto& samples : report.layer_samples)
        if (!samples.empty()) any_samples = true;
    if (!any_samples)
        throw EmptyResultError(
            "no eligible answer spans: every gold span is unanswerable or a "
            "single token, so cosine distributions are undefined");
    write_text(analysis_dir + "/report.json", report_to_json(report));
    for (int layer = 1; layer <= report.num_layers; ++layer)
        write_text(analysis_dir + "/cosines_layer" + std::to_string(layer) + ".csv",
                   layer_samples_csv(report, layer));

    ProjectionLabel label;
    if (args.projection == "subjectivity")
        label = ProjectionLabel::subjectivity3way;
    else if (args.projection == "domain")
        label = ProjectionLabel::domain;
    else if (args.projection == "domain-subjectivity")
        label = ProjectionLabel::domain_subjectivity;
    else
        throw std::invalid_argument(
            "--projection must be subjectivity, domain or domain-subjectivity");
    TsneConfig tsne;
    tsne.perplexity = args.perplexity;
    tsne.iters = args.tsne_iters;
    tsne.seed = args.seed;
    auto views = project_cls(traces, label, args.variance, tsne);
    for (std::size_t l = 0; l < views.size(); ++l)
        write_text(analysis_dir + "/projection_layer" + std::to_string(l + 1) +
                       ".csv",
                   projection_csv(views[l]));
    std::cout << "analysis over " << traces.size() << " examples, "
              << report.num_layers << " layers, written to " << analysis_dir
              << "\n";
    for (const auto& ls : report.layers)
        std::cout << "layer " << ls.layer << ": correct mean "
                  << ls.correct.mean << " vs erroneous " << ls.erroneous.mean
                  << ", corrected p " << ls.p_corrected << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"span-selection QA laboratory"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file with defaults");

    json defaults;
    try {
        defaults = config_file_defaults(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
    apply_default(defaults, "preset", gen.preset);
    apply_default(defaults, "out", gen.out);
    apply_default(defaults, "n_per_domain", gen.n_per_domain);
    apply_default(defaults, "domains", gen.num_domains);
    apply_default(defaults, "seed", gen.seed);
    gen_cmd->add_option("--preset", gen.preset, "subjqa-like or squad-like");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--n-per-domain", gen.n_per_domain, "examples per domain");
    gen_cmd->add_option("--domains", gen.num_domains, "number of domains");
    gen_cmd->add_option("--train-frac", gen.train_frac, "training fraction");
    gen_cmd->add_option("--dev-frac", gen.dev_frac, "dev fraction");
    gen_cmd->add_option("--seed", gen.seed, "generation seed");

    RunArgs run;
    auto* train_cmd = app.add_subcommand("train", "fine-tune a model");
    apply_default(defaults, "data", run.data_dir);
    apply_default(defaults, "run_dir", run.run_dir);
    apply_default(defaults, "hidden_size", run.hidden_size);
    apply_default(defaults, "num_layers", run.num_layers);
    apply_default(defaults, "num_heads", run.num_heads);
    apply_default(defaults, "ffn_size", run.ffn_size);
    apply_default(defaults, "max_seq_len", run.max_seq_len);
    apply_default(defaults, "dropout", run.dropout);
    apply_default(defaults, "phi", run.phi);
    apply_default(defaults, "mode", run.mode);
    apply_default(defaults, "targets", run.targets);
    apply_default(defaults, "tasks", run.tasks);
    apply_default(defaults, "sampler", run.sampler);
    apply_default(defaults, "adversarial", run.adversarial);
    apply_default(defaults, "cadence", run.cadence);
    apply_default(defaults, "epochs", run.epochs);
    apply_default(defaults, "batch_size", run.batch_size);
    apply_default(defaults, "lr", run.lr);
    apply_default(defaults, "warmup_steps", run.warmup_steps);
    apply_default(defaults, "patience", run.patience);
    apply_default(defaults, "seed", run.seed);
    train_cmd->add_option("--data", run.data_dir, "dataset directory");
    train_cmd->add_option("--run-dir", run.run_dir, "run output directory");
    train_cmd->add_option("--hidden-size", run.hidden_size, "model width");
    train_cmd->add_option("--num-layers", run.num_layers, "encoder layers");
    train_cmd->add_option("--num-heads", run.num_heads, "attention heads");
    train_cmd->add_option("--ffn-size", run.ffn_size, "feed-forward width");
    train_cmd->add_option("--max-seq-len", run.max_seq_len, "sequence budget");
    train_cmd->add_option("--dropout", run.dropout, "dropout rate");
    train_cmd->add_option("--phi", run.phi, "identity, bilstm or highway");
    train_cmd->add_option("--model-seed", run.model_seed, "init seed");
    train_cmd->add_option("--mode", run.mode, "standard or sequential");
    train_cmd->add_option("--targets", run.targets,
                          "soft or oracle (sequential mode)");
    train_cmd->add_option("--tasks", run.tasks, "comma list: qa,sbj,dom,dataset");
    train_cmd->add_option("--sampler", run.sampler, "uniform or oversampling");
    train_cmd->add_option("--adversarial", run.adversarial,
                          "none, simple or grl");
    train_cmd->add_option("--cadence", run.cadence,
                          "per-epoch or ten-per-epoch");
    train_cmd->add_option("--sbj-input", run.sbj_input,
                          "question-answer or question-context");
    train_cmd->add_option("--epochs", run.epochs, "training epochs");
    train_cmd->add_option("--batch-size", run.batch_size, "batch size");
    train_cmd->add_option("--lr", run.lr, "peak learning rate");
    train_cmd->add_option("--warmup-steps", run.warmup_steps,
                          "warmup steps (-1: 10% of total)");
    train_cmd->add_option("--patience", run.patience, "early-stopping patience");
    train_cmd->add_option("--grl-lambda", run.grl_lambda, "GRL strength");
    train_cmd->add_flag("--no-early-stopping", run.no_early_stopping,
                        "disable early stopping");
    train_cmd->add_option("--max-steps", run.max_steps, "hard step cap");
    train_cmd->add_option("--seed", run.seed, "training seed");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--run-dir", ev.run_dir, "training run directory");
    eval_cmd->add_option("--data", ev.data_dir, "dataset directory override");
    eval_cmd->add_option("--split", ev.split, "train, dev or test");
    eval_cmd->add_option("--group-by", ev.group_by,
                         "none, domain, interrogative or all");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "best or final");

    AnalyzeArgs an;
    auto* analyze_cmd =
        app.add_subcommand("analyze", "latent-representation analysis");
    analyze_cmd->add_option("--run-dir", an.run_dir, "training run directory");
    analyze_cmd->add_option("--data", an.data_dir, "dataset directory override");
    analyze_cmd->add_option("--split", an.split, "train, dev or test");
    analyze_cmd->add_option("--checkpoint", an.checkpoint, "best or final");
    analyze_cmd->add_option("--projection", an.projection,
                            "subjectivity, domain or domain-subjectivity");
    analyze_cmd->add_option("--variance", an.variance, "PCA variance target");
    analyze_cmd->add_option("--perplexity", an.perplexity, "t-SNE perplexity");
    analyze_cmd->add_option("--tsne-iters", an.tsne_iters, "t-SNE iterations");
    analyze_cmd->add_option("--seed", an.seed, "t-SNE seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) return cmd_train(run);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        if (analyze_cmd->parsed()) return cmd_analyze(an);
    } catch (const EmptyResultError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEmptyResult;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return 0;
}
