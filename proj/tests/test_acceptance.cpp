// End-to-end acceptance checks. Each case prints exactly one PASS/FAIL line
// so the suite doubles as a release checklist.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "qalab/analysis.hpp"
#include "qalab/data.hpp"
#include "qalab/metrics.hpp"
#include "qalab/model.hpp"
#include "qalab/stats.hpp"
#include "qalab/train.hpp"

#include "t_test_fixtures.hpp"

using namespace qalab;
namespace fs = std::filesystem;

namespace {

void report(int id, const std::string& what, bool ok) {
    std::printf("%s criterion %2d: %s\n", ok ? "[PASS]" : "[FAIL]", id,
                what.c_str());
    CHECK(ok);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

ModelSpec small_spec(PostEncoderKind phi, int vocab_size) {
    ModelSpec spec;
    spec.encoder.vocab_size = vocab_size;
    spec.encoder.max_seq_len = 8;
    spec.encoder.hidden_size = 8;
    spec.encoder.num_layers = 2;
    spec.encoder.num_heads = 2;
    spec.encoder.ffn_size = 16;
    spec.encoder.dropout_rate = 0.0;
    spec.encoder.seed = 7;
    spec.phi = phi;
    spec.num_domains = 3;
    return spec;
}

std::vector<double> grad_of(const ParamRegistry& reg, const std::string& name) {
    Tensor t = reg.get(name);
    if (t->grad.size() != t->data.size()) return std::vector<double>(t->data.size());
    return t->grad;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("gradient integrity of the full encoder/post-encoder/head stack") {
    auto t0 = std::chrono::steady_clock::now();
    ModelSpec spec = small_spec(PostEncoderKind::bilstm, 24);
    QaModel model(spec);
    std::mt19937_64 rng(11);

    std::vector<int> ids{2, 5, 9, 13, 17, 21};  // T = 6
    std::vector<bool> mask(ids.size(), true);
    std::vector<Tensor> inputs;
    for (auto& p : model.params().params()) inputs.push_back(p.value);

    auto f = [&](const std::vector<Tensor>&) {
        std::mt19937_64 r(0);
        auto fwd = model.forward_shared(ids, mask, false, r);
        auto [s_logits, e_logits] = model.qa_logits(fwd.shared, mask, nullptr);
        Tensor loss = qa_loss(s_logits, e_logits, 2, 4);
        Tensor cv = model.class_vector(fwd.shared, mask);
        auto [lq, la] = model.sbj_head().forward(cv);
        loss = add(loss, subjectivity_loss(lq, la, 1, 0));
        loss = add(loss, domain_loss(model.dom_head().forward(cv), {1},
                                     {1.0, 1.0, 1.0}));
        // scaled down so the finite-difference cancellation noise on the
        // softmax-invariant parameters (query bias, uniform logit shifts)
        // stays below the relative-error denominator floor
        return scale(loss, 1e-2);
    };
    double err = grad_check(f, inputs, 1e-4);
    double elapsed = seconds_since(t0);
    report(1,
           "full-composition gradient check, max rel err " + std::to_string(err) +
               " (< 1e-3), " + std::to_string(elapsed) + " s (< 60)",
           err < 1e-3 && elapsed < 60.0);
}

TEST_CASE("gradient-reversal branch negates shared gradients exactly") {
    ModelSpec spec = small_spec(PostEncoderKind::identity, 24);
    QaModel model(spec);
    std::mt19937_64 rng(3);
    std::vector<int> ids{1, 4, 7, 10, 13};
    std::vector<bool> mask(ids.size(), true);
    std::vector<int> y{2};
    std::vector<double> w{1.0, 1.0, 1.0};

    auto run = [&](bool through_grl) {
        std::mt19937_64 r(0);
        auto fwd = model.forward_shared(ids, mask, false, r);
        Tensor cv = model.class_vector(fwd.shared, mask);
        if (through_grl) cv = grad_reverse(cv, 1.0);
        backward(domain_loss(model.dom_head().forward(cv), y, w));
    };

    run(true);
    std::map<std::string, std::vector<double>> grl_grads;
    for (auto& p : model.params().params())
        grl_grads[p.name] = grad_of(model.params(), p.name);
    run(false);

    double max_shared = 0.0, max_head = 0.0;
    for (auto& p : model.params().params()) {
        std::vector<double> plain = grad_of(model.params(), p.name);
        const auto& rev = grl_grads.at(p.name);
        bool is_head = p.name.find("dom.") != std::string::npos;
        for (std::size_t i = 0; i < plain.size(); ++i) {
            double d = is_head ? std::fabs(rev[i] - plain[i])
                               : std::fabs(rev[i] + plain[i]);
            (is_head ? max_head : max_shared) = std::max(is_head ? max_head : max_shared, d);
        }
    }
    report(2,
           "GRL at lambda=1: shared grads negated (|dev| " +
               std::to_string(max_shared) + " < 1e-9), head grads unchanged (|dev| " +
               std::to_string(max_head) + " < 1e-9)",
           max_shared < 1e-9 && max_head < 1e-9);
}

TEST_CASE("loss reversal ascends the auxiliary loss, GRL descends it") {
    int passed = 0;
    const double lr = 1e-2;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ModelSpec spec = small_spec(PostEncoderKind::identity, 24);
        spec.encoder.seed = seed;
        QaModel model(spec);
        std::mt19937_64 gen(seed);
        std::vector<int> ids(5);
        for (auto& id : ids) id = static_cast<int>(gen() % 20) + 4;
        std::vector<bool> mask(ids.size(), true);
        std::vector<int> y{static_cast<int>(seed % 3)};
        std::vector<double> w{1.0, 1.0, 1.0};

        auto head_grads = [&](int mode) {  // 0 plain, 1 simple, 2 grl
            std::mt19937_64 r(0);
            auto fwd = model.forward_shared(ids, mask, false, r);
            Tensor cv = model.class_vector(fwd.shared, mask);
            if (mode == 2) cv = grad_reverse(cv, 1.0);
            Tensor loss = domain_loss(model.dom_head().forward(cv), y, w);
            if (mode == 1) loss = reverse_loss(loss);
            backward(loss);
            std::vector<double> g;
            for (auto& p : model.params().params())
                if (p.name.find("dom.") != std::string::npos)
                    for (double v : grad_of(model.params(), p.name)) g.push_back(v);
            return g;
        };
        std::vector<double> g_plain = head_grads(0);
        std::vector<double> g_simple = head_grads(1);
        std::vector<double> g_grl = head_grads(2);
        // one SGD step moves params by -lr * grad; project onto the aux ascent
        // direction (the plain gradient)
        double dot_simple = 0.0, dot_grl = 0.0;
        for (std::size_t i = 0; i < g_plain.size(); ++i) {
            dot_simple += -lr * g_simple[i] * g_plain[i];
            dot_grl += -lr * g_grl[i] * g_plain[i];
        }
        if (dot_simple > 0.0 && dot_grl < 0.0) ++passed;
    }
    report(3,
           "aux-head step direction sign test (simple ascends, GRL descends) on " +
               std::to_string(passed) + "/10 seeds",
           passed == 10);
}

TEST_CASE("task sampler frequencies") {
    std::vector<TaskKind> tasks{TaskKind::qa, TaskKind::sbj, TaskKind::dom};
    const int n = 10000;
    std::mt19937_64 rng(99);
    std::vector<int> over(3, 0), uni(3, 0);
    auto slot = [&](TaskKind t) {
        return t == TaskKind::qa ? 0 : t == TaskKind::sbj ? 1 : 2;
    };
    for (int i = 0; i < n; ++i)
        ++over[slot(sample_task(SamplerKind::oversampling, tasks, rng))];
    for (int i = 0; i < n; ++i)
        ++uni[slot(sample_task(SamplerKind::uniform, tasks, rng))];
    double worst = 0.0;
    std::vector<double> want_over{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};
    for (int k = 0; k < 3; ++k) {
        worst = std::max(worst, std::fabs(over[k] / double(n) - want_over[k]));
        worst = std::max(worst, std::fabs(uni[k] / double(n) - 1.0 / 3.0));
    }
    report(4,
           "10000-draw sampler frequencies within 0.02 of (2/3,1/6,1/6) and "
           "uniform, worst dev " +
               std::to_string(worst),
           worst < 0.02);
}

TEST_CASE("a small model memorizes 32 training examples") {
    auto t0 = std::chrono::steady_clock::now();
    SyntheticConfig gen_config;
    gen_config.domains = {"books", "movies"};
    gen_config.n_per_domain = 16;
    gen_config.seed = 21;
    auto examples = generate_synthetic(gen_config);
    REQUIRE(examples.size() == 32);
    Vocab vocab = Vocab::build(examples);

    ModelSpec spec;
    spec.encoder.vocab_size = vocab.size();
    spec.encoder.max_seq_len = 64;
    spec.encoder.hidden_size = 32;
    spec.encoder.num_layers = 2;
    spec.encoder.num_heads = 4;
    spec.encoder.ffn_size = 64;
    spec.encoder.dropout_rate = 0.0;
    spec.encoder.seed = 5;
    spec.num_domains = 2;
    QaModel model(spec);

    TrainConfig config;
    config.epochs = 100;
    config.batch_size = 8;
    config.lr = 1e-3;
    config.warmup_steps = 10;
    config.early_stopping = false;
    config.max_steps = 300;
    config.seed = 2;
    train(model, examples, examples, vocab, gen_config.domains, config);
    EvalResult result = evaluate(model, examples, vocab);
    double elapsed = seconds_since(t0);
    report(5,
           "training-set exact match " + std::to_string(result.em) +
               "% after <= 300 steps in " + std::to_string(elapsed) + " s (< 60)",
           result.em == 100.0 && elapsed < 60.0);
}

TEST_CASE("cosine pipeline equals a naive double-loop reference") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double worst = 0.0;
    int trials = 60;
    for (int trial = 0; trial < trials; ++trial) {
        int d = 3 + static_cast<int>(rng() % 6);        // D <= 8
        int t_total = 5 + static_cast<int>(rng() % 5);  // up to 9 tokens
        int t_ans = 2 + static_cast<int>(rng() % 5);    // 2..6 answer rows
        if (t_ans > t_total - 2) t_ans = t_total - 2;
        int start = 1 + static_cast<int>(rng() % (t_total - t_ans));

        HiddenTrace trace;
        trace.example_id = "trial" + std::to_string(trial);
        Mat layer(t_total, d);
        for (double& v : layer.v) v = gauss(rng);
        trace.layers.push_back(layer);
        trace.roles.assign(t_total, TokenRole::context);
        trace.roles[0] = TokenRole::cls;
        for (int i = start; i < start + t_ans; ++i) trace.roles[i] = TokenRole::answer;
        trace.answerable = true;
        trace.gold_start = start;
        trace.gold_end = start + t_ans - 1;
        trace.correct = trial % 2 == 0;

        CosineGroups groups = cosine_distributions({trace}, 1, 1.0);
        REQUIRE(groups.correct.size() + groups.erroneous.size() == 1);
        double got = groups.correct.empty() ? groups.erroneous[0].cos_a
                                            : groups.correct[0].cos_a;

        // reference: column-center the full matrix (a full-variance PCA is a
        // rotation of exactly that), then average cosine over ordered pairs
        std::vector<double> mean_col(d, 0.0);
        for (int r = 0; r < t_total; ++r)
            for (int c = 0; c < d; ++c) mean_col[c] += layer.at(r, c) / t_total;
        double acc = 0.0;
        for (int j = start; j < start + t_ans; ++j)
            for (int k = start; k < start + t_ans; ++k) {
                if (j == k) continue;
                double dot = 0.0, nj = 0.0, nk = 0.0;
                for (int c = 0; c < d; ++c) {
                    double a = layer.at(j, c) - mean_col[c];
                    double b = layer.at(k, c) - mean_col[c];
                    dot += a * b;
                    nj += a * a;
                    nk += b * b;
                }
                acc += dot / std::sqrt(nj * nk);
            }
        double want = acc / (double(t_ans) * t_ans - t_ans);
        worst = std::max(worst, std::fabs(got - want));
    }
    report(6,
           "avg answer cosine vs naive reference over " + std::to_string(trials) +
               " random traces, max |dev| " + std::to_string(worst) + " (< 1e-9)",
           worst < 1e-9);
}

TEST_CASE("t test and correction against frozen references") {
    double worst_t = 0.0, worst_p = 0.0;
    for (const auto& fx : t_test_fixtures()) {
        TTestResult r = t_test_ind(fx.a, fx.b);
        worst_t = std::max(worst_t, std::fabs(r.t - fx.t));
        worst_p = std::max(worst_p, std::fabs(r.p - fx.p));
    }
    bool bonf_ok = bonferroni({0.008}, 6)[0] == 0.048;
    report(7,
           "t statistics |dev| " + std::to_string(worst_t) +
               " (< 1e-9), p |dev| " + std::to_string(worst_p) +
               " (< 1e-8), bonferroni(0.008, 6) exact",
           worst_t < 1e-9 && worst_p < 1e-8 && bonf_ok);
}

TEST_CASE("planted correct-vs-erroneous effect is detected at every layer") {
    const int d = 30, t_total = 10, t_ans = 4, layers = 2, per_group = 30;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> axis(d);
    for (double& v : axis) v = gauss(rng);

    std::vector<HiddenTrace> traces;
    for (int g = 0; g < 2; ++g) {
        bool correct = g == 0;
        for (int i = 0; i < per_group; ++i) {
            HiddenTrace tr;
            tr.example_id = (correct ? "c" : "e") + std::to_string(i);
            tr.roles.assign(t_total, TokenRole::context);
            tr.roles[0] = TokenRole::cls;
            for (int r = 3; r < 3 + t_ans; ++r) tr.roles[r] = TokenRole::answer;
            tr.answerable = true;
            tr.gold_start = 3;
            tr.gold_end = 3 + t_ans - 1;
            tr.correct = correct;
            for (int l = 0; l < layers; ++l) {
                Mat m(t_total, d);
                for (int r = 0; r < t_total; ++r)
                    for (int c = 0; c < d; ++c) {
                        // correct answers share a direction (pairwise cosine
                        // near 0.8); erroneous ones are nearly isotropic
                        double align =
                            tr.roles[r] == TokenRole::answer ? (correct ? 20.0 : 0.4)
                                                             : 0.0;
                        m.at(r, c) = align * axis[c] + gauss(rng) * (correct ? 5.0 : 1.0);
                    }
                tr.layers.push_back(m);
            }
            traces.push_back(tr);
        }
    }

    AnalysisReport rep = analysis_report(traces, 0.95);
    bool ok = rep.num_layers == layers;
    double worst_p = 0.0;
    for (const auto& ls : rep.layers) {
        worst_p = std::max(worst_p, ls.p_corrected);
        ok = ok && ls.test_applicable && ls.p_corrected < 1e-3 &&
             ls.correct.frac_above_half > ls.erroneous.frac_above_half;
    }
    report(8,
           "planted cosine separation: corrected p < 0.001 at all layers (max " +
               std::to_string(worst_p) + "), P(cos>0.5) higher for correct",
           ok);
}

TEST_CASE("PCA keeps a minimal component count and reconstructs exactly") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 60, d = 6;
    // independent latent factors with stds 8, 4, 2, 1 embedded in d dims
    Mat x(n, d);
    for (int r = 0; r < n; ++r) {
        std::vector<double> f{8 * gauss(rng), 4 * gauss(rng), 2 * gauss(rng),
                              gauss(rng)};
        for (int c = 0; c < d; ++c)
            x.at(r, c) = f[0] * (c == 0) + f[1] * (c == 1) + f[2] * (c == 2) +
                         f[3] * (c == 3) + 0.01 * gauss(rng);
    }
    PcaResult res = pca_fit_transform(x, 0.95);
    bool non_increasing = true;
    for (std::size_t i = 1; i < res.explained_ratio.size(); ++i)
        if (res.explained_ratio[i] > res.explained_ratio[i - 1] + 1e-12)
            non_increasing = false;
    double cum = 0.0;
    int minimal = 0;
    while (cum < 0.95 && minimal < d) cum += res.explained_ratio[minimal++];
    bool minimal_ok = res.components == minimal;

    // keeping every component is a rotation, so centered pairwise distances
    // survive; that is the reconstruction-error check at machine precision
    PcaResult full = pca_fit_transform(x, 1.0);
    std::vector<double> mean_col(d, 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) mean_col[c] += x.at(r, c) / n;
    double max_err = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            double d_orig = 0.0, d_proj = 0.0;
            for (int c = 0; c < d; ++c) {
                double diff = (x.at(a, c) - mean_col[c]) - (x.at(b, c) - mean_col[c]);
                d_orig += diff * diff;
            }
            for (int c = 0; c < full.projected.cols; ++c) {
                double diff = full.projected.at(a, c) - full.projected.at(b, c);
                d_proj += diff * diff;
            }
            max_err = std::max(max_err,
                               std::fabs(std::sqrt(d_orig) - std::sqrt(d_proj)));
        }
    report(9,
           "PCA: minimal components (" + std::to_string(res.components) +
               "), non-increasing ratios, full-rank reconstruction error " +
               std::to_string(max_err) + " (< 1e-6)",
           minimal_ok && non_increasing && max_err < 1e-6);
}

TEST_CASE("sequential transfer widths and target vector structure") {
    SyntheticConfig gen_config;  // default six domains
    gen_config.n_per_domain = 6;
    gen_config.seed = 9;
    auto examples = generate_synthetic(gen_config);
    Vocab vocab = Vocab::build(examples);
    std::vector<QAExample> train_set(examples.begin(), examples.begin() + 30);
    std::vector<QAExample> dev_set(examples.begin() + 30, examples.end());

    const int d = 8, k = 6;
    ModelSpec spec;
    spec.encoder.vocab_size = vocab.size();
    spec.encoder.max_seq_len = 64;
    spec.encoder.hidden_size = d;
    spec.encoder.num_layers = 1;
    spec.encoder.num_heads = 2;
    spec.encoder.ffn_size = 16;
    spec.encoder.dropout_rate = 0.0;
    spec.encoder.seed = 4;
    spec.num_domains = k;
    spec.concat_width = 2 + k;

    TrainConfig config;
    config.epochs = 1;
    config.batch_size = 8;
    config.lr = 1e-3;
    config.warmup_steps = 2;
    config.early_stopping = false;
    config.seed = 6;

    QaModel soft_model(spec);
    SequentialResult soft = sequential_transfer(soft_model, train_set, dev_set,
                                                vocab, gen_config.domains, config,
                                                TransferTargets::soft);
    bool width_ok = soft_model.qa_head().in_dim() == d + 8;
    bool soft_ok = soft.targets.size() == train_set.size() + dev_set.size();
    double worst_sum = 1.0;
    for (const auto& [id, vec] : soft.targets) {
        soft_ok = soft_ok && vec.size() == 2 + k;
        double s = 0.0;
        for (int c = 0; c < k; ++c) s += vec[2 + c];
        worst_sum = std::min(worst_sum, 1.0 - std::fabs(s - 1.0));
        soft_ok = soft_ok && std::fabs(s - 1.0) < 1e-6;
    }

    QaModel oracle_model(spec);
    SequentialResult oracle = sequential_transfer(
        oracle_model, train_set, dev_set, vocab, gen_config.domains, config,
        TransferTargets::oracle);
    bool oracle_ok = true;
    for (const auto& [id, vec] : oracle.targets) {
        int ones = 0;
        for (int c = 0; c < k; ++c) {
            double v = vec[2 + c];
            oracle_ok = oracle_ok && (v == 0.0 || v == 1.0);
            ones += v == 1.0;
        }
        oracle_ok = oracle_ok && ones == 1 && (vec[0] == 0.0 || vec[0] == 1.0) &&
                    (vec[1] == 0.0 || vec[1] == 1.0);
    }
    report(10,
           "sequential transfer: QA input width D+8, soft domain rows sum to 1, "
           "oracle vectors one-hot",
           width_ok && soft_ok && oracle_ok);
}

TEST_CASE("hand-derived metric fixtures") {
    bool f1_ok =
        std::fabs(span_f1("sound is decent", "the sound is decent") - 6.0 / 7.0) <
        1e-9;
    bool em_ok = exact_match("", "") == 1;  // null prediction vs unanswerable gold

    // two hand fixtures: perfect agreement, and gold {0,0,1,1} vs pred
    // {0,1,1,1}: F1_0 = 2/3, F1_1 = 4/5, macro = 11/15
    bool macro_ok =
        std::fabs(macro_f1({0, 1, 0, 1}, {0, 1, 0, 1}, 2) - 1.0) < 1e-9 &&
        std::fabs(macro_f1({0, 0, 1, 1}, {0, 1, 1, 1}, 2) - 11.0 / 15.0) < 1e-9;
    report(11, "span F1 6/7, unanswerable exact match, macro-F1 hand arithmetic",
           f1_ok && em_ok && macro_ok);
}

TEST_CASE("command-line pipeline is byte-deterministic") {
    fs::path root = fs::temp_directory_path() / "qalab-acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    std::string cli = fs::absolute("qalab-cli").string();
    REQUIRE_MESSAGE(fs::exists(cli), "qalab-cli must be built next to the tests");

    auto shell = [&](const std::string& cmd) {
        int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
        REQUIRE_MESSAGE(rc == 0, cmd);
    };
    auto run_pipeline = [&](const std::string& tag) {
        // run from inside the tag directory so both pipelines see identical
        // relative paths (the config echo records the data location)
        std::string base = (root / tag).string();
        fs::create_directories(base);
        std::string in = "cd " + base + " && " + cli;
        shell(in + " gen-data --out data --domains 3 --n-per-domain 12 --seed 5");
        shell(in + " train --data data --run-dir run"
              " --hidden-size 16 --num-layers 1 --num-heads 2 --ffn-size 32"
              " --max-seq-len 64 --epochs 1 --batch-size 8 --lr 1e-3"
              " --tasks qa,sbj --sampler oversampling --seed 3");
        shell(in + " eval --run-dir run --split test --group-by domain");
        shell(in + " analyze --run-dir run --split dev --perplexity 2 --tsne-iters 40 --seed 1");
    };
    run_pipeline("a");
    run_pipeline("b");

    std::vector<std::string> artifacts{
        "data/train.jsonl", "data/dev.jsonl", "data/test.jsonl",
        "data/split_manifest.json", "run/config.json", "run/best.bin",
        "run/best.manifest.json", "run/metrics.tsv",
        "run/eval/metrics_test.json", "run/eval/by_domain_test.csv",
        "run/analysis/report.json", "run/analysis/cosines_layer1.csv",
        "run/analysis/projection_layer1.csv"};
    bool ok = true;
    for (const auto& rel : artifacts)
        ok = ok && read_bytes((root / "a" / rel).string()) ==
                       read_bytes((root / "b" / rel).string());
    report(12,
           "gen-data/train/eval/analyze artifacts byte-identical across repeated "
           "runs (" + std::to_string(artifacts.size()) + " files)",
           ok);
    fs::remove_all(root);
}
