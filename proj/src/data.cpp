#include "qalab/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace qalab {

void QAExample::validate() const {
    auto fail = [this](const std::string& msg) {
        throw std::runtime_error("example " + id + ": " + msg);
    };
    if (id.empty()) throw std::runtime_error("example with empty id");
    if (question.empty()) fail("empty question");
    if (context.empty()) fail("empty context");
    if (subj_question < 1 || subj_question > 5 || subj_answer < 1 || subj_answer > 5)
        fail("Likert scores must be in 1..5");
    if (domain.empty()) fail("empty domain");
    if (dataset_source != "subj-like" && dataset_source != "squad-like")
        fail("dataset_source must be subj-like or squad-like");
    if (is_answerable) {
        if (answer.empty()) fail("answerable example with empty answer");
        if (answer_char_start < 0 ||
            answer_char_start + answer.size() > context.size() ||
            context.compare(answer_char_start, answer.size(), answer) != 0)
            fail("answer text not found at stated offset");
    } else {
        if (!answer.empty() || answer_char_start != -1)
            fail("unanswerable example must have empty answer and offset -1");
    }
}

namespace {

bool is_detachable_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0 && c != '\'';
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

std::vector<TokenSpan> tokenize_with_offsets(const std::string& text) {
    std::vector<TokenSpan> out;
    int n = static_cast<int>(text.size());
    int i = 0;
    while (i < n) {
        if (std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        int j = i;
        while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        // peel leading punctuation
        int core_begin = i;
        while (core_begin < j && is_detachable_punct(text[core_begin])) {
            out.push_back({lower(text.substr(core_begin, 1)), core_begin, core_begin + 1});
            ++core_begin;
        }
        // find trailing punctuation run
        int core_end = j;
        while (core_end > core_begin && is_detachable_punct(text[core_end - 1]))
            --core_end;
        if (core_end > core_begin)
            out.push_back({lower(text.substr(core_begin, core_end - core_begin)),
                           core_begin, core_end});
        for (int p = core_end; p < j; ++p)
            out.push_back({lower(text.substr(p, 1)), p, p + 1});
        i = j;
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    for (auto& ts : tokenize_with_offsets(text)) out.push_back(std::move(ts.token));
    return out;
}

Vocab Vocab::build(const std::vector<QAExample>& examples) {
    Vocab v;
    v.tokens_ = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
    for (int i = 0; i < 4; ++i) v.ids_[v.tokens_[i]] = i;
    for (const auto& ex : examples) {
        for (const auto& text : {ex.question, ex.context, ex.answer}) {
            for (auto& tok : tokenize(text)) {
                if (!v.ids_.count(tok)) {
                    v.ids_[tok] = static_cast<int>(v.tokens_.size());
                    v.tokens_.push_back(tok);
                }
            }
        }
    }
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab id out of range");
    return tokens_[id];
}

EncodedExample encode_example(const QAExample& ex, InputMode mode,
                              const Vocab& vocab, int max_len) {
    ex.validate();
    auto q_tokens = tokenize(ex.question);
    const std::string& second_text =
        mode == InputMode::question_context ? ex.context : ex.answer;
    auto x_spans = tokenize_with_offsets(second_text);

    EncodedExample enc;
    enc.question_token_count = static_cast<int>(q_tokens.size());
    // layout: [CLS] q [SEP] x [SEP]; the question is never truncated
    int overhead = static_cast<int>(q_tokens.size()) + 3;
    if (overhead > max_len)
        throw std::runtime_error("example " + ex.id + ": question alone exceeds max_len");
    int x_budget = max_len - overhead;
    bool truncated = static_cast<int>(x_spans.size()) > x_budget;
    if (truncated) x_spans.resize(x_budget);

    enc.token_ids.push_back(Vocab::kCls);
    for (auto& t : q_tokens) enc.token_ids.push_back(vocab.id(t));
    enc.token_ids.push_back(Vocab::kSep);
    int x_base = static_cast<int>(enc.token_ids.size());
    for (auto& ts : x_spans) enc.token_ids.push_back(vocab.id(ts.token));
    enc.token_ids.push_back(Vocab::kSep);
    enc.mask.assign(enc.token_ids.size(), true);

    if (mode == InputMode::question_context && ex.is_answerable) {
        int a_begin = ex.answer_char_start;
        int a_end = a_begin + static_cast<int>(ex.answer.size());
        int first = -1, last = -1;
        for (int i = 0; i < static_cast<int>(x_spans.size()); ++i) {
            if (x_spans[i].char_end > a_begin && x_spans[i].char_start < a_end) {
                if (first < 0) first = i;
                last = i;
            }
        }
        if (first < 0) {
            // span lost to truncation; train as unanswerable but record it
            enc.gold_truncated = truncated;
            if (!truncated)
                throw std::runtime_error("example " + ex.id +
                                         ": gold span maps to no tokens");
        } else {
            enc.gold_start = x_base + first;
            enc.gold_end = x_base + last;
        }
    }
    return enc;
}

std::string span_to_text(const QAExample& ex, const EncodedExample& enc, int start,
                         int end) {
    if (start == 0 && end == 0) return "";
    auto ctx_spans = tokenize_with_offsets(ex.context);
    int x_base = enc.question_token_count + 2;
    int first = start - x_base, last = end - x_base;
    if (first < 0 || last < first || last >= static_cast<int>(ctx_spans.size()))
        return "";
    return ex.context.substr(ctx_spans[first].char_start,
                             ctx_spans[last].char_end - ctx_spans[first].char_start);
}

// ---- synthetic corpus ----

namespace {

struct DomainPool {
    std::vector<std::string> nouns;
    std::vector<std::string> adjectives;
};

const std::map<std::string, DomainPool>& domain_pools() {
    static const std::map<std::string, DomainPool> pools = {
        {"books",
         {{"plot", "ending", "author", "pacing", "characters", "writing", "prose",
           "chapter"},
          {"gripping", "dull", "moving", "predictable", "lyrical", "heavy", "witty"}}},
        {"electronics",
         {{"battery", "screen", "camera", "keyboard", "sound", "charger", "speaker",
           "firmware"},
          {"sharp", "sluggish", "crisp", "noisy", "reliable", "flimsy", "bright"}}},
        {"grocery",
         {{"coffee", "cheese", "bread", "sauce", "snacks", "tea", "cereal",
           "chocolate"},
          {"fresh", "stale", "rich", "bland", "salty", "sweet", "bitter"}}},
        {"movies",
         {{"acting", "script", "soundtrack", "direction", "cast", "cinematography",
           "dialogue", "finale"},
          {"stunning", "wooden", "tense", "cheesy", "haunting", "slow", "sharp"}}},
        {"restaurants",
         {{"service", "menu", "dessert", "ambience", "portions", "steak", "wine",
           "staff"},
          {"friendly", "slow", "delicious", "cramped", "cozy", "greasy", "generous"}}},
        {"tripadvisor",
         {{"room", "lobby", "breakfast", "location", "pool", "staff", "view",
           "bathroom"},
          {"spacious", "noisy", "spotless", "dated", "central", "cramped", "quiet"}}},
        {"wikipedia",
         {{"treaty", "river", "dynasty", "protocol", "compound", "orbit", "archive",
           "census"},
          {"historic", "northern", "ancient", "federal", "annual", "coastal",
           "industrial"}}},
    };
    return pools;
}

const std::vector<std::string>& adverbs() {
    static const std::vector<std::string> v = {"really", "surprisingly", "fairly",
                                               "incredibly", "somewhat", "remarkably"};
    return v;
}

// interrogative words roughly follow the skew seen in review questions,
// with "how" dominating
const std::vector<std::pair<std::string, double>>& interrogative_weights() {
    static const std::vector<std::pair<std::string, double>> w = {
        {"how", 0.45}, {"what", 0.20}, {"is", 0.12},
        {"where", 0.10}, {"does", 0.08}, {"do", 0.05}};
    return w;
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
}

std::string pick_interrogative(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng), acc = 0.0;
    for (const auto& [word, p] : interrogative_weights()) {
        acc += p;
        if (r < acc) return word;
    }
    return interrogative_weights().back().first;
}

std::string make_question(const std::string& word, const std::string& noun,
                          const std::string& adj) {
    if (word == "how") return "How was the " + noun + "?";
    if (word == "what") return "What did reviewers think of the " + noun + "?";
    if (word == "is") return "Is the " + noun + " " + adj + "?";
    if (word == "where") return "Where does the review mention the " + noun + "?";
    if (word == "does") return "Does the " + noun + " seem " + adj + "?";
    return "Do people like the " + noun + "?";
}

// exact-count boolean assignment, shuffled
std::vector<bool> planned_flags(int n, double rate, std::mt19937_64& rng) {
    int k = static_cast<int>(std::lround(rate * n));
    std::vector<bool> flags(n, false);
    std::fill(flags.begin(), flags.begin() + std::min(k, n), true);
    std::shuffle(flags.begin(), flags.end(), rng);
    return flags;
}

}  // namespace

SyntheticConfig squad_like_config(int n, std::uint64_t seed) {
    SyntheticConfig c;
    c.domains = {"wikipedia"};
    c.n_per_domain = n;
    c.answerable_rate = 0.5;
    c.subjective_rate = 0.0;
    c.dataset_source = "squad-like";
    c.seed = seed;
    return c;
}

std::vector<QAExample> generate_synthetic(const SyntheticConfig& config) {
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<int> likert_subj(1, 2);
    std::uniform_int_distribution<int> likert_obj(3, 5);
    std::vector<QAExample> out;
    for (const auto& domain : config.domains) {
        auto pool_it = domain_pools().find(domain);
        if (pool_it == domain_pools().end())
            throw std::invalid_argument("no vocabulary pool for domain: " + domain);
        const auto& pool = pool_it->second;
        auto answerable = planned_flags(config.n_per_domain, config.answerable_rate, rng);
        auto subjective = planned_flags(config.n_per_domain, config.subjective_rate, rng);
        for (int i = 0; i < config.n_per_domain; ++i) {
            QAExample ex;
            ex.id = config.dataset_source + "-" + domain + "-" + std::to_string(i);
            ex.domain = domain;
            ex.dataset_source = config.dataset_source;
            bool subj = subjective[i];
            ex.subj_question = subj ? likert_subj(rng) : likert_obj(rng);
            ex.subj_answer = subj ? likert_subj(rng) : likert_obj(rng);

            const std::string& noun = pick(pool.nouns, rng);
            const std::string& adj = pick(pool.adjectives, rng);
            std::string answer_phrase = pick(adverbs(), rng) + " " + adj;
            std::string other_noun = pick(pool.nouns, rng);
            const std::string& other_adj = pick(pool.adjectives, rng);

            std::string filler = "The " + other_noun + " seemed " + other_adj +
                                 " to most reviewers.";
            std::string key_sentence = "The " + noun + " was " + answer_phrase +
                                       " according to this review.";
            ex.context = filler + " " + key_sentence + " Overall opinions varied.";
            ex.question = make_question(pick_interrogative(rng), noun, adj);
            if (answerable[i]) {
                ex.is_answerable = true;
                ex.answer = answer_phrase;
                ex.answer_char_start =
                    static_cast<int>(ex.context.find(answer_phrase));
            } else {
                // ask about something the review does not answer
                ex.question = make_question(pick_interrogative(rng),
                                            pick(pool.nouns, rng), adj);
                ex.is_answerable = false;
            }
            ex.validate();
            out.push_back(std::move(ex));
        }
    }
    return out;
}

// ---- persistence ----

namespace {

nlohmann::json example_to_json(const QAExample& ex) {
    return {{"id", ex.id},
            {"question", ex.question},
            {"context", ex.context},
            {"answer", ex.answer},
            {"answer_char_start", ex.answer_char_start},
            {"is_answerable", ex.is_answerable},
            {"subj_question", ex.subj_question},
            {"subj_answer", ex.subj_answer},
            {"domain", ex.domain},
            {"dataset_source", ex.dataset_source}};
}

QAExample example_from_json(const nlohmann::json& j, int line) {
    static const char* required[] = {"id",          "question",     "context",
                                     "answer",      "answer_char_start",
                                     "is_answerable", "subj_question",
                                     "subj_answer", "domain",       "dataset_source"};
    for (const char* field : required)
        if (!j.contains(field))
            throw std::runtime_error("line " + std::to_string(line) +
                                     ": missing field \"" + field + "\"");
    QAExample ex;
    try {
        ex.id = j.at("id");
        ex.question = j.at("question");
        ex.context = j.at("context");
        ex.answer = j.at("answer");
        ex.answer_char_start = j.at("answer_char_start");
        ex.is_answerable = j.at("is_answerable");
        ex.subj_question = j.at("subj_question");
        ex.subj_answer = j.at("subj_answer");
        ex.domain = j.at("domain");
        ex.dataset_source = j.at("dataset_source");
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("line " + std::to_string(line) + ": " + e.what());
    }
    try {
        ex.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error("line " + std::to_string(line) + ": " + e.what());
    }
    return ex;
}

}  // namespace

std::vector<QAExample> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::vector<QAExample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                     ": malformed JSON: " + e.what());
        }
        out.push_back(example_from_json(j, lineno));
    }
    return out;
}

void save_jsonl(const std::string& path, const std::vector<QAExample>& examples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& ex : examples) out << example_to_json(ex).dump() << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

SplitSet split_dataset(const std::vector<QAExample>& examples, double train_frac,
                       double dev_frac, std::uint64_t seed) {
    if (train_frac < 0.0 || dev_frac < 0.0 || train_frac + dev_frac > 1.0)
        throw std::invalid_argument("split fractions out of range");
    std::vector<std::size_t> idx(examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n = static_cast<long long>(examples.size());
    long long n_train = std::llround(train_frac * n);
    long long n_dev = std::llround(dev_frac * n);
    SplitSet s;
    for (long long i = 0; i < n; ++i) {
        const auto& ex = examples[idx[i]];
        if (i < n_train)
            s.train.push_back(ex);
        else if (i < n_train + n_dev)
            s.dev.push_back(ex);
        else
            s.test.push_back(ex);
    }
    return s;
}

void save_split_manifest(const std::string& path, const SplitSet& split) {
    nlohmann::json j;
    for (auto [name, part] : {std::pair<const char*, const std::vector<QAExample>*>{
                                  "train", &split.train},
                              {"dev", &split.dev},
                              {"test", &split.test}}) {
        auto& arr = j[name] = nlohmann::json::array();
        for (const auto& ex : *part) arr.push_back(ex.id);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

std::vector<std::string> collect_domains(const std::vector<QAExample>& examples) {
    std::vector<std::string> names;
    for (const auto& ex : examples)
        if (std::find(names.begin(), names.end(), ex.domain) == names.end())
            names.push_back(ex.domain);
    std::sort(names.begin(), names.end());
    return names;
}

int domain_index(const std::vector<std::string>& domains, const std::string& name) {
    auto it = std::find(domains.begin(), domains.end(), name);
    if (it == domains.end())
        throw std::out_of_range("unknown domain: " + name);
    return static_cast<int>(it - domains.begin());
}

}  // namespace qalab
