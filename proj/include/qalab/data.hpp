#pragma once

// Dataset schema, whitespace tokenizer, synthetic multi-domain QA corpus
// generation, and sequence encoding for the model.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qalab {

struct QAExample {
    std::string id;
    std::string question;
    std::string context;
    std::string answer;              // empty when unanswerable
    int answer_char_start{-1};       // -1 when unanswerable
    bool is_answerable{false};
    int subj_question{5};            // Likert 1-5, lower = more subjective
    int subj_answer{5};
    std::string domain;
    std::string dataset_source;      // "subj-like" or "squad-like"

    // throws std::runtime_error naming the id on invariant violations
    void validate() const;
};

// subjective iff the Likert score is strictly below 3
inline bool likert_subjective(int score) { return score < 3; }

// lowercase, whitespace split, leading/trailing punctuation detached;
// internal apostrophes kept
std::vector<std::string> tokenize(const std::string& text);

struct TokenSpan {
    std::string token;
    int char_start{0};
    int char_end{0};  // exclusive
};
std::vector<TokenSpan> tokenize_with_offsets(const std::string& text);

class Vocab {
public:
    static constexpr int kPad = 0, kCls = 1, kSep = 2, kUnk = 3;

    static Vocab build(const std::vector<QAExample>& examples);
    int id(const std::string& token) const;  // kUnk for unknown tokens
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> ids_;
};

enum class InputMode { question_context, question_answer };

struct EncodedExample {
    std::vector<int> token_ids;   // [CLS] q [SEP] x [SEP]
    std::vector<bool> mask;       // all true (no padding inside one example)
    int gold_start{0};            // token index; (0, 0) = unanswerable
    int gold_end{0};
    bool gold_truncated{false};   // answer span lost to context truncation
    int question_token_count{0};  // tokens between [CLS] and first [SEP]
};

EncodedExample encode_example(const QAExample& ex, InputMode mode,
                              const Vocab& vocab, int max_len);

// decodes a predicted token span of an encoded (q,c) sequence back to text
std::string span_to_text(const QAExample& ex, const EncodedExample& enc,
                         int start, int end);

// ---- synthetic corpus ----

struct SyntheticConfig {
    std::vector<std::string> domains{"books",       "electronics", "grocery",
                                     "movies",      "restaurants", "tripadvisor"};
    int n_per_domain{100};
    double answerable_rate{0.44};
    double subjective_rate{0.827};
    std::string dataset_source{"subj-like"};
    std::uint64_t seed{0};
};

// squad-like preset: single "wikipedia" domain, fully objective
SyntheticConfig squad_like_config(int n, std::uint64_t seed);

std::vector<QAExample> generate_synthetic(const SyntheticConfig& config);

// ---- persistence ----

std::vector<QAExample> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<QAExample>& examples);

struct SplitSet {
    std::vector<QAExample> train, dev, test;
};
// shuffled split with pairwise-disjoint ids; fractions must sum to 1
SplitSet split_dataset(const std::vector<QAExample>& examples, double train_frac,
                       double dev_frac, std::uint64_t seed);
void save_split_manifest(const std::string& path, const SplitSet& split);

// sorted distinct domain names; appends "wikipedia" only via squad-like data
std::vector<std::string> collect_domains(const std::vector<QAExample>& examples);
int domain_index(const std::vector<std::string>& domains, const std::string& name);

}  // namespace qalab
