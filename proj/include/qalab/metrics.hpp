#pragma once

// Span-selection QA metrics (exact match, token-bag F1) and classification
// metrics (macro F1, confusion matrices, grouped report tables).

#include <string>
#include <vector>

namespace qalab {

// lowercase, strip punctuation, collapse whitespace
std::string normalize_answer(const std::string& text);

// 1 iff normalized answers match exactly; two empty strings match
int exact_match(const std::string& pred_text, const std::string& gold_text);

// bag-of-tokens harmonic mean; both empty -> 1, exactly one empty -> 0
double span_f1(const std::string& pred_text, const std::string& gold_text);

// unweighted mean of per-class F1 over all k classes
double macro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int k);

struct ConfusionMatrix {
    int k{0};
    std::vector<long long> counts;  // counts[gold * k + pred]
    std::vector<std::string> class_names;

    long long at(int gold, int pred) const { return counts[gold * k + pred]; }
    long long total() const;
    // rows divided by row sums; empty rows stay zero
    std::vector<double> normalized() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& golds, int k,
                          std::vector<std::string> class_names = {});

struct GroupRow {
    std::string group;
    int size{0};
    double em{0.0};  // percent
    double f1{0.0};  // percent
};

struct ScoredExample {
    std::string group_domain;
    std::string question;  // interrogative = first token, lowercased
    int em{0};
    double f1{0.0};
};

enum class GroupKey { domain, interrogative };

// per-group EM/F1 percentages, sorted by EM descending
std::vector<GroupRow> grouped_report(const std::vector<ScoredExample>& examples,
                                     GroupKey key);

std::string format_group_table(const std::vector<GroupRow>& rows);
std::string group_table_csv(const std::vector<GroupRow>& rows);

}  // namespace qalab
