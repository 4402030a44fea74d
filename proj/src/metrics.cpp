#include "qalab/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "qalab/data.hpp"

namespace qalab {

std::string normalize_answer(const std::string& text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            pending_space = !out.empty();
        } else if (std::ispunct(u)) {
            // punctuation is dropped entirely
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    return out;
}

namespace {
std::vector<std::string> normalized_tokens(const std::string& text) {
    std::vector<std::string> toks;
    std::istringstream in(normalize_answer(text));
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}
}  // namespace

int exact_match(const std::string& pred_text, const std::string& gold_text) {
    return normalize_answer(pred_text) == normalize_answer(gold_text) ? 1 : 0;
}

double span_f1(const std::string& pred_text, const std::string& gold_text) {
    auto pred = normalized_tokens(pred_text);
    auto gold = normalized_tokens(gold_text);
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::map<std::string, int> gold_counts;
    for (const auto& t : gold) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : pred) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / pred.size();
    double recall = static_cast<double>(overlap) / gold.size();
    return 2.0 * precision * recall / (precision + recall);
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int k) {
    if (preds.size() != golds.size() || preds.empty())
        throw std::invalid_argument("macro_f1: need equal-length non-empty inputs");
    std::vector<long long> tp(k, 0), fp(k, 0), fn(k, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        int p = preds[i], g = golds[i];
        if (p < 0 || p >= k || g < 0 || g >= k)
            throw std::out_of_range("macro_f1: label out of range");
        if (p == g)
            ++tp[p];
        else {
            ++fp[p];
            ++fn[g];
        }
    }
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    }
    return sum / k;
}

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
}

std::vector<double> ConfusionMatrix::normalized() const {
    std::vector<double> out(counts.size(), 0.0);
    for (int g = 0; g < k; ++g) {
        long long row_sum = 0;
        for (int p = 0; p < k; ++p) row_sum += at(g, p);
        if (row_sum == 0) continue;
        for (int p = 0; p < k; ++p)
            out[g * k + p] = static_cast<double>(at(g, p)) / row_sum;
    }
    return out;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& golds,
                          int k, std::vector<std::string> class_names) {
    if (preds.size() != golds.size())
        throw std::invalid_argument("confusion: length mismatch");
    ConfusionMatrix m;
    m.k = k;
    m.counts.assign(static_cast<std::size_t>(k) * k, 0);
    m.class_names = std::move(class_names);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || preds[i] >= k || golds[i] < 0 || golds[i] >= k)
            throw std::out_of_range("confusion: label out of range");
        ++m.counts[golds[i] * k + preds[i]];
    }
    return m;
}

std::vector<GroupRow> grouped_report(const std::vector<ScoredExample>& examples,
                                     GroupKey key) {
    std::map<std::string, std::vector<const ScoredExample*>> groups;
    for (const auto& ex : examples) {
        std::string g;
        if (key == GroupKey::domain) {
            g = ex.group_domain;
        } else {
            auto toks = tokenize(ex.question);
            g = toks.empty() ? "(empty)" : toks.front();
        }
        groups[g].push_back(&ex);
    }
    std::vector<GroupRow> rows;
    for (const auto& [name, members] : groups) {
        GroupRow r;
        r.group = name;
        r.size = static_cast<int>(members.size());
        double em = 0.0, f1 = 0.0;
        for (const auto* m : members) {
            em += m->em;
            f1 += m->f1;
        }
        r.em = 100.0 * em / r.size;
        r.f1 = 100.0 * f1 / r.size;
        rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const GroupRow& a, const GroupRow& b) { return a.em > b.em; });
    return rows;
}

std::string format_group_table(const std::vector<GroupRow>& rows) {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof(line), "%-16s %8s %8s %8s\n", "group", "n", "em", "f1");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-16s %8d %8.2f %8.2f\n", r.group.c_str(),
                      r.size, r.em, r.f1);
        out << line;
    }
    return out.str();
}

std::string group_table_csv(const std::vector<GroupRow>& rows) {
    std::ostringstream out;
    out << "group,n,em,f1\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%d,%.2f,%.2f\n", r.group.c_str(), r.size,
                      r.em, r.f1);
        out << line;
    }
    return out.str();
}

}  // namespace qalab
