#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "userembed/logdata.hpp"
#include "userembed/rerank.hpp"

namespace userembed {

/// Relevant documents per entry.
using RelevanceLabels = std::map<EntryKey, std::set<std::string>>;

inline RelevanceLabels labels_of(const std::vector<LabeledEntry>& entries) {
    RelevanceLabels out;
    for (const auto& le : entries) {
        const auto docs = le.relevant_docs();
        out[le.entry.key()].insert(docs.begin(), docs.end());
    }
    return out;
}

/// 1 / rank of the highest-ranked relevant document.
inline double reciprocal_rank(const Ranking& ranking, const std::set<std::string>& relevant) {
    if (relevant.empty()) throw Error("reciprocal_rank: no relevant document for " + ranking.key.str());
    for (std::size_t i = 0; i < ranking.doc_ids.size(); ++i) {
        if (relevant.contains(ranking.doc_ids[i])) return 1.0 / static_cast<double>(i + 1);
    }
    throw Error("reciprocal_rank: no relevant document ranked for " + ranking.key.str());
}

struct MethodMetrics {
    double mrr = 0.0;
    double p_at_1 = 0.0;
    std::size_t n_queries = 0;
    std::vector<double> reciprocal_ranks;  ///< ordered like EvalReport::keys
};

struct EvalReport {
    std::vector<std::string> methods;  ///< presentation order
    std::map<std::string, MethodMetrics> metrics;
    std::vector<EntryKey> keys;

    const MethodMetrics& at(const std::string& method) const { return metrics.at(method); }
};

/// Relative change of `value` over `base`, in percent.
inline double relative_improvement(double base, double value) {
    if (base == 0.0) return 0.0;
    return (value - base) / base * 100.0;
}

/// "+17.3%" style, one decimal, rounded half away from zero.
inline std::string format_improvement(double percent) {
    double r = std::round(percent * 10.0) / 10.0;
    if (r == 0.0) r = 0.0;  // drop negative zero
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", r);
    return buf;
}

/// MRR and P@1 per method over a common entry set. Sums run over entries in
/// key order so results do not depend on input order.
inline EvalReport evaluate(const std::vector<std::pair<std::string, std::vector<Ranking>>>& methods,
                           const RelevanceLabels& labels) {
    EvalReport report;
    std::set<EntryKey> reference;
    bool first = true;
    for (const auto& [name, rankings] : methods) {
        std::map<EntryKey, const Ranking*> by_key;
        for (const auto& r : rankings) {
            if (!by_key.emplace(r.key, &r).second) throw Error("evaluate: duplicate ranking for " + r.key.str());
        }
        std::set<EntryKey> keys;
        for (const auto& [k, r] : by_key) keys.insert(k);
        if (first) {
            reference = keys;
            report.keys.assign(keys.begin(), keys.end());
            first = false;
        } else if (keys != reference) {
            throw Error("evaluate: method '" + name + "' covers a different entry set");
        }
        if (report.metrics.contains(name)) throw Error("evaluate: duplicate method '" + name + "'");

        MethodMetrics m;
        double rr_sum = 0.0;
        double hits = 0.0;
        for (const auto& [key, r] : by_key) {
            auto lit = labels.find(key);
            if (lit == labels.end()) throw Error("evaluate: no labels for " + key.str());
            const double rr = reciprocal_rank(*r, lit->second);
            m.reciprocal_ranks.push_back(rr);
            rr_sum += rr;
            if (rr == 1.0) hits += 1.0;
        }
        m.n_queries = by_key.size();
        if (m.n_queries > 0) {
            m.mrr = rr_sum / static_cast<double>(m.n_queries);
            m.p_at_1 = hits / static_cast<double>(m.n_queries);
        }
        report.methods.push_back(name);
        report.metrics.emplace(name, std::move(m));
    }
    return report;
}

inline constexpr const char* kBaselineMethod = "SE";

/// Plain-text comparison table; improvements are relative to SE when present.
inline std::string render_table(const EvalReport& report) {
    const bool has_base = report.metrics.contains(kBaselineMethod);
    auto cell = [&](const std::string& method, double MethodMetrics::*field) {
        const double v = report.at(method).*field;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        std::string s = buf;
        if (has_base) s += " (" + format_improvement(relative_improvement(report.at(kBaselineMethod).*field, v)) + ")";
        return s;
    };
    std::vector<std::vector<std::string>> rows{{"Metric"}, {"MRR"}, {"P@1"}};
    for (const auto& m : report.methods) {
        rows[0].push_back(m);
        rows[1].push_back(cell(m, &MethodMetrics::mrr));
        rows[2].push_back(cell(m, &MethodMetrics::p_at_1));
    }
    std::vector<std::size_t> width(rows[0].size(), 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::ostringstream out;
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c > 0) out << " | ";
            out << r[c] << std::string(width[c] - r[c].size(), ' ');
        }
        out << '\n';
    }
    out << "queries: " << report.keys.size() << '\n';
    return out.str();
}

inline nlohmann::json metrics_json(const EvalReport& report, bool per_query) {
    const bool has_base = report.metrics.contains(kBaselineMethod);
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& name : report.methods) {
        const auto& m = report.at(name);
        nlohmann::json j = {{"method", name}, {"mrr", m.mrr}, {"p_at_1", m.p_at_1}, {"n_queries", m.n_queries}};
        if (has_base) {
            const auto& b = report.at(kBaselineMethod);
            j["mrr_improvement"] = format_improvement(relative_improvement(b.mrr, m.mrr));
            j["p_at_1_improvement"] = format_improvement(relative_improvement(b.p_at_1, m.p_at_1));
        }
        if (per_query) j["reciprocal_ranks"] = m.reciprocal_ranks;
        methods.push_back(std::move(j));
    }
    nlohmann::json out = {{"methods", methods}};
    if (per_query) {
        nlohmann::json keys = nlohmann::json::array();
        for (const auto& k : report.keys) keys.push_back({{"user_id", k.user_id}, {"timestamp", k.timestamp}});
        out["entries"] = keys;
    }
    return out;
}

}  // namespace userembed
