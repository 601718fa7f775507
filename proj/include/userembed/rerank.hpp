#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "userembed/embeddings.hpp"
#include "userembed/logdata.hpp"
#include "userembed/profile.hpp"

namespace userembed {

struct Ranking {
    EntryKey key;
    std::vector<std::string> doc_ids;
    std::optional<std::vector<double>> scores;  ///< parallel to doc_ids
};

/// Orders the entry's results by ascending implausibility; equal scores keep
/// the engine's order.
inline Ranking rerank_entry(const UserProfile& profile, const LogEntry& entry, const EmbeddingStore& store, Norm norm) {
    const auto& v_q = store.query(entry.key());
    std::vector<double> s(entry.results.size());
    for (std::size_t i = 0; i < entry.results.size(); ++i) {
        s[i] = score(profile, v_q, store.document(entry.results[i]), norm);
    }
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    Ranking r{entry.key(), {}, std::vector<double>{}};
    for (auto i : order) {
        r.doc_ids.push_back(entry.results[i]);
        r.scores->push_back(s[i]);
    }
    return r;
}

/// The engine's own ranking.
inline Ranking baseline_se(const LogEntry& entry) { return {entry.key(), entry.results, std::nullopt}; }

/// Stable partition: previously clicked results first.
inline Ranking baseline_ci(const LogEntry& entry, const std::set<std::string>& user_history) {
    Ranking r{entry.key(), entry.results, std::nullopt};
    std::stable_partition(r.doc_ids.begin(), r.doc_ids.end(),
                          [&](const std::string& d) { return user_history.contains(d); });
    return r;
}

/// Every click per user with the timestamp of its entry, for CI lookups.
class ClickHistory {
public:
    /// With `sat_only`, only clicks labeled SAT (session-aware) count.
    ClickHistory(const std::vector<LogEntry>& log, bool sat_only = false, double session_gap = kDefaultSessionGap,
                 double dwell_threshold = kDefaultSatDwell) {
        if (sat_only) {
            for (const auto& s : segment_sessions(log, session_gap))
                for (const auto& le : label_sat(s, dwell_threshold))
                    for (const auto& d : le.relevant_docs()) clicks_[le.entry.user_id].push_back({le.entry.timestamp, d});
        } else {
            for (const auto& e : log)
                for (const auto& c : e.clicks) clicks_[e.user_id].push_back({e.timestamp, c.doc_id});
        }
    }

    /// Documents clicked by `user` strictly before `timestamp`.
    std::set<std::string> before(const std::string& user, std::int64_t timestamp) const {
        std::set<std::string> out;
        auto it = clicks_.find(user);
        if (it == clicks_.end()) return out;
        for (const auto& [t, d] : it->second)
            if (t < timestamp) out.insert(d);
        return out;
    }

private:
    std::map<std::string, std::vector<std::pair<std::int64_t, std::string>>> clicks_;
};

// ---------------------------------------------------------------------------
// Output

inline void write_rankings(const std::filesystem::path& path, const std::vector<Ranking>& rankings) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : rankings) {
        nlohmann::json j = {{"user_id", r.key.user_id}, {"timestamp", r.key.timestamp}, {"doc_ids", r.doc_ids}};
        if (r.scores) j["scores"] = *r.scores;
        out << j.dump() << '\n';
    }
}

}  // namespace userembed
