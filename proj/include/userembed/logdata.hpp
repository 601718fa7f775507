#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "userembed/common.hpp"
#include "userembed/corpus.hpp"

namespace userembed {

inline constexpr double kDefaultSessionGap = 1800.0;
inline constexpr double kDefaultSatDwell = 30.0;
inline constexpr std::size_t kDefaultResultCount = 10;

struct Click {
    std::string doc_id;
    double dwell_seconds = 0.0;
    std::size_t position = 0;  ///< 1-based
};

struct LogEntry {
    std::string user_id;
    std::int64_t timestamp = 0;
    std::string query_text;
    std::vector<std::string> results;
    std::vector<Click> clicks;

    EntryKey key() const { return {user_id, timestamp}; }
};

struct Session {
    std::string user_id;
    std::vector<LogEntry> entries;
};

struct LabeledEntry {
    LogEntry entry;
    std::vector<bool> relevance;  ///< parallel to entry.results

    std::size_t positives() const {
        return static_cast<std::size_t>(std::count(relevance.begin(), relevance.end(), true));
    }
    std::vector<std::string> relevant_docs() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < relevance.size(); ++i)
            if (relevance[i]) out.push_back(entry.results[i]);
        return out;
    }
};

/// Surviving labeled entries of one session. `final_kept` records whether the
/// session's last entry survived filtering; only then is it held out.
struct LabeledSession {
    std::string user_id;
    std::vector<LabeledEntry> entries;
    bool final_kept = false;
};

struct DatasetSplit {
    std::vector<LabeledEntry> train;
    std::vector<LabeledEntry> validation;
    std::vector<LabeledEntry> test;
};

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const LogEntry& e) {
    nlohmann::json clicks = nlohmann::json::array();
    for (const auto& c : e.clicks) {
        clicks.push_back({{"doc_id", c.doc_id}, {"dwell_seconds", c.dwell_seconds}, {"position", c.position}});
    }
    return {{"user_id", e.user_id},
            {"timestamp", e.timestamp},
            {"query_text", e.query_text},
            {"results", e.results},
            {"clicks", clicks}};
}

/// Throws Error on schema or invariant violation. `expected_results` of 0
/// accepts any non-empty list length.
inline LogEntry log_entry_from_json(const nlohmann::json& j, std::size_t expected_results) {
    LogEntry e;
    try {
        e.user_id = j.at("user_id").get<std::string>();
        e.timestamp = j.at("timestamp").get<std::int64_t>();
        e.query_text = j.at("query_text").get<std::string>();
        e.results = j.at("results").get<std::vector<std::string>>();
        for (const auto& c : j.at("clicks")) {
            e.clicks.push_back({c.at("doc_id").get<std::string>(), c.at("dwell_seconds").get<double>(),
                                c.at("position").get<std::size_t>()});
        }
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ex.what());
    }
    if (e.results.empty()) throw Error("empty result list");
    if (expected_results != 0 && e.results.size() != expected_results) {
        throw Error("expected " + std::to_string(expected_results) + " results, got " +
                    std::to_string(e.results.size()));
    }
    std::unordered_set<std::string> seen;
    for (const auto& r : e.results) {
        if (!seen.insert(r).second) throw Error("duplicate result '" + r + "'");
    }
    for (const auto& c : e.clicks) {
        if (!seen.contains(c.doc_id)) throw Error("click doc_id '" + c.doc_id + "' not in results");
        if (c.dwell_seconds < 0) throw Error("negative dwell for '" + c.doc_id + "'");
        if (c.position < 1 || c.position > e.results.size()) {
            throw Error("click position " + std::to_string(c.position) + " out of range");
        }
    }
    return e;
}

inline bool key_order(const LogEntry& a, const LogEntry& b) {
    return std::tie(a.user_id, a.timestamp) < std::tie(b.user_id, b.timestamp);
}

/// Reads a line-delimited query log and returns it sorted by (user, time).
inline std::vector<LogEntry> load_log(const std::filesystem::path& path,
                                      std::size_t expected_results = kDefaultResultCount) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open log file " + path.string());
    std::vector<LogEntry> entries;
    std::vector<std::size_t> lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            entries.push_back(log_entry_from_json(nlohmann::json::parse(line), expected_results));
            lines.push_back(lineno);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return key_order(entries[a], entries[b]); });
    std::vector<LogEntry> sorted;
    sorted.reserve(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& e = entries[order[i]];
        if (!sorted.empty() && sorted.back().key() == e.key()) {
            throw ParseError(path.string() + ":" + std::to_string(lines[order[i]]) + ": duplicate entry " +
                             e.key().str());
        }
        sorted.push_back(e);
    }
    return sorted;
}

inline void write_log(const std::filesystem::path& path, const std::vector<LogEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

inline nlohmann::json to_json(const LabeledEntry& e) {
    auto j = to_json(e.entry);
    std::vector<int> rel(e.relevance.begin(), e.relevance.end());
    j["relevance"] = rel;
    return j;
}

inline void write_labeled(const std::filesystem::path& path, const std::vector<LabeledEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

inline std::vector<LabeledEntry> load_labeled(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<LabeledEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            LabeledEntry le{log_entry_from_json(j, 0), {}};
            for (int r : j.at("relevance").get<std::vector<int>>()) le.relevance.push_back(r != 0);
            if (le.relevance.size() != le.entry.results.size()) throw Error("relevance length mismatch");
            out.push_back(std::move(le));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline stages

/// Splits each user's entries wherever consecutive timestamps differ by at
/// least `gap_seconds`.
inline std::vector<Session> segment_sessions(const std::vector<LogEntry>& entries,
                                             double gap_seconds = kDefaultSessionGap) {
    if (!(gap_seconds > 0)) throw Error("session gap must be positive");
    std::vector<Session> sessions;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (i > 0 && key_order(e, entries[i - 1])) {
            throw Error("entries not sorted by (user_id, timestamp) at index " + std::to_string(i));
        }
        const bool new_session = sessions.empty() || sessions.back().user_id != e.user_id ||
                                 static_cast<double>(e.timestamp - sessions.back().entries.back().timestamp) >=
                                     gap_seconds;
        if (new_session) sessions.push_back({e.user_id, {}});
        sessions.back().entries.push_back(e);
    }
    return sessions;
}

/// SAT labeling: a result is relevant when clicked with dwell at least
/// `dwell_threshold`, or when it received the session's final click.
inline std::vector<LabeledEntry> label_sat(const Session& session, double dwell_threshold = kDefaultSatDwell) {
    if (!(dwell_threshold > 0)) throw Error("dwell threshold must be positive");
    const LogEntry* last_entry = nullptr;
    for (const auto& e : session.entries)
        if (!e.clicks.empty()) last_entry = &e;

    std::vector<LabeledEntry> out;
    out.reserve(session.entries.size());
    for (const auto& e : session.entries) {
        LabeledEntry le{e, std::vector<bool>(e.results.size(), false)};
        for (std::size_t c = 0; c < e.clicks.size(); ++c) {
            const auto& click = e.clicks[c];
            const bool last_click = (&e == last_entry) && c + 1 == e.clicks.size();
            if (click.dwell_seconds >= dwell_threshold || last_click) {
                const auto pos = std::find(e.results.begin(), e.results.end(), click.doc_id) - e.results.begin();
                le.relevance[static_cast<std::size_t>(pos)] = true;
            }
        }
        out.push_back(std::move(le));
    }
    return out;
}

inline std::string normalize_query(std::string_view q) {
    const auto b = q.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = q.find_last_not_of(" \t\r\n");
    std::string out(q.substr(b, e - b + 1));
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

/// Drops entries without a relevant result and entries whose query is a
/// blocklisted navigational term (case-insensitive exact match).
inline std::vector<LabeledEntry> filter_entries(const std::vector<LabeledEntry>& labeled,
                                                const std::set<std::string>& domain_blocklist) {
    std::set<std::string> blocked;
    for (const auto& b : domain_blocklist) blocked.insert(normalize_query(b));
    std::vector<LabeledEntry> out;
    for (const auto& le : labeled) {
        if (le.positives() == 0) continue;
        if (blocked.contains(normalize_query(le.entry.query_text))) continue;
        out.push_back(le);
    }
    return out;
}

inline std::set<std::string> default_domain_blocklist() { return {"facebook", "youtube"}; }

/// Holds out each session's final entry, to test or validation with equal
/// probability; everything else trains.
inline DatasetSplit split_dataset(const std::vector<LabeledSession>& sessions, std::uint64_t seed) {
    DatasetSplit split;
    Rng rng(seed);
    for (const auto& s : sessions) {
        if (s.entries.empty()) continue;
        const std::size_t train_count = s.final_kept ? s.entries.size() - 1 : s.entries.size();
        for (std::size_t i = 0; i < train_count; ++i) split.train.push_back(s.entries[i]);
        if (s.final_kept) {
            (bernoulli(rng, 0.5) ? split.test : split.validation).push_back(s.entries.back());
        }
    }
    return split;
}

/// Labels and filters every session; the result feeds split_dataset.
inline std::vector<LabeledSession> label_and_filter(const std::vector<Session>& sessions, double dwell_threshold,
                                                    const std::set<std::string>& blocklist) {
    std::vector<LabeledSession> out;
    for (const auto& s : sessions) {
        auto kept = filter_entries(label_sat(s, dwell_threshold), blocklist);
        if (kept.empty()) continue;
        const bool final_kept = kept.back().entry.timestamp == s.entries.back().timestamp;
        out.push_back({s.user_id, std::move(kept), final_kept});
    }
    return out;
}

/// Dataset statistics after preprocessing, one column per count.
struct DatasetStats {
    std::size_t users = 0;
    std::size_t distinct_queries = 0;
    std::size_t sat_clicks = 0;
    std::size_t sessions = 0;
    std::size_t distinct_documents = 0;

    std::string header() const { return "#users\t#distinct queries\t#SAT clicks\t#sessions\t#distinct documents"; }
    std::string row() const {
        return std::to_string(users) + "\t" + std::to_string(distinct_queries) + "\t" + std::to_string(sat_clicks) +
               "\t" + std::to_string(sessions) + "\t" + std::to_string(distinct_documents);
    }
};

inline DatasetStats compute_stats(const std::vector<LabeledSession>& sessions) {
    std::set<std::string> users, queries, docs;
    DatasetStats st;
    for (const auto& s : sessions) {
        users.insert(s.user_id);
        ++st.sessions;
        for (const auto& le : s.entries) {
            queries.insert(normalize_query(le.entry.query_text));
            st.sat_clicks += le.positives();
            docs.insert(le.entry.results.begin(), le.entry.results.end());
        }
    }
    st.users = users.size();
    st.distinct_queries = queries.size();
    st.distinct_documents = docs.size();
    return st;
}

}  // namespace userembed
