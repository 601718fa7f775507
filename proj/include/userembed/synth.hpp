#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "userembed/common.hpp"
#include "userembed/corpus.hpp"
#include "userembed/logdata.hpp"

namespace userembed {

/// Synthetic query-log generator settings.
///
/// Every document has a primary topic (what a query matches lexically) and a
/// secondary "facet" topic. Each user issues queries on topics drawn from a
/// sparse interest distribution and, per query topic, prefers documents whose
/// facet is in a small user-specific set. The engine returns documents of the
/// query's topic in random order; the user SAT-clicks a preferred one.
struct SynthConfig {
    int n_users = 20;
    int n_topics_true = 8;
    int vocab_size = 2000;
    int n_docs = 2000;
    int n_sessions_per_user = 15;
    int entries_per_session = 3;
    int n_results = 10;
    /// Higher values concentrate each user's interest on fewer topics.
    double user_interest_concentration = 2.0;
    double click_noise = 0.1;
    double repeat_click_rate = 0.1;
    std::uint64_t seed = 1;

    int preferred_facets = 2;       ///< preferred facet topics per (user, query topic)
    int on_interest_per_list = 3;   ///< at most this many preferred documents per result list
    int doc_length = 80;            ///< mean tokens per document
    double short_click_rate = 0.3;  ///< extra non-SAT click per entry
    double abandon_rate = 0.05;     ///< entries with only a non-SAT click

    /// Throws naming the first invalid field.
    void validate() const {
        auto positive = [](const char* name, long v) {
            if (v < 1) throw Error(std::string("synth config: ") + name + " must be at least 1");
        };
        auto probability = [](const char* name, double p) {
            if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string("synth config: ") + name + " must lie in [0, 1]");
        };
        positive("n_users", n_users);
        positive("n_topics_true", n_topics_true);
        positive("vocab_size", vocab_size);
        positive("n_docs", n_docs);
        positive("n_sessions_per_user", n_sessions_per_user);
        positive("entries_per_session", entries_per_session);
        positive("n_results", n_results);
        positive("preferred_facets", preferred_facets);
        positive("on_interest_per_list", on_interest_per_list);
        positive("doc_length", doc_length);
        if (!(user_interest_concentration > 0)) {
            throw Error("synth config: user_interest_concentration must be positive");
        }
        probability("click_noise", click_noise);
        probability("repeat_click_rate", repeat_click_rate);
        probability("short_click_rate", short_click_rate);
        probability("abandon_rate", abandon_rate);
        if (n_topics_true < 2) throw Error("synth config: n_topics_true must be at least 2");
        if (preferred_facets > n_topics_true - 2) {
            throw Error("synth config: preferred_facets must leave at least one non-preferred facet");
        }
        if (on_interest_per_list >= n_results) {
            throw Error("synth config: on_interest_per_list must be below n_results");
        }
        if (vocab_size < 2 * n_topics_true) throw Error("synth config: vocab_size too small for n_topics_true");
    }
};

struct UserTruth {
    std::vector<double> interest;                 ///< over query topics
    std::map<int, std::set<int>> preferred_facets;  ///< query topic -> facets
};

struct GroundTruth {
    std::map<std::string, UserTruth> users;
    std::map<std::string, std::pair<int, int>> doc_topics;  ///< doc_id -> (primary, facet)
    std::map<EntryKey, int> query_topic;

    bool on_interest(const EntryKey& entry, const std::string& doc_id) const {
        const auto& [primary, facet] = doc_topics.at(doc_id);
        const int t = query_topic.at(entry);
        return primary == t && users.at(entry.user_id).preferred_facets.at(t).contains(facet);
    }
};

struct SynthOutput {
    std::vector<std::pair<std::string, std::string>> corpus;  ///< (doc_id, text)
    std::vector<LogEntry> log;
    GroundTruth truth;
};

namespace detail {

inline double standard_normal(Rng& rng) {
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Marsaglia-Tsang, with the U^(1/a) boost for shape < 1.
inline double gamma_sample(Rng& rng, double shape) {
    if (shape < 1.0) return gamma_sample(rng, shape + 1.0) * std::pow(1.0 - uniform01(rng), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = 1.0 - uniform01(rng);
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

inline std::vector<double> dirichlet(Rng& rng, int n, double concentration) {
    std::vector<double> out(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : out) total += (x = gamma_sample(rng, concentration));
    if (total <= 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        out[uniform_index(rng, out.size())] = 1.0;
        return out;
    }
    for (auto& x : out) x /= total;
    return out;
}

inline std::size_t categorical(Rng& rng, const std::vector<double>& p) {
    double u = uniform01(rng);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (u < p[i]) return i;
        u -= p[i];
    }
    return p.size() - 1;
}

inline std::string word_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%05d", i);
    return buf;
}

/// Draws `count` distinct items from `pool` that are not in `exclude`.
inline std::vector<std::string> draw_distinct(Rng& rng, const std::vector<std::string>& pool,
                                              const std::set<std::string>& exclude, std::size_t count) {
    std::vector<std::string> avail;
    for (const auto& d : pool)
        if (!exclude.contains(d)) avail.push_back(d);
    if (avail.size() < count) return {};
    for (std::size_t i = 0; i < count; ++i) std::swap(avail[i], avail[i + uniform_index(rng, avail.size() - i)]);
    avail.resize(count);
    return avail;
}

}  // namespace detail

inline SynthOutput generate(const SynthConfig& cfg) {
    cfg.validate();
    const int T = cfg.n_topics_true;
    Rng rng(cfg.seed);
    SynthOutput out;

    // Topic-word distributions: each topic owns a contiguous vocabulary block
    // with Zipf-like weights; 15% of tokens come from the whole vocabulary.
    const int block = cfg.vocab_size / T;
    std::vector<double> zipf(static_cast<std::size_t>(block));
    double zsum = 0.0;
    for (int i = 0; i < block; ++i) zsum += (zipf[static_cast<std::size_t>(i)] = 1.0 / (i + 1.0));
    for (auto& z : zipf) z /= zsum;
    auto draw_word = [&](int topic) {
        if (bernoulli(rng, 0.15)) return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.vocab_size)));
        return topic * block + static_cast<int>(detail::categorical(rng, zipf));
    };

    // Documents; facet assignment cycles so every (primary, facet) pair is populated evenly.
    std::map<std::pair<int, int>, std::vector<std::string>> by_pair;
    for (int i = 0; i < cfg.n_docs; ++i) {
        const int primary = i % T;
        const int facet = (primary + 1 + (i / T) % (T - 1)) % T;
        char id[16];
        std::snprintf(id, sizeof id, "d%05d", i);
        std::vector<double> theta(static_cast<std::size_t>(T), 0.0);
        const double wp = uniform(rng, 0.5, 0.65);
        const double ws = uniform(rng, 0.25, 0.4);
        theta[static_cast<std::size_t>(primary)] = wp;
        theta[static_cast<std::size_t>(facet)] = ws;
        const double rest = (1.0 - wp - ws) / (T - 2 > 0 ? T - 2 : 1);
        for (int z = 0; z < T; ++z)
            if (z != primary && z != facet) theta[static_cast<std::size_t>(z)] = rest;
        const int len = std::max(5, static_cast<int>(std::lround(cfg.doc_length * uniform(rng, 0.75, 1.25))));
        std::string text;
        for (int w = 0; w < len; ++w) {
            if (w > 0) text += ' ';
            text += detail::word_name(draw_word(static_cast<int>(detail::categorical(rng, theta))));
        }
        out.corpus.emplace_back(id, std::move(text));
        out.truth.doc_topics[id] = {primary, facet};
        by_pair[{primary, facet}].push_back(id);
    }

    std::int64_t clock = 1341100800;  // 2012-07-01T00:00:00Z
    for (int u = 0; u < cfg.n_users; ++u) {
        char uid[16];
        std::snprintf(uid, sizeof uid, "u%03d", u);
        UserTruth truth;
        truth.interest = detail::dirichlet(rng, T, 1.0 / cfg.user_interest_concentration);
        for (int t = 0; t < T; ++t) {
            std::vector<int> others;
            for (int s = 0; s < T; ++s)
                if (s != t) others.push_back(s);
            shuffle(others.begin(), others.end(), rng);
            truth.preferred_facets[t] = std::set<int>(others.begin(), others.begin() + cfg.preferred_facets);
        }

        std::set<std::string> clicked;
        std::vector<std::pair<std::string, int>> sat_history;  // (doc, query topic)
        std::int64_t now = clock + static_cast<std::int64_t>(uniform_index(rng, 86400));
        for (int s = 0; s < cfg.n_sessions_per_user; ++s) {
            now += 7200 + static_cast<std::int64_t>(uniform_index(rng, 172800 - 7200));
            for (int e = 0; e < cfg.entries_per_session; ++e) {
                if (e > 0) now += 20 + static_cast<std::int64_t>(uniform_index(rng, 580));
                const int t = static_cast<int>(detail::categorical(rng, truth.interest));
                const auto& facets = truth.preferred_facets.at(t);
                std::vector<std::string> on_pool, off_pool;
                for (int f = 0; f < T; ++f) {
                    if (f == t) continue;
                    const auto& docs = by_pair[{t, f}];
                    auto& pool = facets.contains(f) ? on_pool : off_pool;
                    pool.insert(pool.end(), docs.begin(), docs.end());
                }

                std::string repeat;
                if (bernoulli(rng, cfg.repeat_click_rate)) {
                    std::vector<std::string> candidates;
                    for (const auto& [d, qt] : sat_history)
                        if (qt == t) candidates.push_back(d);
                    if (!candidates.empty()) repeat = candidates[uniform_index(rng, candidates.size())];
                }

                const auto n_on = 1 + uniform_index(rng, static_cast<std::size_t>(cfg.on_interest_per_list));
                const auto n_fresh_on = repeat.empty() ? n_on : n_on - 1;
                auto on = detail::draw_distinct(rng, on_pool, clicked, n_fresh_on);
                auto off = detail::draw_distinct(rng, off_pool, clicked, static_cast<std::size_t>(cfg.n_results) - n_on);
                if (on.size() != n_fresh_on || off.size() + n_on != static_cast<std::size_t>(cfg.n_results)) {
                    throw Error(std::string("synth: not enough unclicked documents for user ") + uid + " on topic " +
                                std::to_string(t) + "; raise n_docs or lower the per-user entry count");
                }
                std::vector<std::string> results = on;
                if (!repeat.empty()) results.push_back(repeat);
                results.insert(results.end(), off.begin(), off.end());
                shuffle(results.begin(), results.end(), rng);

                LogEntry entry;
                entry.user_id = uid;
                entry.timestamp = now;
                entry.query_text = detail::word_name(t * block + static_cast<int>(detail::categorical(rng, zipf))) +
                                   " " +
                                   detail::word_name(t * block + static_cast<int>(detail::categorical(rng, zipf)));
                entry.results = results;
                auto position = [&](const std::string& d) {
                    return static_cast<std::size_t>(std::find(results.begin(), results.end(), d) - results.begin()) + 1;
                };
                auto random_result = [&] { return results[uniform_index(rng, results.size())]; };

                if (bernoulli(rng, cfg.abandon_rate)) {
                    const auto d = random_result();
                    entry.clicks.push_back({d, std::floor(uniform(rng, 1.0, 30.0)), position(d)});
                } else {
                    std::string target;
                    if (!repeat.empty()) {
                        target = repeat;
                    } else if (bernoulli(rng, 1.0 - cfg.click_noise)) {
                        target = on[uniform_index(rng, on.size())];
                    } else {
                        target = random_result();
                    }
                    if (bernoulli(rng, cfg.short_click_rate)) {
                        std::string d = random_result();
                        if (d != target) entry.clicks.push_back({d, std::floor(uniform(rng, 1.0, 30.0)), position(d)});
                    }
                    entry.clicks.push_back({target, std::floor(uniform(rng, 30.0, 301.0)), position(target)});
                    if (target != repeat && out.truth.doc_topics.at(target).first == t &&
                        facets.contains(out.truth.doc_topics.at(target).second)) {
                        sat_history.emplace_back(target, t);
                    }
                }
                for (const auto& c : entry.clicks) clicked.insert(c.doc_id);
                out.truth.query_topic[entry.key()] = t;
                out.log.push_back(std::move(entry));
            }
        }
        out.truth.users.emplace(uid, std::move(truth));
    }
    std::sort(out.log.begin(), out.log.end(), key_order);
    return out;
}

// ---------------------------------------------------------------------------
// Files

inline nlohmann::json to_json(const GroundTruth& g) {
    nlohmann::json users = nlohmann::json::object();
    for (const auto& [id, u] : g.users) {
        nlohmann::json facets = nlohmann::json::object();
        for (const auto& [t, fs] : u.preferred_facets) facets[std::to_string(t)] = std::vector<int>(fs.begin(), fs.end());
        users[id] = {{"interest", u.interest}, {"preferred_facets", facets}};
    }
    nlohmann::json docs = nlohmann::json::object();
    for (const auto& [id, pf] : g.doc_topics) docs[id] = {pf.first, pf.second};
    nlohmann::json queries = nlohmann::json::array();
    for (const auto& [k, t] : g.query_topic) queries.push_back({{"user_id", k.user_id}, {"timestamp", k.timestamp}, {"topic", t}});
    return {{"users", users}, {"documents", docs}, {"queries", queries}};
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
    GroundTruth g;
    for (const auto& [id, u] : j.at("users").items()) {
        UserTruth t;
        t.interest = u.at("interest").get<std::vector<double>>();
        for (const auto& [topic, fs] : u.at("preferred_facets").items()) {
            const auto v = fs.get<std::vector<int>>();
            t.preferred_facets[std::stoi(topic)] = std::set<int>(v.begin(), v.end());
        }
        g.users.emplace(id, std::move(t));
    }
    for (const auto& [id, pf] : j.at("documents").items()) g.doc_topics[id] = {pf.at(0).get<int>(), pf.at(1).get<int>()};
    for (const auto& q : j.at("queries")) {
        g.query_topic[{q.at("user_id").get<std::string>(), q.at("timestamp").get<std::int64_t>()}] = q.at("topic").get<int>();
    }
    return g;
}

/// Writes corpus.jsonl, log.jsonl and truth.json into `dir` (created if needed).
inline void write_synth(const SynthOutput& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_corpus(dir / "corpus.jsonl", s.corpus);
    write_log(dir / "log.jsonl", s.log);
    std::ofstream out(dir / "truth.json");
    if (!out) throw Error("cannot write " + (dir / "truth.json").string());
    out << to_json(s.truth).dump() << '\n';
}

}  // namespace userembed
