#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "userembed/common.hpp"
#include "userembed/embeddings.hpp"
#include "userembed/lda.hpp"
#include "userembed/logdata.hpp"

namespace userembed {

enum class Norm { L1 = 1, L2 = 2 };

inline Norm norm_from_order(int order) {
    if (order == 1) return Norm::L1;
    if (order == 2) return Norm::L2;
    throw Error("norm order must be 1 or 2, got " + std::to_string(order));
}

/// Per-user personalization parameters: an embedding plus query-side and
/// document-side k x k projections.
struct UserProfile {
    std::string user_id;
    Eigen::VectorXd embedding;
    Eigen::MatrixXd query_projection;
    Eigen::MatrixXd doc_projection;

    /// Zero embedding, identity projections. Scores reduce to ||v_q - v_d||.
    static UserProfile neutral(std::string user_id, int k) {
        return {std::move(user_id), Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Identity(k, k),
                Eigen::MatrixXd::Identity(k, k)};
    }

    int dim() const { return static_cast<int>(embedding.size()); }
};

/// (query, user, document). Correct and corrupted triples share this type.
struct Triple {
    EntryKey query;
    std::string user_id;
    std::string doc_id;

    auto operator<=>(const Triple&) const = default;
    bool operator==(const Triple&) const = default;
};

struct TrainConfig {
    Norm norm = Norm::L1;
    double margin = 5.0;
    double learning_rate = 0.005;
    int epochs_per_phase = 200;
    int negatives_per_positive = 1;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

enum class Phase {
    EmbeddingOnly,  ///< projections frozen at identity
    Joint,
};

inline Eigen::VectorXd residual(const UserProfile& p, const Eigen::VectorXd& v_q, const Eigen::VectorXd& v_d) {
    return p.query_projection * v_q + p.embedding - p.doc_projection * v_d;
}

inline double vector_norm(const Eigen::VectorXd& r, Norm norm) {
    return norm == Norm::L1 ? r.lpNorm<1>() : r.norm();
}

/// Implausibility of d for u given q; lower is better.
inline double score(const UserProfile& p, const Eigen::VectorXd& v_q, const Eigen::VectorXd& v_d, Norm norm) {
    const auto k = p.embedding.size();
    if (v_q.size() != k || v_d.size() != k || p.query_projection.rows() != k || p.query_projection.cols() != k ||
        p.doc_projection.rows() != k || p.doc_projection.cols() != k) {
        throw Error("score: dimension mismatch");
    }
    return vector_norm(residual(p, v_q, v_d), norm);
}

inline double score(const UserProfile& p, const TopicVector& v_q, const TopicVector& v_d, Norm norm) {
    return score(p, v_q.values, v_d.values, norm);
}

inline double hinge_loss(double f_pos, double f_neg, double margin) {
    return std::max(0.0, margin + f_pos - f_neg);
}

/// d||r|| / dr. For L1 the sign, with sign(0) = 0; for L2 r / ||r||, zero at
/// the origin.
inline Eigen::VectorXd norm_subgradient(const Eigen::VectorXd& r, Norm norm) {
    if (norm == Norm::L1) return r.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    const double n = r.norm();
    if (n == 0.0) return Eigen::VectorXd::Zero(r.size());
    return r / n;
}

struct ProfileGradient {
    Eigen::VectorXd embedding;
    Eigen::MatrixXd query_projection;
    Eigen::MatrixXd doc_projection;
};

/// Embeddings of one correct triple and its corruption.
struct TriplePair {
    Eigen::VectorXd pos_query, pos_doc;
    Eigen::VectorXd neg_query, neg_doc;
};

struct LossAndGradient {
    double loss = 0.0;
    ProfileGradient gradient;
};

/// Hinge loss of a (correct, corrupted) pair and its subgradient with respect
/// to every profile parameter. The gradient is zero when the hinge is inactive.
inline LossAndGradient pair_loss_gradient(const UserProfile& p, const TriplePair& t, Norm norm, double margin) {
    const auto k = p.dim();
    LossAndGradient out;
    out.gradient = {Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Zero(k, k), Eigen::MatrixXd::Zero(k, k)};
    const Eigen::VectorXd r_pos = residual(p, t.pos_query, t.pos_doc);
    const Eigen::VectorXd r_neg = residual(p, t.neg_query, t.neg_doc);
    out.loss = hinge_loss(vector_norm(r_pos, norm), vector_norm(r_neg, norm), margin);
    if (out.loss <= 0.0) return out;

    const Eigen::VectorXd g_pos = norm_subgradient(r_pos, norm);
    const Eigen::VectorXd g_neg = norm_subgradient(r_neg, norm);
    out.gradient.embedding = g_pos - g_neg;
    out.gradient.query_projection = g_pos * t.pos_query.transpose() - g_neg * t.neg_query.transpose();
    out.gradient.doc_projection = g_neg * t.neg_doc.transpose() - g_pos * t.pos_doc.transpose();
    return out;
}

/// Enforces ||v_u|| <= 1, ||W1 v_q|| <= 1 and ||W2 v_d|| <= 1 (all L2) by
/// rescaling.
inline void project_constraints(UserProfile& p, const Eigen::VectorXd& v_q, const Eigen::VectorXd& v_d) {
    if (const double n = p.embedding.norm(); n > 1.0) p.embedding /= n;
    if (const double n = (p.query_projection * v_q).norm(); n > 1.0) p.query_projection /= n;
    if (const double n = (p.doc_projection * v_d).norm(); n > 1.0) p.doc_projection /= n;
}

/// One SGD update on a (correct, corrupted) pair. Returns the loss measured
/// before the update. An inactive hinge leaves the profile untouched.
inline double sgd_step(UserProfile& p, const TriplePair& t, const TrainConfig& config, Phase phase) {
    auto [loss, grad] = pair_loss_gradient(p, t, config.norm, config.margin);
    if (loss <= 0.0) return 0.0;
    const double eta = config.learning_rate;
    p.embedding -= eta * grad.embedding;
    if (phase == Phase::Joint) {
        p.query_projection -= eta * grad.query_projection;
        p.doc_projection -= eta * grad.doc_projection;
        project_constraints(p, t.pos_query, t.pos_doc);
        project_constraints(p, t.neg_query, t.neg_doc);
    } else if (const double n = p.embedding.norm(); n > 1.0) {
        p.embedding /= n;
    }
    return loss;
}

inline double sgd_step(UserProfile& p, const Triple& pos, const Triple& neg, const TrainConfig& config,
                       const EmbeddingStore& store, Phase phase) {
    const TriplePair t{store.query(pos.query).values, store.document(pos.doc_id).values,
                       store.query(neg.query).values, store.document(neg.doc_id).values};
    return sgd_step(p, t, config, phase);
}

// ---------------------------------------------------------------------------
// Negative sampling

/// What one user's corruptions may draw from.
struct CorruptionPool {
    std::map<EntryKey, std::set<std::string>> positives;            ///< correct triples G, by query
    std::map<EntryKey, std::vector<std::string>> in_list_negatives;  ///< non-SAT results, by query
    std::vector<EntryKey> queries;                                   ///< the user's training queries
    std::span<const std::string> corpus_docs;

    bool correct(const EntryKey& q, const std::string& d) const {
        auto it = positives.find(q);
        return it != positives.end() && it->second.contains(d);
    }
};

/// Builds the pool from one user's training entries.
inline CorruptionPool make_corruption_pool(std::span<const LabeledEntry* const> entries,
                                           std::span<const std::string> corpus_docs) {
    CorruptionPool pool;
    pool.corpus_docs = corpus_docs;
    for (const auto* le : entries) {
        const auto key = le->entry.key();
        auto& pos = pool.positives[key];
        auto& neg = pool.in_list_negatives[key];
        for (std::size_t i = 0; i < le->relevance.size(); ++i) {
            if (le->relevance[i]) pos.insert(le->entry.results[i]);
        }
        for (std::size_t i = 0; i < le->relevance.size(); ++i) {
            if (!le->relevance[i]) neg.push_back(le->entry.results[i]);
        }
        pool.queries.push_back(key);
    }
    return pool;
}

/// Replaces the document (or, on the other half of the coin, the query) of a
/// correct triple. The result is never a correct triple.
inline Triple corrupt(const Triple& t, const CorruptionPool& pool, Rng& rng) {
    if (bernoulli(rng, 0.5)) {
        std::vector<const EntryKey*> candidates;
        for (const auto& q : pool.queries)
            if (q != t.query && !pool.correct(q, t.doc_id)) candidates.push_back(&q);
        if (!candidates.empty()) return {*candidates[uniform_index(rng, candidates.size())], t.user_id, t.doc_id};
    }
    if (auto it = pool.in_list_negatives.find(t.query); it != pool.in_list_negatives.end() && !it->second.empty()) {
        return {t.query, t.user_id, it->second[uniform_index(rng, it->second.size())]};
    }
    if (!pool.corpus_docs.empty()) {
        for (int attempt = 0; attempt < 32; ++attempt) {
            const auto& d = pool.corpus_docs[uniform_index(rng, pool.corpus_docs.size())];
            if (!pool.correct(t.query, d)) return {t.query, t.user_id, d};
        }
        std::vector<const std::string*> candidates;
        for (const auto& d : pool.corpus_docs)
            if (!pool.correct(t.query, d)) candidates.push_back(&d);
        if (!candidates.empty()) return {t.query, t.user_id, *candidates[uniform_index(rng, candidates.size())]};
    }
    throw Error("corrupt: empty corruption pool for " + t.query.str());
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
    std::map<std::string, UserProfile> profiles;
    std::map<std::string, std::vector<double>> epoch_loss;  ///< mean pair loss per epoch, phase 1 then phase 2
    std::vector<std::string> warnings;
};

/// N(0, (1/k)^2) truncated to [-6/sqrt(k), 6/sqrt(k)], then projected into
/// the unit ball.
inline Eigen::VectorXd initial_embedding(int k, Rng& rng) {
    const double bound = 6.0 / std::sqrt(static_cast<double>(k));
    const double sigma = 1.0 / k;
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) {
        double x;
        do {
            const double u1 = 1.0 - uniform01(rng);
            const double u2 = uniform01(rng);
            x = sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
        } while (std::abs(x) > bound);
        v[i] = x;
    }
    if (const double n = v.norm(); n > 1.0) v /= n;
    return v;
}

namespace detail {

inline std::vector<double> run_phase(UserProfile& p, std::span<const Triple> triples, const CorruptionPool& pool,
                                     const EmbeddingStore& store, const TrainConfig& config, Phase phase, Rng& rng) {
    std::vector<double> losses;
    std::vector<std::size_t> order(triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < config.epochs_per_phase; ++epoch) {
        shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t pairs = 0;
        for (auto i : order) {
            for (int n = 0; n < config.negatives_per_positive; ++n) {
                const Triple neg = corrupt(triples[i], pool, rng);
                total += sgd_step(p, triples[i], neg, config, store, phase);
                ++pairs;
            }
        }
        losses.push_back(pairs == 0 ? 0.0 : total / static_cast<double>(pairs));
    }
    return losses;
}

}  // namespace detail

/// Trains one profile per user present in `splits.train`. Phase 1 learns the
/// embedding with identity projections; phase 2 (skipped when
/// `identity_projections` is set) fine-tunes everything jointly. Users seen
/// only in validation/test receive the neutral profile.
inline TrainResult train_profiles(const DatasetSplit& splits, const EmbeddingStore& store, const TrainConfig& config,
                                  bool identity_projections) {
    if (!(config.margin > 0) || !(config.learning_rate > 0)) throw Error("train_profiles: margin and rate must be positive");
    if (config.epochs_per_phase < 1 || config.negatives_per_positive < 1) {
        throw Error("train_profiles: epochs and negatives must be positive");
    }
    const int k = store.k;

    std::map<std::string, std::vector<const LabeledEntry*>> by_user;
    for (const auto& le : splits.train) by_user[le.entry.user_id].push_back(&le);
    for (auto& [u, list] : by_user) {
        std::sort(list.begin(), list.end(),
                  [](const LabeledEntry* a, const LabeledEntry* b) { return a->entry.key() < b->entry.key(); });
    }

    std::vector<std::string> corpus_docs;
    corpus_docs.reserve(store.documents.size());
    for (const auto& [id, v] : store.documents) corpus_docs.push_back(id);

    std::vector<std::string> users;
    for (const auto& [u, list] : by_user) users.push_back(u);
    std::vector<UserProfile> profiles(users.size());
    std::vector<std::vector<double>> losses(users.size());

    parallel_for(users.size(), config.threads, [&](std::size_t ui) {
        const auto& entries = by_user.at(users[ui]);
        const auto pool = make_corruption_pool(entries, corpus_docs);
        std::vector<Triple> triples;
        for (const auto* le : entries) {
            for (const auto& d : le->relevant_docs()) {
                store.document(d);
                triples.push_back({le->entry.key(), users[ui], d});
            }
            store.query(le->entry.key());
        }

        Rng rng = derived_rng(config.seed, users[ui]);
        UserProfile p = UserProfile::neutral(users[ui], k);
        p.embedding = initial_embedding(k, rng);

        losses[ui] = detail::run_phase(p, triples, pool, store, config, Phase::EmbeddingOnly, rng);
        if (!identity_projections) {
            auto more = detail::run_phase(p, triples, pool, store, config, Phase::Joint, rng);
            losses[ui].insert(losses[ui].end(), more.begin(), more.end());
        }
        profiles[ui] = std::move(p);
    });

    TrainResult result;
    for (std::size_t i = 0; i < users.size(); ++i) {
        result.epoch_loss.emplace(users[i], std::move(losses[i]));
        result.profiles.emplace(users[i], std::move(profiles[i]));
    }
    std::set<std::string> unseen;
    for (const auto* part : {&splits.validation, &splits.test})
        for (const auto& le : *part)
            if (!result.profiles.contains(le.entry.user_id)) unseen.insert(le.entry.user_id);
    for (const auto& u : unseen) {
        result.profiles.emplace(u, UserProfile::neutral(u, k));
        result.warnings.push_back("user '" + u + "' has no training entries; using the neutral profile");
    }
    return result;
}

/// Looks up a profile, falling back to the neutral one.
inline UserProfile profile_or_neutral(const std::map<std::string, UserProfile>& profiles, const std::string& user,
                                      int k) {
    auto it = profiles.find(user);
    return it == profiles.end() ? UserProfile::neutral(user, k) : it->second;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline std::vector<double> row_major(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
}

inline Eigen::MatrixXd from_row_major(const std::vector<double>& v, int k) {
    if (v.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(k)) throw Error("matrix size mismatch");
    Eigen::MatrixXd m(k, k);
    for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) m(r, c) = v[static_cast<std::size_t>(r * k + c)];
    return m;
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"norm_order", static_cast<int>(c.norm)},
            {"margin", c.margin},
            {"learning_rate", c.learning_rate},
            {"epochs_per_phase", c.epochs_per_phase},
            {"negatives_per_positive", c.negatives_per_positive},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.norm = norm_from_order(j.at("norm_order").get<int>());
    c.margin = j.at("margin").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs_per_phase = j.at("epochs_per_phase").get<int>();
    c.negatives_per_positive = j.at("negatives_per_positive").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

struct ProfileSet {
    int k = 0;
    TrainConfig config;
    bool identity_projections = false;
    std::map<std::string, UserProfile> profiles;
};

inline void save_profiles(const ProfileSet& set, const std::filesystem::path& path) {
    nlohmann::json users = nlohmann::json::array();
    for (const auto& [id, p] : set.profiles) {
        users.push_back({{"user_id", id},
                         {"user_embedding", std::vector<double>(p.embedding.begin(), p.embedding.end())},
                         {"query_projection", detail::row_major(p.query_projection)},
                         {"doc_projection", detail::row_major(p.doc_projection)}});
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << nlohmann::json{{"format", "userembed-profiles"},
                          {"version", 1},
                          {"k", set.k},
                          {"identity_projections", set.identity_projections},
                          {"config", to_json(set.config)},
                          {"profiles", users}}
               .dump()
        << '\n';
}

inline ProfileSet load_profiles(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    ProfileSet set;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format") != "userembed-profiles") throw Error("not a profile file");
        set.k = j.at("k").get<int>();
        set.identity_projections = j.at("identity_projections").get<bool>();
        set.config = train_config_from_json(j.at("config"));
        for (const auto& u : j.at("profiles")) {
            UserProfile p;
            p.user_id = u.at("user_id").get<std::string>();
            const auto e = u.at("user_embedding").get<std::vector<double>>();
            if (e.size() != static_cast<std::size_t>(set.k)) throw Error("embedding size mismatch");
            p.embedding = Eigen::Map<const Eigen::VectorXd>(e.data(), set.k);
            p.query_projection = detail::from_row_major(u.at("query_projection").get<std::vector<double>>(), set.k);
            p.doc_projection = detail::from_row_major(u.at("doc_projection").get<std::vector<double>>(), set.k);
            set.profiles.emplace(p.user_id, std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return set;
}

}  // namespace userembed
