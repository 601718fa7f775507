#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "userembed/common.hpp"
#include "userembed/corpus.hpp"
#include "userembed/lda.hpp"
#include "userembed/logdata.hpp"

namespace userembed {

inline constexpr double kDefaultDecay = 0.8;

/// Document and query topic vectors, all of dimension k.
struct EmbeddingStore {
    int k = 0;
    std::map<std::string, TopicVector> documents;
    std::map<EntryKey, TopicVector> queries;

    const TopicVector& document(const std::string& doc_id) const {
        auto it = documents.find(doc_id);
        if (it == documents.end()) throw Error("missing document embedding for '" + doc_id + "'");
        return it->second;
    }
    const TopicVector& query(const EntryKey& key) const {
        auto it = queries.find(key);
        if (it == queries.end()) throw Error("missing query embedding for " + key.str());
        return it->second;
    }
};

/// infer_theta with the uniform vector as fallback for documents the model
/// knows nothing about.
inline TopicVector doc_embedding(const TopicModel& model, const Document& doc, const LdaInferOptions& opt) {
    try {
        return infer_theta(model, doc, opt);
    } catch (const OutOfVocabularyError&) {
        return TopicVector::uniform(model.k);
    }
}

/// Rank weights delta^(i-1) / sum_j delta^(j-1), i = 1..n.
inline std::vector<double> decay_weights(std::size_t n, double delta) {
    if (n < 1) throw Error("decay_weights: n must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) throw Error("decay_weights: delta must lie in (0, 1)");
    std::vector<double> w(n);
    double p = 1.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = p;
        total += p;
        p *= delta;
    }
    for (auto& x : w) x /= total;
    return w;
}

/// Decay-weighted mixture of the topic vectors of a query's ranked results.
inline TopicVector query_embedding(std::span<const TopicVector> ranked_docs, double delta) {
    if (ranked_docs.empty()) throw Error("query_embedding: no documents");
    const auto w = decay_weights(ranked_docs.size(), delta);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(ranked_docs.front().dim());
    for (std::size_t i = 0; i < ranked_docs.size(); ++i) {
        if (ranked_docs[i].dim() != v.size()) throw Error("query_embedding: dimension mismatch");
        v += w[i] * ranked_docs[i].values;
    }
    return TopicVector(std::move(v));
}

struct EmbeddingOptions {
    double delta = kDefaultDecay;
    LdaInferOptions infer;
    unsigned threads = 0;
};

/// Embeds every document returned for any of `entries` and every entry's
/// query. Result documents absent from the corpus get the uniform vector and
/// are listed in `missing` when given.
inline EmbeddingStore build_embedding_store(const TopicModel& model, const Corpus& corpus,
                                            std::span<const LogEntry* const> entries, const EmbeddingOptions& opt,
                                            std::vector<std::string>* missing = nullptr) {
    EmbeddingStore store;
    store.k = model.k;

    std::set<std::string> ids;
    for (const auto* e : entries) ids.insert(e->results.begin(), e->results.end());
    const std::vector<std::string> doc_ids(ids.begin(), ids.end());
    std::vector<TopicVector> vecs(doc_ids.size());
    parallel_for(doc_ids.size(), opt.threads, [&](std::size_t i) {
        const Document* doc = corpus.find(doc_ids[i]);
        if (doc == nullptr) {
            vecs[i] = TopicVector::uniform(model.k);
            return;
        }
        auto infer = opt.infer;
        infer.seed = derived_rng(opt.infer.seed, doc_ids[i])();
        vecs[i] = doc_embedding(model, *doc, infer);
    });
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
        if (missing != nullptr && corpus.find(doc_ids[i]) == nullptr) missing->push_back(doc_ids[i]);
        store.documents.emplace(doc_ids[i], std::move(vecs[i]));
    }

    std::vector<TopicVector> ranked;
    for (const auto* e : entries) {
        ranked.clear();
        for (const auto& d : e->results) ranked.push_back(store.documents.at(d));
        store.queries.insert_or_assign(e->key(), query_embedding(ranked, opt.delta));
    }
    return store;
}

// ---------------------------------------------------------------------------
// Serialization

inline void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
    nlohmann::json docs = nlohmann::json::object();
    for (const auto& [id, v] : store.documents) docs[id] = std::vector<double>(v.values.begin(), v.values.end());
    nlohmann::json queries = nlohmann::json::array();
    for (const auto& [key, v] : store.queries) {
        queries.push_back({{"user_id", key.user_id},
                           {"timestamp", key.timestamp},
                           {"vector", std::vector<double>(v.values.begin(), v.values.end())}});
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << nlohmann::json{{"format", "userembed-embeddings"},
                          {"version", 1},
                          {"k", store.k},
                          {"documents", docs},
                          {"queries", queries}}
               .dump()
        << '\n';
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    EmbeddingStore store;
    auto to_vec = [&](const nlohmann::json& j) {
        const auto v = j.get<std::vector<double>>();
        if (v.size() != static_cast<std::size_t>(store.k)) throw Error("vector dimension mismatch");
        return TopicVector(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format") != "userembed-embeddings") throw Error("not an embedding file");
        store.k = j.at("k").get<int>();
        for (const auto& [id, v] : j.at("documents").items()) store.documents.emplace(id, to_vec(v));
        for (const auto& q : j.at("queries")) {
            store.queries.emplace(EntryKey{q.at("user_id").get<std::string>(), q.at("timestamp").get<std::int64_t>()},
                                  to_vec(q.at("vector")));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return store;
}

}  // namespace userembed
