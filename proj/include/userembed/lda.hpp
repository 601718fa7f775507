#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "userembed/common.hpp"
#include "userembed/corpus.hpp"

namespace userembed {

/// Probability distribution over k topics. Used for both documents and queries.
struct TopicVector {
    Eigen::VectorXd values;

    TopicVector() = default;
    explicit TopicVector(Eigen::VectorXd v) : values(std::move(v)) {}

    static TopicVector uniform(int k) { return TopicVector(Eigen::VectorXd::Constant(k, 1.0 / k)); }

    int dim() const { return static_cast<int>(values.size()); }
    double operator[](int i) const { return values[i]; }

    bool on_simplex(double tol = 1e-9) const {
        return values.size() > 0 && values.minCoeff() >= 0.0 && std::abs(values.sum() - 1.0) <= tol;
    }
};

/// Raised by infer_theta when no token of the document is known to the model.
class OutOfVocabularyError : public Error {
public:
    using Error::Error;
};

struct TopicModel {
    int k = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<std::string> vocab;
    std::vector<std::int64_t> topic_word_counts;  ///< k x V, row-major
    std::vector<std::int64_t> topic_totals;

    std::size_t vocab_size() const { return vocab.size(); }
    std::int64_t count(int topic, std::size_t word) const {
        return topic_word_counts[static_cast<std::size_t>(topic) * vocab.size() + word];
    }
    /// Word observed during training.
    bool known(std::int32_t word) const {
        if (word < 0 || static_cast<std::size_t>(word) >= vocab.size()) return false;
        for (int z = 0; z < k; ++z)
            if (count(z, static_cast<std::size_t>(word)) > 0) return true;
        return false;
    }
    std::int64_t total_tokens() const { return std::accumulate(topic_totals.begin(), topic_totals.end(), std::int64_t{0}); }
};

struct LdaTrainOptions {
    int k = 200;
    double alpha = -1.0;  ///< negative selects 50 / k
    double beta = 0.01;
    int iterations = 1000;
    std::uint64_t seed = 1;
};

struct LdaInferOptions {
    int iterations = 100;
    int burn_in = 50;
    std::uint64_t seed = 1;
};

namespace detail {

inline int sample_topic(std::vector<double>& cumulative, Rng& rng) {
    const double u = uniform01(rng) * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<int>(it - cumulative.begin()), static_cast<int>(cumulative.size()) - 1);
}

}  // namespace detail

/// Collapsed Gibbs sampling over `corpus`. Token ids index `vocab`.
inline TopicModel train_lda(std::span<const Document> corpus, const Vocabulary& vocab, const LdaTrainOptions& opt) {
    if (corpus.empty()) throw Error("train_lda: empty corpus");
    if (opt.k < 2) throw Error("train_lda: k must be at least 2");
    if (opt.iterations < 1) throw Error("train_lda: iterations must be at least 1");
    const double alpha = opt.alpha > 0 ? opt.alpha : 50.0 / opt.k;
    if (!(opt.beta > 0)) throw Error("train_lda: beta must be positive");
    const std::size_t V = vocab.size();
    for (const auto& d : corpus) {
        if (d.tokens.empty()) throw Error("train_lda: document '" + d.doc_id + "' is empty");
        for (auto w : d.tokens)
            if (w < 0 || static_cast<std::size_t>(w) >= V)
                throw Error("train_lda: token id out of vocabulary range in '" + d.doc_id + "'");
    }

    TopicModel m;
    m.k = opt.k;
    m.alpha = alpha;
    m.beta = opt.beta;
    m.vocab = vocab.words();
    m.topic_word_counts.assign(static_cast<std::size_t>(opt.k) * V, 0);
    m.topic_totals.assign(static_cast<std::size_t>(opt.k), 0);

    const auto K = static_cast<std::size_t>(opt.k);
    Rng rng(opt.seed);
    std::vector<std::vector<int>> assign(corpus.size());
    std::vector<std::int64_t> doc_topic(corpus.size() * K, 0);
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        assign[d].resize(corpus[d].tokens.size());
        for (std::size_t i = 0; i < corpus[d].tokens.size(); ++i) {
            const int z = static_cast<int>(uniform_index(rng, K));
            const auto w = static_cast<std::size_t>(corpus[d].tokens[i]);
            assign[d][i] = z;
            ++doc_topic[d * K + static_cast<std::size_t>(z)];
            ++m.topic_word_counts[static_cast<std::size_t>(z) * V + w];
            ++m.topic_totals[static_cast<std::size_t>(z)];
        }
    }

    const double vbeta = static_cast<double>(V) * opt.beta;
    std::vector<double> cumulative(K);
    for (int it = 0; it < opt.iterations; ++it) {
        for (std::size_t d = 0; d < corpus.size(); ++d) {
            std::int64_t* nd = &doc_topic[d * K];
            for (std::size_t i = 0; i < corpus[d].tokens.size(); ++i) {
                const auto w = static_cast<std::size_t>(corpus[d].tokens[i]);
                const auto old = static_cast<std::size_t>(assign[d][i]);
                --nd[old];
                --m.topic_word_counts[old * V + w];
                --m.topic_totals[old];

                double acc = 0.0;
                for (std::size_t z = 0; z < K; ++z) {
                    acc += (static_cast<double>(nd[z]) + alpha) *
                           (static_cast<double>(m.topic_word_counts[z * V + w]) + opt.beta) /
                           (static_cast<double>(m.topic_totals[z]) + vbeta);
                    cumulative[z] = acc;
                }
                const auto z = static_cast<std::size_t>(detail::sample_topic(cumulative, rng));
                assign[d][i] = static_cast<int>(z);
                ++nd[z];
                ++m.topic_word_counts[z * V + w];
                ++m.topic_totals[z];
            }
        }
    }
    return m;
}

/// Topic proportions of an unseen document with the model's counts frozen.
/// Returns the average of the smoothed estimate (n_dz + alpha) / (n_d + k alpha)
/// over the post-burn-in sweeps. Unknown tokens are dropped.
inline TopicVector infer_theta(const TopicModel& model, const Document& doc, const LdaInferOptions& opt) {
    if (!(opt.iterations > opt.burn_in && opt.burn_in >= 0)) {
        throw Error("infer_theta: need iterations > burn_in >= 0");
    }
    std::vector<std::size_t> words;
    for (auto w : doc.tokens)
        if (model.known(w)) words.push_back(static_cast<std::size_t>(w));
    if (words.empty()) throw OutOfVocabularyError("infer_theta: document '" + doc.doc_id + "' has no known tokens");

    const auto K = static_cast<std::size_t>(model.k);
    const std::size_t V = model.vocab_size();
    const double vbeta = static_cast<double>(V) * model.beta;

    // phi[w][z] is fixed during inference.
    std::vector<double> phi(words.size() * K);
    for (std::size_t i = 0; i < words.size(); ++i)
        for (std::size_t z = 0; z < K; ++z)
            phi[i * K + z] = (static_cast<double>(model.topic_word_counts[z * V + words[i]]) + model.beta) /
                             (static_cast<double>(model.topic_totals[z]) + vbeta);

    Rng rng(opt.seed);
    std::vector<int> assign(words.size());
    std::vector<std::int64_t> nd(K, 0);
    for (std::size_t i = 0; i < words.size(); ++i) {
        assign[i] = static_cast<int>(uniform_index(rng, K));
        ++nd[static_cast<std::size_t>(assign[i])];
    }

    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
    std::vector<double> cumulative(K);
    const double denom = static_cast<double>(words.size()) + static_cast<double>(K) * model.alpha;
    for (int it = 0; it < opt.iterations; ++it) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            --nd[static_cast<std::size_t>(assign[i])];
            double s = 0.0;
            for (std::size_t z = 0; z < K; ++z) {
                s += (static_cast<double>(nd[z]) + model.alpha) * phi[i * K + z];
                cumulative[z] = s;
            }
            assign[i] = detail::sample_topic(cumulative, rng);
            ++nd[static_cast<std::size_t>(assign[i])];
        }
        if (it >= opt.burn_in) {
            for (std::size_t z = 0; z < K; ++z)
                acc[static_cast<Eigen::Index>(z)] += (static_cast<double>(nd[z]) + model.alpha) / denom;
        }
    }
    acc /= acc.sum();
    return TopicVector(std::move(acc));
}

// ---------------------------------------------------------------------------
// Serialization

inline void save_topic_model(const TopicModel& m, const std::filesystem::path& path) {
    nlohmann::json rows = nlohmann::json::array();
    const std::size_t V = m.vocab_size();
    for (int z = 0; z < m.k; ++z) {
        const auto* b = m.topic_word_counts.data() + static_cast<std::size_t>(z) * V;
        rows.push_back(std::vector<std::int64_t>(b, b + V));
    }
    const nlohmann::json j = {{"format", "userembed-topic-model"},
                              {"version", 1},
                              {"k", m.k},
                              {"alpha", m.alpha},
                              {"beta", m.beta},
                              {"vocab", m.vocab},
                              {"topic_totals", m.topic_totals},
                              {"topic_word_counts", rows}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump() << '\n';
}

inline TopicModel load_topic_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    TopicModel m;
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format") != "userembed-topic-model") throw Error("not a topic model file");
        m.k = j.at("k").get<int>();
        m.alpha = j.at("alpha").get<double>();
        m.beta = j.at("beta").get<double>();
        m.vocab = j.at("vocab").get<std::vector<std::string>>();
        m.topic_totals = j.at("topic_totals").get<std::vector<std::int64_t>>();
        const auto& rows = j.at("topic_word_counts");
        if (m.k < 2 || rows.size() != static_cast<std::size_t>(m.k) ||
            m.topic_totals.size() != static_cast<std::size_t>(m.k))
            throw Error("topic count mismatch");
        for (int z = 0; z < m.k; ++z) {
            auto row = rows.at(static_cast<std::size_t>(z)).get<std::vector<std::int64_t>>();
            if (row.size() != m.vocab.size()) throw Error("row length mismatch");
            if (std::accumulate(row.begin(), row.end(), std::int64_t{0}) != m.topic_totals[static_cast<std::size_t>(z)])
                throw Error("topic_totals inconsistent with counts");
            m.topic_word_counts.insert(m.topic_word_counts.end(), row.begin(), row.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return m;
}

}  // namespace userembed
