#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "userembed/embeddings.hpp"

using namespace userembed;
using namespace testsupport;

namespace {

TopicVector tv(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return TopicVector(v);
}


}  // namespace

TEST(DocEmbedding, InVocabularyDocumentIsOnSimplex) {
    const auto c = disjoint_corpus(10, 10, 40, 1);
    LdaTrainOptions o;
    o.k = 3;
    o.iterations = 20;
    const auto m = train_lda(c.docs, c.vocab, o);
    const auto v = doc_embedding(m, c.docs[0], {});
    EXPECT_EQ(v.dim(), 3);
    EXPECT_TRUE(v.on_simplex());
}

TEST(DocEmbedding, OutOfVocabularyFallsBackToUniform) {
    auto c = disjoint_corpus(10, 10, 40, 1);
    const auto oov = c.vocab.intern("zzz");
    LdaTrainOptions o;
    o.k = 4;
    o.iterations = 5;
    const auto m = train_lda(c.docs, c.vocab, o);
    const auto v = doc_embedding(m, Document{"x", {oov}}, {});
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(v[i], 0.25);
}

TEST(DocEmbedding, DisjointVocabularyDominantMass) {
    const auto c = disjoint_corpus(40, 30, 300, 2);
    LdaTrainOptions o;
    o.k = 2;
    o.iterations = 200;
    const auto m = train_lda(c.docs, c.vocab, o);
    for (const auto& d : c.docs) EXPECT_GE(doc_embedding(m, d, {}).values.maxCoeff(), 0.9);
}

TEST(DecayWeights, SingleDocumentGetsEverything) {
    for (double delta : {0.1, 0.5, 0.99}) EXPECT_EQ(decay_weights(1, delta), std::vector<double>{1.0});
}

TEST(DecayWeights, ThreeAtHalf) {
    const auto w = decay_weights(3, 0.5);
    EXPECT_NEAR(w[0], 4.0 / 7.0, 1e-15);
    EXPECT_NEAR(w[1], 2.0 / 7.0, 1e-15);
    EXPECT_NEAR(w[2], 1.0 / 7.0, 1e-15);
}

TEST(DecayWeights, TenAtPointEight) {
    const auto w = decay_weights(10, 0.8);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    EXPECT_NEAR(w[0] / w[1], 1.25, 1e-12);
    for (std::size_t i = 1; i < w.size(); ++i) EXPECT_LT(w[i], w[i - 1]);
}

TEST(DecayWeights, InvalidArgumentsAreErrors) {
    EXPECT_THROW(decay_weights(0, 0.5), Error);
    EXPECT_THROW(decay_weights(3, 0.0), Error);
    EXPECT_THROW(decay_weights(3, 1.0), Error);
    EXPECT_THROW(decay_weights(3, -0.2), Error);
    EXPECT_THROW(decay_weights(3, 1.5), Error);
}

TEST(DecayWeights, MatchesBruteForceNormalization) {
    for (std::size_t n = 1; n <= 12; ++n)
        for (double delta : {0.05, 0.3, 0.5, 0.8, 0.95}) {
            std::vector<double> g;
            for (std::size_t i = 0; i < n; ++i) g.push_back(std::pow(delta, static_cast<double>(i)));
            const double s = std::accumulate(g.begin(), g.end(), 0.0);
            const auto w = decay_weights(n, delta);
            for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(w[i], g[i] / s, 1e-12);
        }
}

TEST(QueryEmbedding, IdenticalInputsAreAFixedPoint) {
    const auto v = tv({0.2, 0.3, 0.5});
    const std::vector<TopicVector> docs(10, v);
    const auto q = query_embedding(docs, 0.8);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(q[i], v[i], 1e-15);
}

TEST(QueryEmbedding, TwoDocumentsAtHalf) {
    const std::vector<TopicVector> docs{tv({1, 0}), tv({0, 1})};
    const auto q = query_embedding(docs, 0.5);
    EXPECT_NEAR(q[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(q[1], 1.0 / 3.0, 1e-15);
}

TEST(QueryEmbedding, EmptyOrMismatchedInputIsAnError) {
    EXPECT_THROW(query_embedding(std::vector<TopicVector>{}, 0.8), Error);
    const std::vector<TopicVector> docs{tv({1, 0}), tv({0, 0, 1})};
    EXPECT_THROW(query_embedding(docs, 0.8), Error);
}

TEST(QueryEmbedding, StaysInsideTheConvexHull) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 2 + static_cast<int>(uniform_index(rng, 8));
        const auto n = 1 + uniform_index(rng, 10);
        std::vector<TopicVector> docs;
        for (std::size_t i = 0; i < n; ++i) docs.push_back(random_simplex(rng, k));
        const auto q = query_embedding(docs, uniform(rng, 0.05, 0.95));
        EXPECT_TRUE(q.on_simplex());
        for (int z = 0; z < k; ++z) {
            double lo = 1.0, hi = 0.0;
            for (const auto& d : docs) {
                lo = std::min(lo, d[z]);
                hi = std::max(hi, d[z]);
            }
            EXPECT_GE(q[z], lo - 1e-12);
            EXPECT_LE(q[z], hi + 1e-12);
        }
    }
}

TEST(QueryEmbedding, MovingADocumentUpPullsTheQueryTowardIt) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 4;
        std::vector<TopicVector> docs;
        for (int i = 0; i < 10; ++i) docs.push_back(random_simplex(rng, k));
        const auto i = uniform_index(rng, 9);
        const auto j = i + 1 + uniform_index(rng, 9 - i);
        const auto before = query_embedding(docs, 0.8);
        std::swap(docs[i], docs[j]);
        const auto after = query_embedding(docs, 0.8);
        const Eigen::VectorXd toward = docs[i].values - docs[j].values;
        EXPECT_GT((after.values - before.values).dot(toward), 0.0);
    }
}

TEST(EmbeddingStore, BuildCoversEveryResultAndQuery) {
    const auto c = disjoint_corpus(10, 10, 40, 3);
    Corpus corpus;
    corpus.vocab = c.vocab;
    for (const auto& d : c.docs) {
        corpus.index.emplace(d.doc_id, corpus.docs.size());
        corpus.docs.push_back(d);
    }
    LdaTrainOptions o;
    o.k = 3;
    o.iterations = 10;
    const auto m = train_lda(c.docs, c.vocab, o);
    LogEntry e{"u", 5, "q", {"doc0", "doc7", "ghost"}, {}};
    const std::vector<const LogEntry*> entries{&e};
    std::vector<std::string> missing;
    const auto store = build_embedding_store(m, corpus, entries, {}, &missing);
    EXPECT_EQ(store.k, 3);
    EXPECT_EQ(store.documents.size(), 3u);
    EXPECT_EQ(missing, std::vector<std::string>{"ghost"});
    EXPECT_EQ(store.document("ghost").values, TopicVector::uniform(3).values);
    for (const auto& [id, v] : store.documents) EXPECT_TRUE(v.on_simplex()) << id;
    EXPECT_TRUE(store.query(e.key()).on_simplex());
    EXPECT_THROW(store.query({"u", 6}), Error);
    EXPECT_THROW(store.document("nope"), Error);

    EmbeddingOptions threaded;
    threaded.threads = 4;
    const auto again = build_embedding_store(m, corpus, entries, threaded);
    for (const auto& [id, v] : store.documents) EXPECT_EQ(again.document(id).values, v.values);
}

TEST(EmbeddingStore, RoundTripIsLossless) {
    TempDir dir("emb_io");
    Rng rng(8);
    EmbeddingStore s;
    s.k = 5;
    for (int i = 0; i < 20; ++i) s.documents.emplace("d" + std::to_string(i), random_simplex(rng, 5));
    for (int i = 0; i < 7; ++i) s.queries.emplace(EntryKey{"u" + std::to_string(i % 3), i * 100}, random_simplex(rng, 5));
    save_embeddings(s, dir / "e.json");
    const auto back = load_embeddings(dir / "e.json");
    EXPECT_EQ(back.k, 5);
    ASSERT_EQ(back.documents.size(), s.documents.size());
    ASSERT_EQ(back.queries.size(), s.queries.size());
    for (const auto& [id, v] : s.documents) EXPECT_EQ(back.document(id).values, v.values);
    for (const auto& [key, v] : s.queries) EXPECT_EQ(back.query(key).values, v.values);
}

TEST(EmbeddingStore, DimensionMismatchOnLoadIsAnError) {
    TempDir dir("emb_bad");
    write_text(dir / "e.json", R"({"format":"userembed-embeddings","version":1,"k":3,"documents":{"a":[0.5,0.5]},"queries":[]})");
    EXPECT_THROW(load_embeddings(dir / "e.json"), ParseError);
}
