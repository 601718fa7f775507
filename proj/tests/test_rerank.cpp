#include <algorithm>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "userembed/profile.hpp"
#include "userembed/rerank.hpp"

using namespace userembed;
using namespace testsupport;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

LogEntry abcd(std::int64_t ts = 0) { return {"u", ts, "q", {"a", "b", "c", "d"}, {}}; }

}  // namespace

TEST(RerankEntry, EqualDistancesKeepEngineOrder) {
    const auto e = make_entry("u", 0, {}, 6);
    EmbeddingStore store;
    store.k = 3;
    store.queries.emplace(e.key(), TopicVector(vec({0.2, 0.2, 0.6})));
    for (const auto& d : e.results) store.documents.emplace(d, TopicVector(vec({0.2, 0.6, 0.2})));
    const auto r = rerank_entry(UserProfile::neutral("u", 3), e, store, Norm::L1);
    EXPECT_EQ(r.doc_ids, e.results);
    ASSERT_TRUE(r.scores.has_value());
    EXPECT_EQ(r.scores->size(), 6u);
}

TEST(RerankEntry, LowerScoreRanksFirst) {
    LogEntry e{"u", 0, "q", {"far", "near"}, {}};
    EmbeddingStore store;
    store.k = 2;
    store.queries.emplace(e.key(), TopicVector(vec({1, 0})));
    store.documents.emplace("far", TopicVector(vec({0.85, 0.15})));
    store.documents.emplace("near", TopicVector(vec({0.95, 0.05})));
    const auto r = rerank_entry(UserProfile::neutral("u", 2), e, store, Norm::L1);
    EXPECT_EQ(r.doc_ids, (std::vector<std::string>{"near", "far"}));
    EXPECT_NEAR((*r.scores)[0], 0.1, 1e-12);
    EXPECT_NEAR((*r.scores)[1], 0.3, 1e-12);
}

TEST(RerankEntry, MissingEmbeddingNamesTheKey) {
    LogEntry e{"u", 0, "q", {"a", "b"}, {}};
    EmbeddingStore store;
    store.k = 2;
    store.queries.emplace(e.key(), TopicVector(vec({1, 0})));
    store.documents.emplace("a", TopicVector(vec({1, 0})));
    try {
        rerank_entry(UserProfile::neutral("u", 2), e, store, Norm::L1);
        FAIL();
    } catch (const Error& err) {
        EXPECT_NE(std::string(err.what()).find("'b'"), std::string::npos);
    }
    store.documents.emplace("b", TopicVector(vec({0, 1})));
    LogEntry other = e;
    other.timestamp = 1;
    try {
        rerank_entry(UserProfile::neutral("u", 2), other, store, Norm::L1);
        FAIL();
    } catch (const Error& err) {
        EXPECT_NE(std::string(err.what()).find("u@1"), std::string::npos);
    }
}

TEST(RerankEntry, PermutationAndScoreMonotonicity) {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const auto toy = toy_data(static_cast<std::uint64_t>(t), 1, 2, 5);
        auto p = UserProfile::neutral("u0", 5);
        p.embedding = random_simplex(rng, 5).values * 0.5;
        p.query_projection += Eigen::MatrixXd::Random(5, 5) * 0.1;
        for (const auto& le : toy.split.train) {
            for (auto norm : {Norm::L1, Norm::L2}) {
                const auto r = rerank_entry(p, le.entry, toy.store, norm);
                auto a = r.doc_ids;
                auto b = le.entry.results;
                std::sort(a.begin(), a.end());
                std::sort(b.begin(), b.end());
                EXPECT_EQ(a, b);
                for (std::size_t i = 1; i < r.scores->size(); ++i) EXPECT_LE((*r.scores)[i - 1], (*r.scores)[i]);
                for (std::size_t i = 0; i < r.doc_ids.size(); ++i) {
                    EXPECT_EQ((*r.scores)[i],
                              score(p, toy.store.query(le.entry.key()), toy.store.document(r.doc_ids[i]), norm));
                }
            }
        }
    }
}

TEST(BaselineSe, IdentityWithoutScores) {
    const auto e = make_entry("u", 3);
    const auto r = baseline_se(e);
    EXPECT_EQ(r.doc_ids, e.results);
    EXPECT_EQ(r.key, e.key());
    EXPECT_FALSE(r.scores.has_value());
    LogEntry again = e;
    again.results = r.doc_ids;
    EXPECT_EQ(baseline_se(again).doc_ids, r.doc_ids);
}

TEST(BaselineCi, PromotesHistoryStably) {
    EXPECT_EQ(baseline_ci(abcd(), {"c"}).doc_ids, (std::vector<std::string>{"c", "a", "b", "d"}));
    EXPECT_EQ(baseline_ci(abcd(), {"d", "b"}).doc_ids, (std::vector<std::string>{"b", "d", "a", "c"}));
    EXPECT_EQ(baseline_ci(abcd(), {}).doc_ids, abcd().results);
    EXPECT_EQ(baseline_ci(abcd(), {"a", "b", "c", "d"}).doc_ids, abcd().results);
    EXPECT_EQ(baseline_ci(abcd(), {"zzz"}).doc_ids, abcd().results);
    EXPECT_FALSE(baseline_ci(abcd(), {"c"}).scores.has_value());
}

TEST(ClickHistory, OnlyStrictlyEarlierClicksCount) {
    std::vector<LogEntry> log{abcd(0), abcd(100), abcd(200)};
    log[0].clicks = {{"a", 50, 1}};
    log[1].clicks = {{"c", 5, 3}};
    log[2].clicks = {{"d", 50, 4}};
    const ClickHistory h(log);
    EXPECT_TRUE(h.before("u", 0).empty());
    EXPECT_EQ(h.before("u", 100), (std::set<std::string>{"a"}));
    EXPECT_EQ(h.before("u", 200), (std::set<std::string>{"a", "c"}));
    EXPECT_EQ(h.before("u", 201), (std::set<std::string>{"a", "c", "d"}));
    EXPECT_TRUE(h.before("nobody", 1000).empty());
}

TEST(ClickHistory, SatOnlyDropsShortClicks) {
    std::vector<LogEntry> log{abcd(0), abcd(100), abcd(200)};
    log[0].clicks = {{"a", 50, 1}};
    log[1].clicks = {{"c", 5, 3}};
    log[2].clicks = {{"d", 5, 4}};
    const ClickHistory h(log, true);
    EXPECT_EQ(h.before("u", 1000), (std::set<std::string>{"a", "d"}));
}

TEST(ClickHistory, LaterClicksNeverChangeCi) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        std::vector<LogEntry> log;
        for (int i = 0; i < 8; ++i) {
            LogEntry e = abcd(i * 100);
            if (bernoulli(rng, 0.6)) e.clicks.push_back({e.results[uniform_index(rng, 4)], uniform(rng, 1, 90), 1});
            log.push_back(e);
        }
        for (auto& e : log)
            for (auto& c : e.clicks)
                c.position = static_cast<std::size_t>(std::find(e.results.begin(), e.results.end(), c.doc_id) -
                                                      e.results.begin()) + 1;
        const auto target = uniform_index(rng, log.size());
        const auto before = baseline_ci(log[target], ClickHistory(log).before("u", log[target].timestamp));
        auto perturbed = log;
        for (std::size_t i = target; i < perturbed.size(); ++i) {
            perturbed[i].clicks.clear();
            const auto pos = uniform_index(rng, 4);
            perturbed[i].clicks.push_back({perturbed[i].results[pos], uniform(rng, 1, 90), pos + 1});
        }
        const auto after = baseline_ci(log[target], ClickHistory(perturbed).before("u", log[target].timestamp));
        EXPECT_EQ(before.doc_ids, after.doc_ids);
    }
}

TEST(WriteRankings, OneRecordPerEntry) {
    TempDir dir("rankings");
    Ranking a{{"u", 1}, {"x", "y"}, std::vector<double>{0.1, 0.2}};
    Ranking b{{"v", 2}, {"z"}, std::nullopt};
    write_rankings(dir / "r.jsonl", {a, b});
    std::istringstream in(slurp(dir / "r.jsonl"));
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0]["doc_ids"], nlohmann::json({"x", "y"}));
    EXPECT_EQ(rows[0]["scores"], nlohmann::json({0.1, 0.2}));
    EXPECT_EQ(rows[1]["user_id"], "v");
    EXPECT_FALSE(rows[1].contains("scores"));
}
