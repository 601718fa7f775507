#include <algorithm>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_support.hpp"
#include "userembed/eval.hpp"

using namespace userembed;
using namespace testsupport;

namespace {

Ranking ranking(const std::string& user, std::int64_t ts, std::vector<std::string> docs) {
    return {{user, ts}, std::move(docs), std::nullopt};
}

std::vector<std::string> ten() {
    std::vector<std::string> v;
    for (int i = 1; i <= 10; ++i) v.push_back("r" + std::to_string(i));
    return v;
}

}  // namespace

TEST(ReciprocalRank, Examples) {
    const auto r = ranking("u", 0, ten());
    EXPECT_EQ(reciprocal_rank(r, {"r1"}), 1.0);
    EXPECT_EQ(reciprocal_rank(r, {"r2"}), 0.5);
    EXPECT_EQ(reciprocal_rank(r, {"r3", "r7"}), 1.0 / 3.0);
}

TEST(ReciprocalRank, NoRelevantDocumentIsAnError) {
    const auto r = ranking("u", 0, ten());
    EXPECT_THROW(reciprocal_rank(r, {}), Error);
    EXPECT_THROW(reciprocal_rank(r, {"absent"}), Error);
}

TEST(Evaluate, MeanOfReciprocalRanks) {
    const RelevanceLabels labels{{{"u", 1}, {"r1"}}, {{"u", 2}, {"r2"}}};
    const auto report = evaluate({{"M", {ranking("u", 1, ten()), ranking("u", 2, ten())}}}, labels);
    EXPECT_EQ(report.at("M").mrr, 0.75);
    EXPECT_EQ(report.at("M").p_at_1, 0.5);
    EXPECT_EQ(report.at("M").n_queries, 2u);
    EXPECT_EQ(report.at("M").reciprocal_ranks, (std::vector<double>{1.0, 0.5}));
}

TEST(Evaluate, PrecisionAtOneIsAFraction) {
    RelevanceLabels labels;
    std::vector<Ranking> rs;
    for (int i = 0; i < 4; ++i) {
        labels[{"u", i}] = {i == 0 ? "r1" : "r5"};
        rs.push_back(ranking("u", i, ten()));
    }
    EXPECT_EQ(evaluate({{"M", rs}}, labels).at("M").p_at_1, 0.25);
}

TEST(Evaluate, MismatchedEntrySetsAreAnError) {
    const RelevanceLabels labels{{{"u", 1}, {"r1"}}, {{"u", 2}, {"r1"}}};
    EXPECT_THROW(evaluate({{"A", {ranking("u", 1, ten())}}, {"B", {ranking("u", 2, ten())}}}, labels), Error);
    EXPECT_THROW(evaluate({{"A", {ranking("u", 1, ten()), ranking("u", 1, ten())}}}, labels), Error);
    EXPECT_THROW(evaluate({{"A", {ranking("u", 1, ten())}}, {"A", {ranking("u", 1, ten())}}}, labels), Error);
    EXPECT_THROW(evaluate({{"A", {ranking("u", 3, ten())}}}, labels), Error);
}

TEST(Evaluate, QueryOrderDoesNotMatter) {
    Rng rng(1);
    RelevanceLabels labels;
    std::vector<Ranking> rs;
    for (int i = 0; i < 50; ++i) {
        auto docs = ten();
        shuffle(docs.begin(), docs.end(), rng);
        labels[{"u" + std::to_string(i % 4), i}] = {"r" + std::to_string(1 + uniform_index(rng, 10))};
        rs.push_back(ranking("u" + std::to_string(i % 4), i, docs));
    }
    const auto a = evaluate({{"M", rs}}, labels);
    shuffle(rs.begin(), rs.end(), rng);
    const auto b = evaluate({{"M", rs}}, labels);
    EXPECT_EQ(a.at("M").mrr, b.at("M").mrr);
    EXPECT_EQ(a.at("M").p_at_1, b.at("M").p_at_1);
    EXPECT_EQ(a.at("M").reciprocal_ranks, b.at("M").reciprocal_ranks);
}

TEST(Evaluate, PerfectRankingScoresOne) {
    RelevanceLabels labels;
    std::vector<Ranking> rs;
    for (int i = 0; i < 20; ++i) {
        labels[{"u", i}] = {"r1", "r" + std::to_string(2 + i % 9)};
        rs.push_back(ranking("u", i, ten()));
    }
    const auto m = evaluate({{"M", rs}}, labels).at("M");
    EXPECT_EQ(m.mrr, 1.0);
    EXPECT_EQ(m.p_at_1, 1.0);
}

TEST(Evaluate, RelabelingBelowFirstRelevantDoesNotMatter) {
    RelevanceLabels labels{{{"u", 1}, {"r3"}}};
    auto docs = ten();
    const auto a = evaluate({{"M", {ranking("u", 1, docs)}}}, labels).at("M").mrr;
    docs[5] = "renamed";
    docs[9] = "other";
    const auto b = evaluate({{"M", {ranking("u", 1, docs)}}}, labels).at("M").mrr;
    EXPECT_EQ(a, b);
}

TEST(Evaluate, MatchesBruteForceOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + uniform_index(rng, 30);
        RelevanceLabels labels;
        std::vector<Ranking> rs;
        std::vector<std::vector<std::string>> lists;
        std::vector<std::set<std::string>> rel;
        for (std::size_t q = 0; q < n; ++q) {
            auto docs = ten();
            shuffle(docs.begin(), docs.end(), rng);
            std::set<std::string> r{docs[uniform_index(rng, 10)]};
            while (bernoulli(rng, 0.4)) r.insert(docs[uniform_index(rng, 10)]);
            labels[{"u", static_cast<std::int64_t>(q)}] = r;
            rs.push_back(ranking("u", static_cast<std::int64_t>(q), docs));
            lists.push_back(docs);
            rel.push_back(r);
        }
        const auto m = evaluate({{"M", rs}}, labels).at("M");
        const auto o = oracle::brute_force_metrics(lists, rel);
        EXPECT_EQ(m.mrr, o.mrr);
        EXPECT_EQ(m.p_at_1, o.p_at_1);
    }
}

TEST(RelativeImprovement, TableFormatting) {
    EXPECT_EQ(format_improvement(relative_improvement(0.5, 0.5)), "+0.0%");
    EXPECT_EQ(format_improvement(relative_improvement(0.4, 0.5)), "+25.0%");
    EXPECT_EQ(format_improvement(relative_improvement(0.5, 0.4)), "-20.0%");
    EXPECT_EQ(format_improvement(-0.04), "+0.0%");
    EXPECT_EQ(format_improvement(17.25), "+17.3%");
    EXPECT_EQ(format_improvement(relative_improvement(0.385, 0.501)), "+30.1%");
}

TEST(RelativeImprovement, RoundedTableValues) {
    // (0.656 - 0.559) / 0.559 = 17.352...%, which rounds to +17.4%.
    EXPECT_EQ(format_improvement(relative_improvement(0.559, 0.656)), "+17.4%");
    EXPECT_NEAR(relative_improvement(0.559, 0.656), 17.3, 0.06);
}

TEST(RenderTable, ListsRequestedMethodsWithImprovements) {
    const RelevanceLabels labels{{{"u", 1}, {"r2"}}};
    const auto report = evaluate({{"SE", {ranking("u", 1, ten())}},
                                  {"X", {ranking("u", 1, {"r2", "r1", "r3", "r4", "r5", "r6", "r7", "r8", "r9", "r10"})}}},
                                 labels);
    EXPECT_EQ(report.methods, (std::vector<std::string>{"SE", "X"}));
    const auto table = render_table(report);
    EXPECT_NE(table.find("0.500 (+0.0%)"), std::string::npos) << table;
    EXPECT_NE(table.find("1.000 (+100.0%)"), std::string::npos) << table;
    EXPECT_NE(table.find("P@1"), std::string::npos);

    const auto j = metrics_json(report, true);
    ASSERT_EQ(j["methods"].size(), 2u);
    EXPECT_EQ(j["methods"][0]["mrr_improvement"], "+0.0%");
    EXPECT_EQ(j["methods"][1]["reciprocal_ranks"], nlohmann::json({1.0}));
    EXPECT_EQ(j["entries"][0]["user_id"], "u");
    EXPECT_FALSE(metrics_json(report, false)["methods"][0].contains("reciprocal_ranks"));
}

TEST(RenderTable, NoImprovementsWithoutBaseline) {
    const RelevanceLabels labels{{{"u", 1}, {"r1"}}};
    const auto report = evaluate({{"X", {ranking("u", 1, ten())}}}, labels);
    EXPECT_EQ(render_table(report).find('%'), std::string::npos);
    EXPECT_FALSE(metrics_json(report, false)["methods"][0].contains("mrr_improvement"));
}

TEST(LabelsOf, CollectsRelevantDocuments) {
    auto e = make_entry("u", 1);
    LabeledEntry le{e, std::vector<bool>(10, false)};
    le.relevance[4] = true;
    le.relevance[6] = true;
    const auto labels = labels_of({le});
    EXPECT_EQ(labels.at(e.key()), (std::set<std::string>{e.results[4], e.results[6]}));
}
