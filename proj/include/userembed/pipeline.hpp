#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "userembed/corpus.hpp"
#include "userembed/embeddings.hpp"
#include "userembed/eval.hpp"
#include "userembed/lda.hpp"
#include "userembed/logdata.hpp"
#include "userembed/profile.hpp"
#include "userembed/rerank.hpp"
#include "userembed/synth.hpp"

namespace userembed {

// Method names used in reports.
inline constexpr const char* kMethodSE = "SE";
inline constexpr const char* kMethodCI = "CI";
inline constexpr const char* kMethodOurs = "Ours";
inline constexpr const char* kMethodOursIdentityW = "Ours-W";

struct PrepareOptions {
    double session_gap = kDefaultSessionGap;
    double dwell_threshold = kDefaultSatDwell;
    std::set<std::string> domain_blocklist = default_domain_blocklist();
    std::size_t n_results = kDefaultResultCount;
    std::uint64_t seed = 1;
};

struct Prepared {
    DatasetSplit split;
    DatasetStats stats;
};

inline Prepared prepare(const std::vector<LogEntry>& log, const PrepareOptions& opt) {
    const auto sessions = segment_sessions(log, opt.session_gap);
    const auto labeled = label_and_filter(sessions, opt.dwell_threshold, opt.domain_blocklist);
    return {split_dataset(labeled, opt.seed), compute_stats(labeled)};
}

/// Hyper-parameter lists; a grid with more than one point is searched by
/// validation MRR.
struct HyperGrid {
    std::vector<int> k;
    std::vector<Norm> norm;
    std::vector<double> learning_rate;
    std::vector<double> margin;
    std::vector<double> delta;

    bool trivial() const {
        return k.size() <= 1 && norm.size() <= 1 && learning_rate.size() <= 1 && margin.size() <= 1 && delta.size() <= 1;
    }
};

struct ModelOptions {
    LdaTrainOptions lda;  ///< lda.k is the embedding dimension
    LdaInferOptions infer;
    double delta = kDefaultDecay;
    TrainConfig train;
    unsigned threads = 0;
};

inline nlohmann::json to_json(const ModelOptions& m) {
    return {{"k", m.lda.k},
            {"lda_alpha", m.lda.alpha > 0 ? m.lda.alpha : 50.0 / m.lda.k},
            {"lda_beta", m.lda.beta},
            {"lda_iterations", m.lda.iterations},
            {"lda_seed", m.lda.seed},
            {"infer_iterations", m.infer.iterations},
            {"infer_burn_in", m.infer.burn_in},
            {"infer_seed", m.infer.seed},
            {"delta", m.delta},
            {"profile", to_json(m.train)}};
}

struct TrainedModels {
    TopicModel topic_model;
    EmbeddingStore store;
    TrainResult profiles;
    std::optional<TrainResult> identity_profiles;
    std::vector<std::string> missing_documents;
};

/// Documents with a relevant label in `entries`, in doc_id order.
inline std::vector<Document> relevant_documents(const Corpus& corpus, const std::vector<LabeledEntry>& entries) {
    std::set<std::string> ids;
    for (const auto& le : entries)
        for (const auto& d : le.relevant_docs()) ids.insert(d);
    std::vector<Document> docs;
    for (const auto& id : ids) {
        const Document* d = corpus.find(id);
        if (d != nullptr && !d->tokens.empty()) docs.push_back(*d);
    }
    return docs;
}

inline std::vector<const LogEntry*> all_entries(const DatasetSplit& split) {
    std::vector<const LogEntry*> out;
    for (const auto* part : {&split.train, &split.validation, &split.test})
        for (const auto& le : *part) out.push_back(&le.entry);
    return out;
}

inline TopicModel train_topic_model(const Corpus& corpus, const DatasetSplit& split, const LdaTrainOptions& opt) {
    const auto docs = relevant_documents(corpus, split.train);
    if (docs.empty()) throw Error("no relevant training documents found in the corpus");
    return train_lda(docs, corpus.vocab, opt);
}

inline EmbeddingStore build_store(const TopicModel& model, const Corpus& corpus, const DatasetSplit& split,
                                  const ModelOptions& opt, std::vector<std::string>* missing = nullptr) {
    const auto entries = all_entries(split);
    return build_embedding_store(model, corpus, entries, {opt.delta, opt.infer, opt.threads}, missing);
}

/// LDA on the training split's SAT documents, embeddings for every entry,
/// then per-user profiles (and optionally the identity-projection variant).
inline TrainedModels train_models(const Corpus& corpus, const DatasetSplit& split, const ModelOptions& opt,
                                  bool with_identity_variant) {
    TrainedModels m;
    m.topic_model = train_topic_model(corpus, split, opt.lda);
    m.store = build_store(m.topic_model, corpus, split, opt, &m.missing_documents);
    auto cfg = opt.train;
    cfg.threads = opt.threads;
    m.profiles = train_profiles(split, m.store, cfg, false);
    if (with_identity_variant) m.identity_profiles = train_profiles(split, m.store, cfg, true);
    return m;
}

struct EvalOptions {
    std::vector<std::string> methods{kMethodSE, kMethodCI, kMethodOurs, kMethodOursIdentityW};
    bool ci_sat_only = false;
    double session_gap = kDefaultSessionGap;
    double dwell_threshold = kDefaultSatDwell;
};

/// Rankings for the requested methods over `entries`. Methods whose profiles
/// are not supplied are skipped.
inline std::vector<std::pair<std::string, std::vector<Ranking>>> rank_methods(
    const std::vector<LabeledEntry>& entries, const std::vector<LogEntry>& log, const EmbeddingStore* store,
    const ProfileSet* full, const ProfileSet* identity, const EvalOptions& opt) {
    std::vector<std::pair<std::string, std::vector<Ranking>>> out;
    std::optional<ClickHistory> history;
    for (const auto& method : opt.methods) {
        std::vector<Ranking> rankings;
        if (method == kMethodSE) {
            for (const auto& le : entries) rankings.push_back(baseline_se(le.entry));
        } else if (method == kMethodCI) {
            if (!history) history.emplace(log, opt.ci_sat_only, opt.session_gap, opt.dwell_threshold);
            for (const auto& le : entries)
                rankings.push_back(baseline_ci(le.entry, history->before(le.entry.user_id, le.entry.timestamp)));
        } else if (method == kMethodOurs || method == kMethodOursIdentityW) {
            const ProfileSet* set = method == kMethodOurs ? full : identity;
            if (set == nullptr || store == nullptr) continue;
            for (const auto& le : entries) {
                const auto p = profile_or_neutral(set->profiles, le.entry.user_id, set->k);
                rankings.push_back(rerank_entry(p, le.entry, *store, set->config.norm));
            }
        } else {
            throw Error("unknown method '" + method + "'");
        }
        out.emplace_back(method, std::move(rankings));
    }
    return out;
}

inline ProfileSet profile_set(const TrainResult& r, const ModelOptions& opt, bool identity) {
    return {opt.lda.k, opt.train, identity, r.profiles};
}

/// Validation MRR of the full model for every grid point; returns the best
/// options (first wins ties) and the per-point scores.
struct GridSearchResult {
    ModelOptions best;
    double best_mrr = -1.0;
    std::vector<std::pair<nlohmann::json, double>> points;
};

inline GridSearchResult grid_search(const Corpus& corpus, const DatasetSplit& split, const ModelOptions& base,
                                    const HyperGrid& grid) {
    if (split.validation.empty()) throw Error("grid search needs a non-empty validation split");
    auto or_base = [](auto list, auto value) {
        if (list.empty()) list.push_back(value);
        return list;
    };
    const auto ks = or_base(grid.k, base.lda.k);
    const auto norms = or_base(grid.norm, base.train.norm);
    const auto rates = or_base(grid.learning_rate, base.train.learning_rate);
    const auto margins = or_base(grid.margin, base.train.margin);
    const auto deltas = or_base(grid.delta, base.delta);

    GridSearchResult result;
    const auto labels = labels_of(split.validation);
    EvalOptions eval;
    eval.methods = {kMethodOurs};
    for (int k : ks) {
        ModelOptions opt = base;
        opt.lda.k = k;
        const auto model = train_topic_model(corpus, split, opt.lda);
        for (double delta : deltas) {
            opt.delta = delta;
            const auto store = build_store(model, corpus, split, opt);
            for (Norm norm : norms)
                for (double rate : rates)
                    for (double margin : margins) {
                        opt.train.norm = norm;
                        opt.train.learning_rate = rate;
                        opt.train.margin = margin;
                        auto cfg = opt.train;
                        cfg.threads = opt.threads;
                        const auto trained = train_profiles(split, store, cfg, false);
                        const auto set = profile_set(trained, opt, false);
                        const auto report =
                            evaluate(rank_methods(split.validation, {}, &store, &set, nullptr, eval), labels);
                        const double mrr = report.at(kMethodOurs).mrr;
                        result.points.emplace_back(to_json(opt), mrr);
                        if (mrr > result.best_mrr) {
                            result.best_mrr = mrr;
                            result.best = opt;
                        }
                    }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// File-level commands. Each reads and writes the formats of the owning modules.

inline Corpus corpus_from(const std::vector<std::pair<std::string, std::string>>& docs) {
    Corpus c;
    for (const auto& [id, text] : docs) c.add(id, text);
    return c;
}

inline SynthOutput cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    auto s = generate(cfg);
    write_synth(s, out_dir);
    return s;
}

inline Prepared cmd_prepare(const std::filesystem::path& log_path, const std::filesystem::path& out_dir,
                            const PrepareOptions& opt) {
    const auto log = load_log(log_path, opt.n_results);
    auto prepared = prepare(log, opt);
    std::filesystem::create_directories(out_dir);
    write_labeled(out_dir / "train.jsonl", prepared.split.train);
    write_labeled(out_dir / "validation.jsonl", prepared.split.validation);
    write_labeled(out_dir / "test.jsonl", prepared.split.test);
    std::ofstream stats(out_dir / "stats.tsv");
    stats << prepared.stats.header() << '\n' << prepared.stats.row() << '\n';
    return prepared;
}

inline DatasetSplit load_split(const std::filesystem::path& data_dir) {
    return {load_labeled(data_dir / "train.jsonl"), load_labeled(data_dir / "validation.jsonl"),
            load_labeled(data_dir / "test.jsonl")};
}

inline constexpr const char* kProfilesFile = "profiles.json";
inline constexpr const char* kIdentityProfilesFile = "profiles_identity_w.json";

struct TrainCommandResult {
    ModelOptions options;  ///< after grid selection
    TrainedModels models;
    std::optional<GridSearchResult> grid;
};

/// Writes topic_model.json, embeddings.json, profiles.json and, with the
/// identity variant, profiles_identity_w.json.
inline TrainCommandResult cmd_train(const std::filesystem::path& corpus_path, const std::filesystem::path& data_dir,
                                    const std::filesystem::path& out_dir, const ModelOptions& base,
                                    const HyperGrid& grid, bool with_identity_variant) {
    const auto corpus = load_corpus(corpus_path);
    const auto split = load_split(data_dir);
    TrainCommandResult r;
    r.options = base;
    if (!grid.trivial()) {
        r.grid = grid_search(corpus, split, base, grid);
        r.options = r.grid->best;
    } else {
        if (!grid.k.empty()) r.options.lda.k = grid.k.front();
        if (!grid.norm.empty()) r.options.train.norm = grid.norm.front();
        if (!grid.learning_rate.empty()) r.options.train.learning_rate = grid.learning_rate.front();
        if (!grid.margin.empty()) r.options.train.margin = grid.margin.front();
        if (!grid.delta.empty()) r.options.delta = grid.delta.front();
    }
    r.models = train_models(corpus, split, r.options, with_identity_variant);

    std::filesystem::create_directories(out_dir);
    save_topic_model(r.models.topic_model, out_dir / "topic_model.json");
    save_embeddings(r.models.store, out_dir / "embeddings.json");
    save_profiles(profile_set(r.models.profiles, r.options, false), out_dir / kProfilesFile);
    if (r.models.identity_profiles) {
        save_profiles(profile_set(*r.models.identity_profiles, r.options, true), out_dir / kIdentityProfilesFile);
    }
    nlohmann::json selected = {{"options", to_json(r.options)}};
    if (r.grid) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& [cfg, mrr] : r.grid->points) pts.push_back({{"options", cfg}, {"validation_mrr", mrr}});
        selected["grid"] = pts;
        selected["validation_mrr"] = r.grid->best_mrr;
    }
    std::ofstream(out_dir / "training.json") << selected.dump(2) << '\n';
    return r;
}

/// Evaluates on the test split. Writes report.txt, metrics.json and one
/// rankings file per method.
inline EvalReport cmd_evaluate(const std::filesystem::path& data_dir, const std::filesystem::path& log_path,
                               const std::filesystem::path& model_dir, const std::filesystem::path& out_dir,
                               const EvalOptions& opt, bool per_query) {
    const auto test = load_labeled(data_dir / "test.jsonl");
    const auto log = load_log(log_path, 0);
    std::optional<EmbeddingStore> store;
    std::optional<ProfileSet> full, identity;
    if (std::filesystem::exists(model_dir / kProfilesFile)) full = load_profiles(model_dir / kProfilesFile);
    if (std::filesystem::exists(model_dir / kIdentityProfilesFile))
        identity = load_profiles(model_dir / kIdentityProfilesFile);
    if (full || identity) store = load_embeddings(model_dir / "embeddings.json");

    const auto rankings = rank_methods(test, log, store ? &*store : nullptr, full ? &*full : nullptr,
                                       identity ? &*identity : nullptr, opt);
    for (const auto& m : opt.methods) {
        bool present = false;
        for (const auto& [name, r] : rankings) present = present || name == m;
        if (!present) throw Error("method '" + m + "' requested but its profiles were not found in " + model_dir.string());
    }
    const auto report = evaluate(rankings, labels_of(test));

    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "report.txt") << render_table(report);
    std::ofstream(out_dir / "metrics.json") << metrics_json(report, per_query).dump(2) << '\n';
    for (const auto& [name, r] : rankings) write_rankings(out_dir / ("rankings_" + name + ".jsonl"), r);
    return report;
}

}  // namespace userembed
