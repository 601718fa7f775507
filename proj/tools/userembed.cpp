// Command-line front end: synth, prepare, train, evaluate, run.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "userembed/pipeline.hpp"

namespace fs = std::filesystem;
using namespace userembed;

namespace {

struct RunConfig {
    SynthConfig synth;
    PrepareOptions prepare;
    ModelOptions model;
    HyperGrid grid;
    EvalOptions eval;

    std::vector<std::string> blocklist{"facebook", "youtube"};
    std::vector<int> grid_norm;
    int norm_order = 1;
    bool identity_variant = false;
    bool per_query = false;

    fs::path out = "out";
    fs::path log_path;
    fs::path corpus_path;
    fs::path data_dir;
    fs::path model_dir;

    void resolve() {
        prepare.domain_blocklist = std::set<std::string>(blocklist.begin(), blocklist.end());
        model.train.norm = norm_from_order(norm_order);
        model.train.threads = model.threads;
        eval.session_gap = prepare.session_gap;
        eval.dwell_threshold = prepare.dwell_threshold;
        grid.norm.clear();
        for (int n : grid_norm) grid.norm.push_back(norm_from_order(n));
    }
};

void add_synth_options(CLI::App* app, RunConfig& c) {
    auto& s = c.synth;
    app->add_option("--users", s.n_users, "Number of users")->capture_default_str();
    app->add_option("--topics-true", s.n_topics_true, "Planted topic count")->capture_default_str();
    app->add_option("--vocab-size", s.vocab_size, "Vocabulary size")->capture_default_str();
    app->add_option("--docs", s.n_docs, "Number of documents")->capture_default_str();
    app->add_option("--sessions-per-user", s.n_sessions_per_user, "Sessions per user")->capture_default_str();
    app->add_option("--entries-per-session", s.entries_per_session, "Entries per session")->capture_default_str();
    app->add_option("--results", s.n_results, "Results per entry")->capture_default_str();
    app->add_option("--interest-concentration", s.user_interest_concentration,
                    "Higher values focus users on fewer topics")
        ->capture_default_str();
    app->add_option("--click-noise", s.click_noise, "Probability a SAT click lands on a random result")
        ->capture_default_str();
    app->add_option("--repeat-click-rate", s.repeat_click_rate, "Probability an entry re-clicks an earlier document")
        ->capture_default_str();
    app->add_option("--preferred-facets", s.preferred_facets, "Preferred facets per (user, query topic)")
        ->capture_default_str();
    app->add_option("--doc-length", s.doc_length, "Mean document length in tokens")->capture_default_str();
    app->add_option("--synth-seed", s.seed, "Generator seed")->capture_default_str();
}

void add_prepare_options(CLI::App* app, RunConfig& c) {
    app->add_option("--gap", c.prepare.session_gap, "Session inactivity gap in seconds")->capture_default_str();
    app->add_option("--dwell", c.prepare.dwell_threshold, "SAT dwell threshold in seconds")->capture_default_str();
    app->add_option("--blocklist", c.blocklist, "Navigational queries to drop")->delimiter(',')->capture_default_str();
    app->add_option("--split-seed", c.prepare.seed, "Seed of the test/validation coin")->capture_default_str();
    app->add_option("--n-results", c.prepare.n_results, "Expected results per entry (0 = any)")->capture_default_str();
}

void add_train_options(CLI::App* app, RunConfig& c) {
    auto& m = c.model;
    app->add_option("--k", m.lda.k, "Topic count / embedding dimension")->capture_default_str();
    app->add_option("--lda-iterations", m.lda.iterations, "Gibbs sweeps for training")->capture_default_str();
    app->add_option("--lda-alpha", m.lda.alpha, "Document-topic prior (<= 0 selects 50/k)")->capture_default_str();
    app->add_option("--lda-beta", m.lda.beta, "Topic-word prior")->capture_default_str();
    app->add_option("--lda-seed", m.lda.seed, "LDA training seed")->capture_default_str();
    app->add_option("--infer-iterations", m.infer.iterations, "Gibbs sweeps for inference")->capture_default_str();
    app->add_option("--infer-burn-in", m.infer.burn_in, "Inference burn-in sweeps")->capture_default_str();
    app->add_option("--infer-seed", m.infer.seed, "Inference seed")->capture_default_str();
    app->add_option("--delta", m.delta, "Rank decay of the query mixture")->capture_default_str();
    app->add_option("--norm", c.norm_order, "Score norm: 1 or 2")->check(CLI::IsMember({1, 2}))->capture_default_str();
    app->add_option("--margin", m.train.margin, "Hinge margin")->capture_default_str();
    app->add_option("--rate", m.train.learning_rate, "SGD learning rate")->capture_default_str();
    app->add_option("--epochs", m.train.epochs_per_phase, "Epochs per training phase")->capture_default_str();
    app->add_option("--negatives", m.train.negatives_per_positive, "Corruptions per correct triple")
        ->capture_default_str();
    app->add_option("--seed", m.train.seed, "Profile training seed")->capture_default_str();
    app->add_option("--grid-k", c.grid.k, "Grid over k")->delimiter(',');
    app->add_option("--grid-norm", c.grid_norm, "Grid over norm order")->delimiter(',');
    app->add_option("--grid-rate", c.grid.learning_rate, "Grid over learning rate")->delimiter(',');
    app->add_option("--grid-margin", c.grid.margin, "Grid over margin")->delimiter(',');
    app->add_option("--grid-delta", c.grid.delta, "Grid over decay")->delimiter(',');
}

void add_eval_options(CLI::App* app, RunConfig& c) {
    app->add_option("--methods", c.eval.methods, "Methods to compare")->delimiter(',')->capture_default_str();
    app->add_flag("--per-query", c.per_query, "Emit per-query reciprocal ranks");
    app->add_flag("--ci-sat-only", c.eval.ci_sat_only, "CI promotes SAT-clicked documents only");
}

void echo_config(const CLI::App& app, const RunConfig& c) {
    std::cout << "# resolved configuration\nthreads=" << c.model.threads << '\n';
    for (const auto* sub : app.get_subcommands()) {
        std::cout << '[' << sub->get_name() << "]\n" << sub->config_to_str(true, false);
    }
    std::cout << std::flush;
}

void print_warnings(const TrainedModels& m) {
    for (const auto& w : m.profiles.warnings) std::cerr << "warning: " << w << '\n';
    if (!m.missing_documents.empty()) {
        std::cerr << "warning: " << m.missing_documents.size()
                  << " result documents absent from the corpus; using uniform embeddings\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embedding-based search personalization"};
    app.set_config("--config", "", "INI/TOML configuration file; flags override it");
    app.require_subcommand(1);
    RunConfig c;
    app.add_option("--threads", c.model.threads, "Worker threads (0 = all cores)")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus, query log and ground truth");
    add_synth_options(synth, c);
    synth->add_option("--out", c.out, "Output directory")->capture_default_str();

    auto* prep = app.add_subcommand("prepare", "Segment, label, filter and split a query log");
    prep->add_option("--log", c.log_path, "Query log (JSON lines)")->required();
    add_prepare_options(prep, c);
    prep->add_option("--out", c.out, "Output directory")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train the topic model, embeddings and user profiles");
    train->add_option("--corpus", c.corpus_path, "Document corpus (JSON lines)")->required();
    train->add_option("--data", c.data_dir, "Directory written by prepare")->required();
    add_train_options(train, c);
    train->add_flag("--ablation-identity-w", c.identity_variant,
                    "Also train profiles with identity projections (profiles_identity_w.json)");
    train->add_option("--out", c.out, "Output directory")->capture_default_str();

    auto* eval = app.add_subcommand("evaluate", "Compare rankings on the test split");
    eval->add_option("--data", c.data_dir, "Directory written by prepare")->required();
    eval->add_option("--log", c.log_path, "Full query log, for click history")->required();
    eval->add_option("--model", c.model_dir, "Directory written by train")->required();
    eval->add_option("--gap", c.prepare.session_gap, "Session gap for the CI click history")->capture_default_str();
    eval->add_option("--dwell", c.prepare.dwell_threshold, "SAT dwell for the CI click history")
        ->capture_default_str();
    add_eval_options(eval, c);
    eval->add_option("--out", c.out, "Output directory")->capture_default_str();

    auto* run = app.add_subcommand("run", "synth, prepare, train (both variants) and evaluate in one go");
    add_synth_options(run, c);
    add_prepare_options(run, c);
    add_train_options(run, c);
    add_eval_options(run, c);
    run->add_option("--out", c.out, "Output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        c.resolve();
        echo_config(app, c);
        if (synth->parsed()) {
            const auto s = cmd_synth(c.synth, c.out);
            std::cout << "wrote " << s.corpus.size() << " documents and " << s.log.size() << " log entries to "
                      << c.out << '\n';
        } else if (prep->parsed()) {
            const auto p = cmd_prepare(c.log_path, c.out, c.prepare);
            std::cout << p.stats.header() << '\n' << p.stats.row() << '\n';
            std::cout << "train " << p.split.train.size() << ", validation " << p.split.validation.size()
                      << ", test " << p.split.test.size() << '\n';
        } else if (train->parsed()) {
            const auto r = cmd_train(c.corpus_path, c.data_dir, c.out, c.model, c.grid, c.identity_variant);
            print_warnings(r.models);
            if (r.grid) std::cout << "selected by validation MRR " << r.grid->best_mrr << '\n';
            std::cout << to_json(r.options).dump() << '\n';
        } else if (eval->parsed()) {
            const auto report = cmd_evaluate(c.data_dir, c.log_path, c.model_dir, c.out, c.eval, c.per_query);
            std::cout << render_table(report);
        } else if (run->parsed()) {
            cmd_synth(c.synth, c.out / "synth");
            cmd_prepare(c.out / "synth" / "log.jsonl", c.out / "data", c.prepare);
            const auto r = cmd_train(c.out / "synth" / "corpus.jsonl", c.out / "data", c.out / "model", c.model,
                                     c.grid, true);
            print_warnings(r.models);
            const auto report =
                cmd_evaluate(c.out / "data", c.out / "synth" / "log.jsonl", c.out / "model", c.out / "eval", c.eval,
                             c.per_query);
            std::cout << render_table(report);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
