// pplxprune: perplexity-based corpus pruning pipeline.
//
// Subcommands mirror the pipeline stages: ingest a raw corpus, split off a
// reference partition, train the reference n-gram model, score the training
// partition, select a percentile window, materialize the pruned corpus, and
// analyze the result. `pipeline` runs split through analyze in one go and is
// bit-identical to running the stages individually.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>

#include "pplxprune/analyzer.hpp"
#include "pplxprune/config.hpp"
#include "pplxprune/corpus.hpp"
#include "pplxprune/errors.hpp"
#include "pplxprune/evalagg.hpp"
#include "pplxprune/io.hpp"
#include "pplxprune/planner.hpp"
#include "pplxprune/reflm.hpp"
#include "pplxprune/scorer.hpp"
#include "pplxprune/selector.hpp"
#include "pplxprune/splitter.hpp"

namespace fs = std::filesystem;
using namespace pplxprune;

namespace {

// PPLXPRUNE_LOG={quiet,info,debug}; progress lines go to stderr so artifact
// consumers can pipe stdout.
int verbosity() {
    static int level = [] {
        const char* env = std::getenv("PPLXPRUNE_LOG");
        if (!env) return 1;
        std::string v(env);
        if (v == "quiet") return 0;
        if (v == "debug") return 2;
        return 1;
    }();
    return level;
}

void info(const std::string& line) {
    if (verbosity() >= 1) std::cerr << line << "\n";
}

// Every flag is optional; unset flags defer to the config file, which defers
// to the built-in defaults.
struct Flags {
    std::string config_path;
    std::optional<std::string> workdir;
    std::optional<std::string> corpus_dir;
    std::optional<uint64_t> seed;
    std::optional<int> workers;

    // ingest
    std::string input;
    std::optional<std::string> out_dir;
    std::string tokenizer = "bytes";
    std::optional<uint64_t> vocab_size;
    std::optional<std::string> corpus_name;
    std::optional<std::string> domain_field;
    std::optional<uint64_t> shard_size;

    // split / model / score
    std::optional<double> ref_fraction;
    std::optional<int> order;
    std::optional<double> add_k;
    std::vector<double> weights;
    std::optional<uint64_t> max_samples;

    // selection / materialize
    std::optional<std::string> criteria;
    std::optional<double> rate;
    bool external_sort = false;
    std::optional<uint64_t> sort_buffer;
    std::optional<std::string> pruned_name;

    // analysis
    std::optional<double> subsample_rate;
    std::optional<double> kde_bandwidth;
    std::optional<double> bin_width;

    // plan
    std::optional<uint64_t> param_count;
    std::optional<uint64_t> budget_tokens;
    std::optional<double> overtrain_factor;
    std::optional<uint64_t> available_tokens;
    std::optional<double> selection_rate;

    // eval-agg
    std::string evals_path;
    std::optional<std::string> scores_path;
};

PipelineConfig resolve_config(const Flags& f) {
    PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = PipelineConfig::load(f.config_path);
    if (f.workdir) cfg.workdir = *f.workdir;
    if (f.corpus_dir) cfg.corpus_dir = *f.corpus_dir;
    if (f.seed) cfg.seed = *f.seed;
    if (f.workers) cfg.workers = *f.workers;
    if (f.ref_fraction) cfg.ref_fraction = *f.ref_fraction;
    if (f.order) cfg.order = *f.order;
    if (f.add_k) cfg.add_k = *f.add_k;
    if (!f.weights.empty()) cfg.weights = f.weights;
    if (f.criteria) cfg.criteria = *f.criteria;
    if (f.rate) cfg.rate = *f.rate;
    if (f.subsample_rate) cfg.subsample_rate = *f.subsample_rate;
    if (f.param_count) cfg.param_count = *f.param_count;
    if (f.budget_tokens) cfg.budget_tokens = *f.budget_tokens;
    if (f.overtrain_factor) cfg.overtrain_factor = *f.overtrain_factor;
    if (f.max_samples) cfg.max_score_samples = *f.max_samples;
    cfg.validate();
    return cfg;
}

fs::path require_workdir(const PipelineConfig& cfg) {
    if (cfg.workdir.empty()) {
        throw ConfigError("a work directory is required (--workdir or the 'workdir' config key)");
    }
    return fs::path(cfg.workdir);
}

fs::path corpus_dir_for(const PipelineConfig& cfg) {
    if (!cfg.corpus_dir.empty()) return fs::path(cfg.corpus_dir);
    if (!cfg.workdir.empty()) return fs::path(cfg.workdir) / "corpus";
    throw ConfigError("a corpus directory is required (--corpus or the 'corpus' config key)");
}

CorpusManifest load_corpus(const PipelineConfig& cfg) {
    return CorpusManifest::load(corpus_dir_for(cfg) / artifact::corpus_manifest);
}

// Locks the work directory and echoes the resolved configuration into it,
// making the directory a self-describing experiment record.
struct Workspace {
    fs::path dir;
    DirLock lock;

    Workspace(const PipelineConfig& cfg, const fs::path& wd)
        : dir(wd), lock((fs::create_directories(wd), wd)) {
        cfg.save(wd / artifact::resolved_config);
    }
};

NGramConfig model_config(const PipelineConfig& cfg) {
    NGramConfig mc;
    mc.order = cfg.order;
    mc.add_k = cfg.add_k;
    mc.interpolation_weights = cfg.weights;
    return mc;
}

// --- pipeline stages -------------------------------------------------------
//
// Each stage reads its inputs from artifacts and writes one artifact, so a
// manual subcommand sequence and the `pipeline` composite execute exactly the
// same code against exactly the same bytes.

void step_split(const PipelineConfig& cfg, const fs::path& wd, const CorpusManifest& corpus) {
    SplitSpec spec;
    spec.seed = cfg.split_seed();
    spec.ref_fraction = cfg.ref_fraction;
    SplitManifest split = split_corpus(corpus, spec);
    split.save(wd / artifact::split_manifest);
    info("split: " + std::to_string(split.ref.samples) + " reference / " +
         std::to_string(split.train.samples) + " training samples");
}

void step_train_ref(const PipelineConfig& cfg, const fs::path& wd, const CorpusManifest& corpus) {
    SplitManifest split = SplitManifest::load(wd / artifact::split_manifest);
    std::unordered_set<std::string> ref_ids(split.ref_ids.begin(), split.ref_ids.end());
    SampleReader reader(corpus, &ref_ids);
    NGramModel model = train_reference_model(reader, model_config(cfg), corpus.vocab_size);
    model.save(wd / artifact::ref_model);
    info("train-ref: order-" + std::to_string(model.order()) + " model over " +
         std::to_string(model.total_tokens()) + " reference tokens");
}

void step_score(const PipelineConfig& cfg, const fs::path& wd, const CorpusManifest& corpus) {
    SplitManifest split = SplitManifest::load(wd / artifact::split_manifest);
    fs::path model_path = wd / artifact::ref_model;
    NGramModel model = NGramModel::load(model_path);
    ScoreOptions options;
    options.workers = cfg.workers;
    options.max_samples = cfg.max_score_samples;
    ScoreCacheMeta meta = score_corpus(corpus, split, model,
                                       "ngram:" + hash_file_hex(model_path), wd, options);
    info("score: " + std::to_string(meta.n_scored) + " of " +
         std::to_string(meta.n_expected) + " samples scored" +
         (meta.complete ? "" : " (cache incomplete)"));
}

void step_prune(const PipelineConfig& cfg, const fs::path& wd, bool external_sort,
                const std::optional<uint64_t>& sort_buffer) {
    SelectOptions options;
    options.sort = external_sort ? SortMode::external : SortMode::in_memory;
    if (sort_buffer) {
        if (*sort_buffer == 0) throw ConfigError("--sort-buffer must be positive");
        options.external_buffer_records = *sort_buffer;
    }
    PruneManifest prune =
        select_samples(wd / artifact::scores, parse_criteria(cfg.criteria), cfg.rate, options);
    prune.save(wd / artifact::prune_manifest);
    info("prune: kept " + std::to_string(prune.selected_ids.size()) + " of " +
         std::to_string(prune.n_candidates) + " samples (" + prune.criteria +
         ", rate " + std::to_string(cfg.rate) + ")");
}

void step_materialize(const fs::path& wd, const CorpusManifest& corpus,
                      const std::optional<std::string>& out_dir,
                      const std::optional<std::string>& pruned_name) {
    PruneManifest prune = PruneManifest::load(wd / artifact::prune_manifest);
    if (prune.corpus_name != corpus.name) {
        throw DataError("prune manifest was computed for corpus '" + prune.corpus_name +
                        "' but the corpus here is '" + corpus.name + "'");
    }
    fs::path out = out_dir ? fs::path(*out_dir) : wd / artifact::pruned_dir;
    MaterializeStats stats;
    CorpusManifest pruned =
        materialize_pruned(corpus, prune, out, pruned_name.value_or(""), &stats);
    info("materialize: wrote '" + pruned.name + "' (" + std::to_string(stats.samples) +
         " samples, " + std::to_string(stats.tokens) + " tokens) to " + out.string());
}

void step_analyze(const PipelineConfig& cfg, const fs::path& wd, const CorpusManifest& corpus,
                  const DistributionOptions& dist_options) {
    std::optional<PruneManifest> prune;
    if (fs::exists(wd / artifact::prune_manifest)) {
        prune = PruneManifest::load(wd / artifact::prune_manifest);
    }
    const PruneManifest* prune_ptr = prune ? &*prune : nullptr;

    DomainReport domains = domain_composition(corpus, prune_ptr);
    domains.save_csv(wd / artifact::domains_csv);

    fs::path scores = wd / artifact::scores;
    DistributionReport pre =
        pplx_distribution(scores, cfg.subsample_rate, cfg.subsample_seed(), nullptr, dist_options);
    pre.save(wd / artifact::pplx_dist);
    if (prune_ptr) {
        DistributionReport post = pplx_distribution(scores, cfg.subsample_rate,
                                                    cfg.subsample_seed(), prune_ptr, dist_options);
        post.save(wd / artifact::pplx_dist_pruned);
    }
    info("analyze: " + std::to_string(domains.rows.size()) + " domains, " +
         std::to_string(pre.subsample_size) + " subsampled scores" +
         (prune_ptr ? " (pre and post selection)" : ""));
}

// --- subcommand runners ----------------------------------------------------

void run_ingest(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    fs::path out = f.out_dir ? fs::path(*f.out_dir) : corpus_dir_for(cfg);
    fs::create_directories(out);
    DirLock lock(out);

    Tokenizer tokenizer = Tokenizer::from_name(f.tokenizer, f.vocab_size);
    IngestOptions options;
    if (f.corpus_name) options.name = *f.corpus_name;
    if (f.domain_field) options.domain_field = *f.domain_field;
    if (f.shard_size) options.shard_max_samples = *f.shard_size;

    IngestStats stats;
    CorpusManifest manifest = ingest(f.input, tokenizer, out, options, &stats);
    info("ingest: " + std::to_string(stats.accepted) + " samples accepted, " +
         std::to_string(stats.rejected) + " rejected, " +
         std::to_string(manifest.total_tokens) + " tokens in " +
         std::to_string(manifest.shard_paths.size()) + " shards");
}

void run_split(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    step_split(cfg, ws.dir, load_corpus(cfg));
}

void run_train_ref(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    step_train_ref(cfg, ws.dir, load_corpus(cfg));
}

void run_score(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    step_score(cfg, ws.dir, load_corpus(cfg));
}

void run_prune(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    step_prune(cfg, ws.dir, f.external_sort, f.sort_buffer);
}

void run_materialize(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    step_materialize(ws.dir, load_corpus(cfg), f.out_dir, f.pruned_name);
}

DistributionOptions dist_options(const Flags& f) {
    DistributionOptions options;
    if (f.kde_bandwidth) options.bandwidth_override = *f.kde_bandwidth;
    if (f.bin_width) options.bin_width_override = *f.bin_width;
    return options;
}

void run_analyze(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    step_analyze(cfg, ws.dir, load_corpus(cfg), dist_options(f));
}

void run_plan(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));

    PlanInputs inputs;
    inputs.param_count = cfg.param_count;
    inputs.budget_tokens = cfg.budget_tokens;
    inputs.overtrain_factor = cfg.overtrain_factor;
    inputs.selection_rate = f.selection_rate.value_or(cfg.rate);
    inputs.seed = cfg.epoch_seed();
    if (f.available_tokens) {
        inputs.available_tokens = *f.available_tokens;
    } else {
        inputs.available_tokens = load_corpus(cfg).total_tokens;
    }

    BudgetPlan plan_result = plan(inputs);
    plan_result.save(ws.dir / artifact::plan);

    char buf[64];
    auto row = [&](const char* label, const std::string& value) {
        std::snprintf(buf, sizeof buf, "%-24s", label);
        std::cout << buf << value << "\n";
    };
    row("budget_tokens", std::to_string(plan_result.budget_tokens));
    row("available_tokens", std::to_string(plan_result.available_tokens));
    row("selection_rate", std::to_string(plan_result.selection_rate));
    row("repeats_raw", std::to_string(plan_result.repeats_raw));
    row("repeats_effective", std::to_string(plan_result.repeats_effective) +
                                 (plan_result.exceeds_repeat_threshold
                                      ? "  (beyond the 4-repeat diminishing-returns point)"
                                      : ""));
    row("epochs", std::to_string(plan_result.epoch_schedule.size()));
}

void run_eval_agg(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));

    EvalSummary summary = aggregate(load_eval_records(f.evals_path));
    if (f.scores_path) summary.corpus_pplx = corpus_perplexity(*f.scores_path);
    summary.save(ws.dir / artifact::eval_summary);
    summary.save_csv(ws.dir / artifact::eval_csv);

    char buf[64];
    for (const CategoryMean& cat : summary.categories) {
        std::snprintf(buf, sizeof buf, "%8.2f  ", cat.mean);
        std::cout << buf << cat.category << " (" << cat.n_tasks << " tasks)\n";
    }
    std::snprintf(buf, sizeof buf, "%8.2f  ", summary.overall);
    std::cout << buf << "overall\n";
    if (summary.corpus_pplx) {
        std::snprintf(buf, sizeof buf, "%8.4f  ", *summary.corpus_pplx);
        std::cout << buf << "corpus perplexity (token-weighted)\n";
    }
}

void run_pipeline(const Flags& f) {
    PipelineConfig cfg = resolve_config(f);
    Workspace ws(cfg, require_workdir(cfg));
    CorpusManifest corpus = load_corpus(cfg);
    step_split(cfg, ws.dir, corpus);
    step_train_ref(cfg, ws.dir, corpus);
    step_score(cfg, ws.dir, corpus);
    step_prune(cfg, ws.dir, f.external_sort, f.sort_buffer);
    step_materialize(ws.dir, corpus, f.out_dir, f.pruned_name);
    step_analyze(cfg, ws.dir, corpus, dist_options(f));
}

void add_common_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--workdir", f.workdir, "work directory for artifacts");
    cmd->add_option("--seed", f.seed, "global seed; all randomness derives from it");
}

void add_corpus_flag(CLI::App* cmd, Flags& f) {
    cmd->add_option("--corpus", f.corpus_dir, "ingested corpus directory");
}

void add_model_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--order", f.order, "n-gram order of the reference model");
    cmd->add_option("--add-k", f.add_k, "add-k smoothing constant");
    cmd->add_option("--weights", f.weights, "interpolation weights, low order first")
        ->expected(-1);
}

void add_selection_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--criteria", f.criteria, "which perplexity band to keep")
        ->check(CLI::IsMember({"low", "medium", "high"}));
    cmd->add_option("--rate", f.rate, "selection rate in (0, 1)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"perplexity-based corpus pruning"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "pplxprune 0.1.0");

    Flags f;

    CLI::App* ingest = app.add_subcommand(
        "ingest", "convert a raw jsonl corpus into validated shards + manifest");
    add_common_flags(ingest, f);
    add_corpus_flag(ingest, f);
    ingest->add_option("--input", f.input, "raw jsonl file: {id, domain, text|tokens}")
        ->required();
    ingest->add_option("--out", f.out_dir, "output corpus directory (default: corpus dir)");
    ingest->add_option("--tokenizer", f.tokenizer, "bytes|passthrough (default bytes)");
    ingest->add_option("--vocab-size", f.vocab_size, "vocabulary size (passthrough only)");
    ingest->add_option("--name", f.corpus_name, "corpus name (default: input file stem)");
    ingest->add_option("--domain-field", f.domain_field, "raw field holding the domain label");
    ingest->add_option("--shard-size", f.shard_size, "max samples per shard");
    ingest->callback([&] { run_ingest(f); });

    CLI::App* split = app.add_subcommand(
        "split", "partition the corpus into reference and training sets");
    add_common_flags(split, f);
    add_corpus_flag(split, f);
    split->add_option("--ref-fraction", f.ref_fraction, "reference fraction in (0, 1)");
    split->callback([&] { run_split(f); });

    CLI::App* train_ref = app.add_subcommand(
        "train-ref", "train the reference n-gram model on the reference split");
    add_common_flags(train_ref, f);
    add_corpus_flag(train_ref, f);
    add_model_flags(train_ref, f);
    train_ref->callback([&] { run_train_ref(f); });

    CLI::App* score = app.add_subcommand(
        "score", "score the training split with the reference model (resumable)");
    add_common_flags(score, f);
    add_corpus_flag(score, f);
    score->add_option("--workers", f.workers, "scoring threads");
    score->add_option("--max-samples", f.max_samples,
                      "score at most this many new samples, then stop (0 = all)");
    score->callback([&] { run_score(f); });

    CLI::App* prune = app.add_subcommand(
        "prune", "select the configured percentile window of the score distribution");
    add_common_flags(prune, f);
    add_selection_flags(prune, f);
    prune->add_flag("--external-sort", f.external_sort,
                    "rank scores via on-disk merge sort instead of in memory");
    prune->add_option("--sort-buffer", f.sort_buffer,
                      "records per external-sort run (forces spilling when small)");
    prune->callback([&] { run_prune(f); });

    CLI::App* materialize = app.add_subcommand(
        "materialize", "write the selected samples as a new corpus");
    add_common_flags(materialize, f);
    add_corpus_flag(materialize, f);
    materialize->add_option("--out", f.out_dir, "output directory (default: <workdir>/pruned)");
    materialize->add_option("--name", f.pruned_name,
                            "pruned corpus name (default: '<corpus>-pruned')");
    materialize->callback([&] { run_materialize(f); });

    CLI::App* analyze = app.add_subcommand(
        "analyze", "domain composition and log2-perplexity distribution reports");
    add_common_flags(analyze, f);
    add_corpus_flag(analyze, f);
    analyze->add_option("--subsample-rate", f.subsample_rate,
                        "fraction of scores entering the distribution estimate");
    analyze->add_option("--kde-bandwidth", f.kde_bandwidth,
                        "fixed KDE bandwidth (default: Silverman's rule)");
    analyze->add_option("--bin-width", f.bin_width,
                        "fixed histogram bin width (default: Freedman-Diaconis)");
    analyze->callback([&] { run_analyze(f); });

    CLI::App* plan_cmd = app.add_subcommand(
        "plan", "token-budget arithmetic: repeats over the pruned pool + epoch seeds");
    add_common_flags(plan_cmd, f);
    add_corpus_flag(plan_cmd, f);
    plan_cmd->add_option("--param-count", f.param_count,
                         "model parameters (budget = 20 * params * overtrain)");
    plan_cmd->add_option("--budget-tokens", f.budget_tokens, "explicit token budget");
    plan_cmd->add_option("--overtrain", f.overtrain_factor, "over-training multiplier >= 1");
    plan_cmd->add_option("--available-tokens", f.available_tokens,
                         "pool size before pruning (default: corpus total)");
    plan_cmd->add_option("--selection-rate", f.selection_rate,
                         "selection rate for the effective-repeat count, in (0, 1]");
    plan_cmd->callback([&] { run_plan(f); });

    CLI::App* eval_agg = app.add_subcommand(
        "eval-agg", "aggregate benchmark accuracies into category/overall scores");
    add_common_flags(eval_agg, f);
    eval_agg->add_option("--evals", f.evals_path,
                         "jsonl of {task, category, accuracy, random_baseline}")
        ->required();
    eval_agg->add_option("--scores", f.scores_path,
                         "score cache for token-weighted corpus perplexity");
    eval_agg->callback([&] { run_eval_agg(f); });

    CLI::App* pipeline = app.add_subcommand(
        "pipeline", "split, train-ref, score, prune, materialize, analyze");
    add_common_flags(pipeline, f);
    add_corpus_flag(pipeline, f);
    pipeline->add_option("--ref-fraction", f.ref_fraction, "reference fraction in (0, 1)");
    add_model_flags(pipeline, f);
    pipeline->add_option("--workers", f.workers, "scoring threads");
    pipeline->add_option("--max-samples", f.max_samples,
                         "score at most this many new samples, then stop (0 = all)");
    add_selection_flags(pipeline, f);
    pipeline->add_flag("--external-sort", f.external_sort,
                       "rank scores via on-disk merge sort instead of in memory");
    pipeline->add_option("--out", f.out_dir, "pruned corpus directory");
    pipeline->add_option("--name", f.pruned_name, "pruned corpus name");
    pipeline->add_option("--subsample-rate", f.subsample_rate,
                         "fraction of scores entering the distribution estimate");
    pipeline->add_option("--kde-bandwidth", f.kde_bandwidth,
                         "fixed KDE bandwidth (default: Silverman's rule)");
    pipeline->add_option("--bin-width", f.bin_width,
                         "fixed histogram bin width (default: Freedman-Diaconis)");
    pipeline->callback([&] { run_pipeline(f); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::config_error);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config_error);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::data_error);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::internal_error);
    }
    return static_cast<int>(ExitCode::ok);
}
