#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "frustra/artifact.hpp"
#include "frustra/error.hpp"
#include "frustra/eval.hpp"
#include "frustra/features.hpp"
#include "frustra/ingest.hpp"
#include "frustra/labeling.hpp"
#include "frustra/models_sequence.hpp"
#include "frustra/models_tabular.hpp"
#include "frustra/sessionize.hpp"
#include "frustra/text.hpp"
#include "frustra/transform.hpp"

namespace frustra {

inline constexpr std::array<std::string_view, 4> model_families{"logreg", "rf", "gbdt", "lstm"};

inline void require_family(std::string_view family) {
    if (std::find(model_families.begin(), model_families.end(), family) == model_families.end()) {
        throw ConfigError("unknown model family '" + std::string(family) + "' (expected logreg, rf, gbdt or lstm)");
    }
}

/// "," , "tab" or a single character.
inline char parse_delimiter(std::string_view text) {
    if (text == "tab" || text == "\\t" || text == "\t") return '\t';
    if (text.size() == 1) return text.front();
    throw ConfigError("delimiter must be a single character or 'tab'");
}

inline std::vector<std::size_t> parse_windows(std::string_view text) {
    std::vector<std::size_t> out;
    for (const auto& part : split_delimited(text, ',')) {
        const auto v = parse_number<std::size_t>(trim(part));
        if (!v || *v == 0) throw ConfigError("window list must hold positive integers, got '" + std::string(text) + "'");
        out.push_back(*v);
    }
    if (out.empty()) throw ConfigError("window list is empty");
    return out;
}

// ---------------------------------------------------------------------------
// Hyperparameters from `key=value` sections

inline LogisticConfig logistic_config(const KeyValueConfig& c) {
    c.require_known({"l2", "max_iters", "tol"}, "logreg");
    LogisticConfig cfg;
    cfg.l2 = c.number_or("l2", cfg.l2);
    cfg.max_iters = c.number_or("max_iters", cfg.max_iters);
    cfg.tol = c.number_or("tol", cfg.tol);
    if (cfg.l2 < 0 || cfg.max_iters == 0) throw ConfigError("logreg: l2 must be >= 0 and max_iters >= 1");
    return cfg;
}

inline ForestConfig forest_config(const KeyValueConfig& c, std::uint64_t seed, unsigned threads) {
    c.require_known({"trees", "features_per_split", "max_depth", "min_leaf"}, "rf");
    ForestConfig cfg;
    cfg.trees = c.number_or("trees", cfg.trees);
    cfg.features_per_split = c.number_or("features_per_split", cfg.features_per_split);
    cfg.max_depth = c.number_or("max_depth", cfg.max_depth);
    cfg.min_leaf = c.number_or("min_leaf", cfg.min_leaf);
    cfg.seed = seed;
    cfg.threads = threads;
    if (cfg.trees == 0 || cfg.min_leaf == 0) throw ConfigError("rf: trees and min_leaf must be >= 1");
    return cfg;
}

inline BoostedConfig boosted_config(const KeyValueConfig& c) {
    c.require_known({"rounds", "learning_rate", "max_depth", "lambda", "min_child_weight", "early_stop"}, "gbdt");
    BoostedConfig cfg;
    cfg.rounds = c.number_or("rounds", cfg.rounds);
    cfg.learning_rate = c.number_or("learning_rate", cfg.learning_rate);
    cfg.max_depth = c.number_or("max_depth", cfg.max_depth);
    cfg.lambda = c.number_or("lambda", cfg.lambda);
    cfg.min_child_weight = c.number_or("min_child_weight", cfg.min_child_weight);
    cfg.early_stop = c.number_or("early_stop", cfg.early_stop);
    if (cfg.rounds == 0 || !(cfg.learning_rate > 0) || cfg.lambda < 0) {
        throw ConfigError("gbdt: rounds >= 1, learning_rate > 0 and lambda >= 0 required");
    }
    return cfg;
}

inline LstmConfig lstm_config(const KeyValueConfig& c, std::uint64_t seed, unsigned threads) {
    c.require_known({"embed_dim", "hidden_dim", "lr", "batch", "max_epochs", "patience", "grad_clip"}, "lstm");
    LstmConfig cfg;
    cfg.embed_dim = c.number_or("embed_dim", cfg.embed_dim);
    cfg.hidden_dim = c.number_or("hidden_dim", cfg.hidden_dim);
    cfg.lr = c.number_or("lr", cfg.lr);
    cfg.batch = c.number_or("batch", cfg.batch);
    cfg.max_epochs = c.number_or("max_epochs", cfg.max_epochs);
    cfg.patience = c.number_or("patience", cfg.patience);
    cfg.grad_clip = c.number_or("grad_clip", cfg.grad_clip);
    cfg.seed = seed;
    cfg.threads = threads;
    if (cfg.max_epochs == 0 || !(cfg.lr > 0)) throw ConfigError("lstm: max_epochs >= 1 and lr > 0 required");
    return cfg;
}

// ---------------------------------------------------------------------------
// Training and evaluation entry points shared by the CLI and the pipeline

struct TrainOutcome {
    ModelArtifact artifact;
    LossCurve curve;
};

inline TrainOutcome train_tabular(std::string_view family, const FeatureMatrix& train, const FeatureMatrix* val,
                                  const KeyValueConfig& hyper, std::uint64_t seed, unsigned threads,
                                  std::string config_hash) {
    require_family(family);
    TrainOutcome out;
    auto& a = out.artifact;
    a.config_hash = std::move(config_hash);
    a.input_tag = columns_tag(train.columns());
    a.feature_names = train.columns();
    a.training_meta["train_rows"] = train.rows();
    a.training_meta["seed"] = seed;
    if (family == "logreg") {
        auto fit = train_logistic(train, val, logistic_config(hyper.section("logreg.")));
        a.training_meta["iterations"] = fit.curve.train.size();
        a.model = std::move(fit.model);
        out.curve = std::move(fit.curve);
    } else if (family == "rf") {
        auto model = train_forest(train, forest_config(hyper.section("rf."), seed, threads));
        a.training_meta["trees"] = model.trees.size();
        a.model = std::move(model);
    } else if (family == "gbdt") {
        auto fit = train_boosted(train, val, boosted_config(hyper.section("gbdt.")));
        a.training_meta["best_iteration"] = fit.model.best_iteration;
        a.model = std::move(fit.model);
        out.curve = std::move(fit.curve);
    } else {
        throw ConfigError("lstm trains on labeled sequences, not on a feature matrix");
    }
    return out;
}

inline std::vector<SymbolSequence> sequences_of(const std::vector<LabeledSession>& sessions) {
    std::vector<SymbolSequence> out;
    out.reserve(sessions.size());
    for (const auto& s : sessions) out.push_back(s.truncated_symbols);
    return out;
}

inline std::vector<int> labels_of(const std::vector<LabeledSession>& sessions) {
    std::vector<int> out;
    out.reserve(sessions.size());
    for (const auto& s : sessions) out.push_back(s.label);
    return out;
}

inline TrainOutcome train_sequence(const std::vector<LabeledSession>& train, const std::vector<LabeledSession>& val,
                                   const KeyValueConfig& hyper, std::uint64_t seed, unsigned threads,
                                   std::string config_hash) {
    const auto cfg = lstm_config(hyper.section("lstm."), seed, threads);
    const auto tr = sequences_of(train);
    const auto va = sequences_of(val);
    const auto trl = labels_of(train);
    const auto val_labels = labels_of(val);
    auto fit = train_lstm(tr, trl, va, val_labels, cfg);
    TrainOutcome out;
    auto& a = out.artifact;
    a.config_hash = std::move(config_hash);
    a.input_tag = std::string(sequence_input_tag);
    a.training_meta["train_rows"] = train.size();
    a.training_meta["seed"] = seed;
    a.training_meta["best_epoch"] = fit.best_epoch;
    a.training_meta["lr"] = cfg.lr;
    a.training_meta["batch"] = cfg.batch;
    a.model = std::move(fit.model);
    out.curve = std::move(fit.curve);
    return out;
}

inline void write_curve(std::ostream& out, const std::vector<double>& losses) {
    out << "step\tlogloss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) out << i + 1 << '\t' << format_double(losses[i]) << '\n';
}

struct Evaluation {
    MetricsReport report;
    std::vector<RocPoint> roc;
    std::vector<double> scores;
};

inline Evaluation finish_evaluation(std::span<const int> labels, std::vector<double> scores) {
    Evaluation e;
    e.report = evaluate_scores(labels, scores);
    if (e.report.roc_auc) e.roc = roc_curve(labels, scores);
    e.scores = std::move(scores);
    return e;
}

inline Evaluation evaluate_matrix(const ModelArtifact& a, const FeatureMatrix& data) {
    check_matrix_compatible(a, data);
    return finish_evaluation(data.labels(), predict_proba(a.tabular(), data));
}

inline Evaluation evaluate_sequences(const ModelArtifact& a, const std::vector<LabeledSession>& data, unsigned threads) {
    if (!a.is_sequence()) throw DataError("a tabular model cannot score labeled sequences; pass a feature matrix");
    const auto seqs = sequences_of(data);
    const auto labels = labels_of(data);
    return finish_evaluation(labels, predict_proba(std::get<LstmModel>(a.model), seqs, threads));
}

// ---------------------------------------------------------------------------
// End-to-end run

/// Everything `run` needs, read from one `key=value` file.
struct PipelineConfig {
    std::filesystem::path events;
    std::filesystem::path work_dir = "frustra-run";
    Schema schema;
    char delimiter = ',';
    RuleConfig rules;
    SplitSpec split;
    std::string model = "gbdt";
    /// Sections logreg.*, rf.*, gbdt.* and lstm.*.
    KeyValueConfig hyper;
    std::vector<std::size_t> windows = default_windows();
    int tz_offset_minutes = 0;
    std::uint64_t seed = 42;
    unsigned threads = 1;
    /// Hash of every key except `threads` and `work_dir`, which do not affect outputs.
    std::string config_hash;

    static PipelineConfig from_config(const KeyValueConfig& cfg) {
        static constexpr std::array<std::string_view, 5> sections{"schema.", "rules.", "logreg.", "rf.", "gbdt."};
        KeyValueConfig hashed;
        for (const auto& [k, v] : cfg.entries()) {
            const bool sectioned = k.rfind("lstm.", 0) == 0 || k.rfind("split.", 0) == 0 ||
                                   std::any_of(sections.begin(), sections.end(),
                                               [&](std::string_view s) { return k.rfind(s, 0) == 0; });
            static constexpr std::array<std::string_view, 8> top{
                "events", "work_dir", "delimiter", "model", "windows", "tz_offset_minutes", "seed", "threads"};
            if (!sectioned && std::find(top.begin(), top.end(), k) == top.end()) {
                throw ConfigError("unknown pipeline config key '" + k + "'");
            }
            if (k != "threads" && k != "work_dir") hashed.set(k, v);
        }
        PipelineConfig p;
        const auto events = cfg.get("events");
        if (!events || events->empty()) throw ConfigError("pipeline config needs 'events'");
        p.events = *events;
        p.work_dir = cfg.get_or("work_dir", p.work_dir.string());
        p.schema = Schema::from_config(cfg.section("schema."));
        p.delimiter = parse_delimiter(cfg.get_or("delimiter", ","));
        p.rules = RuleConfig::from_config(cfg.section("rules."));
        const auto split = cfg.section("split.");
        split.require_known({"train", "val", "test"}, "split");
        p.split.train_frac = split.number_or("train", p.split.train_frac);
        p.split.val_frac = split.number_or("val", p.split.val_frac);
        p.split.test_frac = split.number_or("test", p.split.test_frac);
        p.model = cfg.get_or("model", p.model);
        require_family(p.model);
        p.hyper = cfg;
        if (const auto w = cfg.get("windows")) p.windows = parse_windows(*w);
        p.tz_offset_minutes = cfg.number_or("tz_offset_minutes", p.tz_offset_minutes);
        p.seed = cfg.number_or("seed", p.seed);
        p.split.seed = p.seed;
        p.split.validate();
        p.threads = cfg.number_or("threads", p.threads);
        // Validate the chosen family's section up front.
        if (p.model == "logreg") logistic_config(cfg.section("logreg."));
        if (p.model == "rf") forest_config(cfg.section("rf."), p.seed, p.threads);
        if (p.model == "gbdt") boosted_config(cfg.section("gbdt."));
        if (p.model == "lstm") lstm_config(cfg.section("lstm."), p.seed, p.threads);
        p.config_hash = hashed.hash();
        return p;
    }
};

/// Files `run` writes under the work directory, in stage order.
inline const std::vector<std::string>& pipeline_outputs() {
    static const std::vector<std::string> names{
        "events.csv",        "ingest_stats.txt",   "sessions.tsv",     "labeled.tsv",       "filter_stats.txt",
        "features.csv",      "train.csv",          "val.csv",          "test.csv",          "train.labeled.tsv",
        "val.labeled.tsv",   "test.labeled.tsv",   "yeo_johnson.tsv",  "train.yj.csv",      "val.yj.csv",
        "test.yj.csv",       "model.json",         "train_curve.tsv",  "val_curve.tsv",     "report.txt",
        "report.tsv",        "roc.tsv",            "early_window.tsv", "early_window.txt",  "pipeline.log"};
    return names;
}

struct PipelineResult {
    std::vector<std::string> stage_log;
    MetricsReport test_report;
};

namespace detail {

template <class Fn>
void emit_file(const std::filesystem::path& path, Fn&& writer) {
    AtomicWriter w(path);
    writer(w.stream());
    w.commit();
}

inline std::vector<LabeledSession> pick(const std::vector<LabeledSession>& all, std::span<const std::size_t> rows) {
    std::vector<LabeledSession> out;
    out.reserve(rows.size());
    for (const auto r : rows) out.push_back(all[r]);
    return out;
}

}  // namespace detail

/// ingest -> sessionize -> label -> featurize -> split -> transform -> train
/// -> eval, persisting every intermediate under work_dir. A failing stage
/// raises with the stage name; its output stays behind as `<file>.partial`.
/// `progress` receives one line per stage with wall time; the same lines
/// minus timing go to pipeline.log.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* progress = nullptr) {
    namespace fs = std::filesystem;
    if (!fs::exists(cfg.events)) throw ConfigError("events file '" + cfg.events.string() + "' does not exist");
    for (const auto& name : pipeline_outputs()) {
        std::error_code ec;
        if (fs::equivalent(cfg.events, cfg.work_dir / name, ec)) {
            throw ConfigError("events file would be overwritten by stage output '" + name + "'");
        }
    }
    fs::create_directories(cfg.work_dir);
    const auto out = [&](std::string_view name) { return cfg.work_dir / name; };

    PipelineResult result;
    auto stage = [&](std::string_view name, const std::function<std::string()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string summary;
        try {
            summary = body();
        } catch (...) {
            rethrow_in_stage(name);
        }
        const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.stage_log.push_back(std::string(name) + ": " + summary);
        if (progress) *progress << "[" << name << "] " << summary << " (" << format_fixed(secs, 2) << " s)\n";
    };

    std::vector<RawEvent> events;
    std::vector<Session> sessions;
    std::vector<LabeledSession> labeled;
    FeatureMatrix features;
    SplitIndices split;
    FeatureMatrix train_m, val_m, test_m;
    std::vector<LabeledSession> train_l, val_l, test_l;
    ModelArtifact artifact;

    stage("ingest", [&] {
        auto parsed = parse_events(read_file(cfg.events), cfg.schema, cfg.delimiter);
        events = std::move(parsed.events);
        detail::emit_file(out("events.csv"), [&](std::ostream& o) { write_events(o, events); });
        detail::emit_file(out("ingest_stats.txt"), [&](std::ostream& o) { parsed.stats.write(o); });
        return std::to_string(parsed.stats.rows_accepted) + " events accepted, " +
               std::to_string(parsed.stats.rows_rejected()) + " rejected";
    });
    stage("sessionize", [&] {
        sessions = sessionize(events);
        events.clear();
        events.shrink_to_fit();
        detail::emit_file(out("sessions.tsv"), [&](std::ostream& o) { write_sessions(o, sessions); });
        return std::to_string(sessions.size()) + " sessions";
    });
    stage("label", [&] {
        std::vector<LabeledSession> all(sessions.size());
        parallel_for(sessions.size(), cfg.threads,
                     [&](std::size_t i) { all[i] = label_and_truncate(sessions[i], cfg.rules); });
        auto filtered = preprocess_filter(std::move(all), cfg.rules);
        labeled = std::move(filtered.sessions);
        detail::emit_file(out("labeled.tsv"), [&](std::ostream& o) { write_labeled(o, labeled); });
        detail::emit_file(out("filter_stats.txt"), [&](std::ostream& o) { filtered.stats.write(o); });
        return std::to_string(filtered.stats.kept) + " kept, " + std::to_string(filtered.stats.kept_frustrated) +
               " frustrated";
    });
    stage("featurize", [&] {
        features = featurize_all(labeled, cfg.tz_offset_minutes, cfg.threads);
        detail::emit_file(out("features.csv"), [&](std::ostream& o) { write_matrix(o, features); });
        return std::to_string(features.rows()) + " rows x " + std::to_string(features.cols()) + " features";
    });
    stage("split", [&] {
        split = balanced_split(features, cfg.split);
        train_m = features.select(split.train);
        val_m = features.select(split.val);
        test_m = features.select(split.test);
        train_l = detail::pick(labeled, split.train);
        val_l = detail::pick(labeled, split.val);
        test_l = detail::pick(labeled, split.test);
        detail::emit_file(out("train.csv"), [&](std::ostream& o) { write_matrix(o, train_m); });
        detail::emit_file(out("val.csv"), [&](std::ostream& o) { write_matrix(o, val_m); });
        detail::emit_file(out("test.csv"), [&](std::ostream& o) { write_matrix(o, test_m); });
        detail::emit_file(out("train.labeled.tsv"), [&](std::ostream& o) { write_labeled(o, train_l); });
        detail::emit_file(out("val.labeled.tsv"), [&](std::ostream& o) { write_labeled(o, val_l); });
        detail::emit_file(out("test.labeled.tsv"), [&](std::ostream& o) { write_labeled(o, test_l); });
        return std::to_string(split.train.size()) + "/" + std::to_string(split.val.size()) + "/" +
               std::to_string(split.test.size()) + " train/val/test";
    });
    stage("transform", [&] {
        auto params = fit_yeo_johnson(train_m, cfg.threads);
        params.config_hash = cfg.config_hash;
        train_m = apply_transform(train_m, params);
        val_m = apply_transform(val_m, params);
        test_m = apply_transform(test_m, params);
        detail::emit_file(out("yeo_johnson.tsv"), [&](std::ostream& o) { write_yeo_johnson(o, params); });
        detail::emit_file(out("train.yj.csv"), [&](std::ostream& o) { write_matrix(o, train_m); });
        detail::emit_file(out("val.yj.csv"), [&](std::ostream& o) { write_matrix(o, val_m); });
        detail::emit_file(out("test.yj.csv"), [&](std::ostream& o) { write_matrix(o, test_m); });
        std::size_t constant = 0;
        for (const auto& f : params.features) constant += f.constant ? 1 : 0;
        return std::to_string(params.features.size()) + " columns fitted, " + std::to_string(constant) + " constant";
    });
    stage("train", [&] {
        auto trained = cfg.model == "lstm"
                           ? train_sequence(train_l, val_l, cfg.hyper, cfg.seed, cfg.threads, cfg.config_hash)
                           : train_tabular(cfg.model, train_m, &val_m, cfg.hyper, cfg.seed, cfg.threads,
                                           cfg.config_hash);
        artifact = std::move(trained.artifact);
        save_artifact(out("model.json"), artifact);
        detail::emit_file(out("train_curve.tsv"), [&](std::ostream& o) { write_curve(o, trained.curve.train); });
        detail::emit_file(out("val_curve.tsv"), [&](std::ostream& o) { write_curve(o, trained.curve.val); });
        return cfg.model + " trained on " + std::to_string(split.train.size()) + " rows";
    });
    stage("eval", [&] {
        const auto ev = artifact.is_sequence() ? evaluate_sequences(artifact, test_l, cfg.threads)
                                               : evaluate_matrix(artifact, test_m);
        result.test_report = ev.report;
        detail::emit_file(out("report.txt"), [&](std::ostream& o) {
            write_report_text(o, ev.report, cfg.model + " on held-out test split");
        });
        detail::emit_file(out("report.tsv"), [&](std::ostream& o) { write_report_tsv(o, ev.report); });
        detail::emit_file(out("roc.tsv"), [&](std::ostream& o) { write_roc_tsv(o, ev.roc); });
        std::string summary = "accuracy " + format_fixed(ev.report.accuracy, 4) + ", positive F1 " +
                              format_fixed(ev.report.positive_f1, 4);
        if (ev.report.roc_auc) summary += ", AUC " + format_fixed(*ev.report.roc_auc, 4);
        if (artifact.is_sequence()) {
            const auto sweep = early_window_sweep(std::get<LstmModel>(artifact.model), sequences_of(test_l),
                                                  labels_of(test_l), cfg.windows, cfg.threads);
            detail::emit_file(out("early_window.tsv"), [&](std::ostream& o) { write_early_window_tsv(o, sweep); });
            detail::emit_file(out("early_window.txt"), [&](std::ostream& o) { write_early_window_text(o, sweep); });
        } else {
            fs::remove(out("early_window.tsv"));
            fs::remove(out("early_window.txt"));
        }
        return summary;
    });
    detail::emit_file(out("pipeline.log"), [&](std::ostream& o) {
        o << "tool_version=" << tool_version << '\n' << "config_hash=" << cfg.config_hash << '\n';
        for (const auto& line : result.stage_log) o << line << '\n';
    });
    return result;
}

}  // namespace frustra
