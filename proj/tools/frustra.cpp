// Command-line front end: one subcommand per pipeline stage plus `synth` and `run`.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "frustra/frustra.hpp"

namespace fs = std::filesystem;
using namespace frustra;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    unsigned threads = 0;
    std::string config_path;

    KeyValueConfig config() const {
        return config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    }
    std::string config_hash() const { return config_path.empty() ? "none" : config().hash(); }
    unsigned thread_count() const { return resolve_threads(threads); }
};

template <class Fn>
void emit(const fs::path& path, Fn&& writer) {
    AtomicWriter w(path);
    writer(w.stream());
    w.commit();
}

// report.txt -> report.tsv and friends, next to the main output.
fs::path sidecar(const fs::path& main, std::string_view suffix) {
    auto out = main.parent_path() / (main.stem().string() + std::string(suffix));
    if (out == main) throw ConfigError("output '" + main.string() + "' collides with its sidecar file");
    return out;
}

// `file` wins over the `prefix` section of the global config.
KeyValueConfig section_or_file(const Globals& g, const std::string& file, std::string_view prefix) {
    if (!file.empty()) return KeyValueConfig::load(file);
    return g.config().section(prefix);
}

std::vector<LabeledSession> load_labeled(const fs::path& p) { return read_labeled(read_file(p)); }
FeatureMatrix load_matrix(const fs::path& p) { return read_matrix(read_file(p)); }

int run_cli(int argc, char** argv) {
    CLI::App app{"frustra: frustration labels, features and classifiers for clickstream sessions"};
    app.fallthrough();
    app.require_subcommand(1);
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Global random seed (default 42)");
    auto* threads_opt = app.add_option("--threads", g.threads, "Worker threads; 0 uses every core (default)");
    app.add_option("--config", g.config_path, "key=value config file");
    app.set_version_flag("--version", std::string(tool_version));

    std::function<void()> action;

    // ingest
    {
        auto* cmd = app.add_subcommand("ingest", "Parse a raw event export into the canonical event file");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto delim = std::make_shared<std::string>(",");
        auto schema = std::make_shared<std::string>();
        auto stats_out = std::make_shared<std::string>();
        cmd->add_option("--input", *input, "Raw events (.gz is inflated)")->required();
        cmd->add_option("--out", *out, "Canonical event file")->required();
        cmd->add_option("--delimiter", *delim, "Field delimiter: one character or 'tab'");
        cmd->add_option("--schema", *schema, "Logical-to-header column map");
        cmd->add_option("--stats-out", *stats_out, "Rejection counters");
        cmd->callback([&, input, out, delim, schema, stats_out] {
            action = [&g, input, out, delim, schema, stats_out] {
                const auto sch = Schema::from_config(section_or_file(g, *schema, "schema."));
                const auto parsed = parse_events(read_file(*input), sch, parse_delimiter(*delim));
                emit(*out, [&](std::ostream& o) { write_events(o, parsed.events); });
                if (!stats_out->empty()) emit(*stats_out, [&](std::ostream& o) { parsed.stats.write(o); });
                std::cerr << parsed.stats.rows_accepted << " events accepted, " << parsed.stats.rows_rejected()
                          << " rejected\n";
            };
        });
    }

    // sessionize
    {
        auto* cmd = app.add_subcommand("sessionize", "Group canonical events into ordered sessions");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--input", *input, "Canonical event file")->required();
        cmd->add_option("--out", *out, "Sessions file")->required();
        cmd->callback([&, input, out] {
            action = [input, out] {
                const auto parsed = parse_events(read_file(*input), Schema{});
                const auto sessions = sessionize(parsed.events);
                emit(*out, [&](std::ostream& o) { write_sessions(o, sessions); });
                std::cerr << sessions.size() << " sessions\n";
            };
        });
    }

    // label
    {
        auto* cmd = app.add_subcommand("label", "Apply the frustration rules, truncate and filter");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto rules = std::make_shared<std::string>();
        auto stats_out = std::make_shared<std::string>();
        cmd->add_option("--input", *input, "Sessions file")->required();
        cmd->add_option("--out", *out, "Labeled sessions file")->required();
        cmd->add_option("--rules", *rules, "Rule thresholds");
        cmd->add_option("--stats-out", *stats_out, "Filter counters");
        cmd->callback([&, input, out, rules, stats_out] {
            action = [&g, input, out, rules, stats_out] {
                const auto cfg = RuleConfig::from_config(section_or_file(g, *rules, "rules."));
                const auto sessions = read_sessions(read_file(*input));
                std::vector<LabeledSession> all(sessions.size());
                parallel_for(sessions.size(), g.thread_count(),
                             [&](std::size_t i) { all[i] = label_and_truncate(sessions[i], cfg); });
                const auto filtered = preprocess_filter(std::move(all), cfg);
                emit(*out, [&](std::ostream& o) { write_labeled(o, filtered.sessions); });
                if (!stats_out->empty()) emit(*stats_out, [&](std::ostream& o) { filtered.stats.write(o); });
                std::cerr << filtered.stats.kept << " kept, " << filtered.stats.kept_frustrated << " frustrated\n";
            };
        });
    }

    // featurize
    {
        auto* cmd = app.add_subcommand("featurize", "Compute the tabular feature matrix");
        auto input = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto tz = std::make_shared<int>(0);
        cmd->add_option("--input", *input, "Labeled sessions file")->required();
        cmd->add_option("--out", *out, "Feature matrix")->required();
        cmd->add_option("--tz-offset-minutes", *tz, "Offset added to UTC before the hour/day features");
        cmd->callback([&, input, out, tz] {
            action = [&g, input, out, tz] {
                const auto m = featurize_all(load_labeled(*input), *tz, g.thread_count());
                emit(*out, [&](std::ostream& o) { write_matrix(o, m); });
                std::cerr << m.rows() << " rows x " << m.cols() << " features\n";
            };
        });
    }

    // split
    {
        auto* cmd = app.add_subcommand("split", "Balanced 70/15/15 split of a feature matrix");
        auto input = std::make_shared<std::string>();
        auto out_dir = std::make_shared<std::string>();
        auto labeled = std::make_shared<std::string>();
        cmd->add_option("--in", *input, "Feature matrix")->required();
        cmd->add_option("--out-dir", *out_dir, "Directory for train/val/test files")->required();
        cmd->add_option("--labeled", *labeled, "Labeled sessions to split the same way");
        cmd->callback([&, input, out_dir, labeled] {
            action = [&g, input, out_dir, labeled] {
                const auto section = g.config().section("split.");
                section.require_known({"train", "val", "test"}, "split");
                SplitSpec spec;
                spec.train_frac = section.number_or("train", spec.train_frac);
                spec.val_frac = section.number_or("val", spec.val_frac);
                spec.test_frac = section.number_or("test", spec.test_frac);
                spec.seed = g.seed;
                const auto m = load_matrix(*input);
                const auto split = balanced_split(m, spec);
                const fs::path dir(*out_dir);
                const std::array<std::pair<const char*, const std::vector<std::size_t>*>, 3> parts{
                    {{"train", &split.train}, {"val", &split.val}, {"test", &split.test}}};
                for (const auto& [name, rows] : parts) {
                    emit(dir / (std::string(name) + ".csv"), [&](std::ostream& o) { write_matrix(o, m.select(*rows)); });
                }
                if (!labeled->empty()) {
                    std::map<std::string, LabeledSession> by_id;
                    for (auto& s : load_labeled(*labeled)) by_id.emplace(s.session_id, std::move(s));
                    for (const auto& [name, rows] : parts) {
                        std::vector<LabeledSession> picked;
                        for (const auto r : *rows) {
                            const auto it = by_id.find(m.id(r));
                            if (it == by_id.end()) {
                                throw DataError("session '" + m.id(r) + "' is in the matrix but not in the labeled file");
                            }
                            picked.push_back(it->second);
                        }
                        emit(dir / (std::string(name) + ".labeled.tsv"),
                             [&](std::ostream& o) { write_labeled(o, picked); });
                    }
                }
                std::cerr << split.train.size() << "/" << split.val.size() << "/" << split.test.size()
                          << " train/val/test\n";
            };
        });
    }

    // transform fit|apply
    {
        auto* cmd = app.add_subcommand("transform", "Yeo-Johnson transform: fit on train, apply anywhere");
        cmd->require_subcommand(1);
        auto* fit = cmd->add_subcommand("fit", "Fit per-feature parameters on a training matrix");
        auto fit_in = std::make_shared<std::string>();
        auto fit_out = std::make_shared<std::string>();
        fit->add_option("--in", *fit_in, "Training matrix")->required();
        fit->add_option("--out", *fit_out, "Parameter file")->required();
        fit->callback([&, fit_in, fit_out] {
            action = [&g, fit_in, fit_out] {
                auto params = fit_yeo_johnson(load_matrix(*fit_in), g.thread_count());
                params.config_hash = g.config_hash();
                emit(*fit_out, [&](std::ostream& o) { write_yeo_johnson(o, params); });
                std::cerr << params.features.size() << " columns fitted\n";
            };
        });
        auto* apply = cmd->add_subcommand("apply", "Apply fitted parameters to a matrix");
        auto params_path = std::make_shared<std::string>();
        auto apply_in = std::make_shared<std::string>();
        auto apply_out = std::make_shared<std::string>();
        apply->add_option("--params", *params_path, "Parameter file from 'transform fit'")->required();
        apply->add_option("--in", *apply_in, "Matrix to transform")->required();
        apply->add_option("--out", *apply_out, "Transformed matrix")->required();
        apply->callback([&, params_path, apply_in, apply_out] {
            action = [params_path, apply_in, apply_out] {
                const auto params = read_yeo_johnson(read_file(*params_path));
                const auto m = apply_transform(load_matrix(*apply_in), params);
                emit(*apply_out, [&](std::ostream& o) { write_matrix(o, m); });
            };
        });
    }

    // train
    {
        auto* cmd = app.add_subcommand("train", "Train a classifier and write a model artifact");
        auto family = std::make_shared<std::string>();
        auto train = std::make_shared<std::string>();
        auto val = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--model", *family, "logreg, rf, gbdt or lstm")->required();
        cmd->add_option("--train", *train, "Training matrix (labeled sessions for lstm)")->required();
        cmd->add_option("--val", *val, "Validation matrix (labeled sessions for lstm)");
        cmd->add_option("--out", *out, "Model artifact (.json)")->required();
        cmd->callback([&, family, train, val, out] {
            action = [&g, family, train, val, out] {
                require_family(*family);
                const auto hyper = g.config();
                TrainOutcome trained;
                if (*family == "lstm") {
                    const auto tr = load_labeled(*train);
                    const auto va = val->empty() ? std::vector<LabeledSession>{} : load_labeled(*val);
                    trained = train_sequence(tr, va, hyper, g.seed, g.thread_count(), g.config_hash());
                } else {
                    const auto tr = load_matrix(*train);
                    std::optional<FeatureMatrix> va;
                    if (!val->empty()) va = load_matrix(*val);
                    trained = train_tabular(*family, tr, va ? &*va : nullptr, hyper, g.seed, g.thread_count(),
                                            g.config_hash());
                }
                const fs::path artifact(*out);
                save_artifact(artifact, trained.artifact);
                emit(sidecar(artifact, ".train_curve.tsv"), [&](std::ostream& o) { write_curve(o, trained.curve.train); });
                if (!trained.curve.val.empty()) {
                    emit(sidecar(artifact, ".val_curve.tsv"), [&](std::ostream& o) { write_curve(o, trained.curve.val); });
                }
                std::cerr << *family << " model written to " << artifact.string() << '\n';
            };
        });
    }

    // eval
    {
        auto* cmd = app.add_subcommand("eval", "Score a held-out set and write classification reports");
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto report = std::make_shared<std::string>();
        cmd->add_option("--model", *model, "Model artifact")->required();
        cmd->add_option("--data", *data, "Feature matrix (labeled sessions for lstm)")->required();
        cmd->add_option("--report", *report, "Text report; .tsv and .roc.tsv sidecars go next to it")->required();
        cmd->callback([&, model, data, report] {
            action = [&g, model, data, report] {
                const auto artifact = load_artifact(*model);
                const auto ev = artifact.is_sequence() ? evaluate_sequences(artifact, load_labeled(*data), g.thread_count())
                                                       : evaluate_matrix(artifact, load_matrix(*data));
                const fs::path path(*report);
                const auto title = artifact.family() + " on " + fs::path(*data).filename().string();
                emit(path, [&](std::ostream& o) { write_report_text(o, ev.report, title); });
                emit(sidecar(path, ".tsv"), [&](std::ostream& o) { write_report_tsv(o, ev.report); });
                emit(sidecar(path, ".roc.tsv"), [&](std::ostream& o) { write_roc_tsv(o, ev.roc); });
                write_report_text(std::cout, ev.report, title);
            };
        });
    }

    // early-window
    {
        auto* cmd = app.add_subcommand("early-window", "Score sessions from their first k events only");
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto windows = std::make_shared<std::string>("5,10,15,20,30");
        auto out = std::make_shared<std::string>();
        cmd->add_option("--model", *model, "LSTM model artifact")->required();
        cmd->add_option("--data", *data, "Labeled sessions")->required();
        cmd->add_option("--windows", *windows, "Comma-separated prefix lengths");
        cmd->add_option("--out", *out, "Text table; a .tsv sidecar goes next to it")->required();
        cmd->callback([&, model, data, windows, out] {
            action = [&g, model, data, windows, out] {
                const auto artifact = load_artifact(*model);
                if (!artifact.is_sequence()) throw ConfigError("early-window needs an lstm artifact");
                const auto sessions = load_labeled(*data);
                const auto w = parse_windows(*windows);
                const auto sweep = early_window_sweep(std::get<LstmModel>(artifact.model), sequences_of(sessions),
                                                      labels_of(sessions), w, g.thread_count());
                const fs::path path(*out);
                emit(path, [&](std::ostream& o) { write_early_window_text(o, sweep); });
                emit(sidecar(path, ".tsv"), [&](std::ostream& o) { write_early_window_tsv(o, sweep); });
                write_early_window_text(std::cout, sweep);
            };
        });
    }

    // synth
    {
        auto* cmd = app.add_subcommand("synth", "Generate synthetic sessions with planted archetypes");
        auto mix_path = std::make_shared<std::string>();
        auto n = std::make_shared<std::size_t>(10000);
        auto out = std::make_shared<std::string>();
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--mix", *mix_path, "Archetype weights (default: all seven equally)");
        cmd->add_option("--n", *n, "Number of sessions");
        cmd->add_option("--out", *out, "Event file in the ingest schema")->required();
        cmd->add_option("--manifest", *manifest, "Session id to archetype and intended label");
        cmd->callback([&, mix_path, n, out, manifest] {
            action = [&g, mix_path, n, out, manifest] {
                const auto mix = mix_path->empty() ? SynthMix::uniform() : SynthMix::from_config(KeyValueConfig::load(*mix_path));
                const auto gen = generate(mix, *n, g.seed, g.thread_count());
                emit(*out, [&](std::ostream& o) { write_events(o, gen.events); });
                if (!manifest->empty()) emit(*manifest, [&](std::ostream& o) { write_manifest(o, gen.manifest); });
                std::cerr << gen.manifest.size() << " sessions, " << gen.events.size() << " events\n";
            };
        });
    }

    // run
    {
        auto* cmd = app.add_subcommand("run", "Run every stage from one config file");
        cmd->callback([&] {
            action = [&g, seed_opt, threads_opt] {
                if (g.config_path.empty()) throw ConfigError("run needs --config <file>");
                auto kv = g.config();
                if (seed_opt->count() > 0) kv.set("seed", std::to_string(g.seed));
                if (threads_opt->count() > 0 || !kv.contains("threads")) {
                    kv.set("threads", std::to_string(g.thread_count()));
                }
                const auto cfg = PipelineConfig::from_config(kv);
                const auto result = run_pipeline(cfg, &std::cerr);
                write_report_text(std::cout, result.test_report, cfg.model + " on held-out test split");
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::config_error);
    }
    if (action) action();
    return static_cast<int>(ExitCode::ok);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const Error& e) {
        std::cerr << "frustra: error: " << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "frustra: error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data_error);
    } catch (const std::exception& e) {
        std::cerr << "frustra: internal error: " << e.what() << '\n';
        return 1;
    }
}
