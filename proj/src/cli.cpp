#include "simulacra/cli.hpp"

#include "simulacra/dataset.hpp"
#include "simulacra/error.hpp"
#include "simulacra/llm.hpp"
#include "simulacra/metrics.hpp"
#include "simulacra/pipelines.hpp"
#include "simulacra/prompts.hpp"
#include "simulacra/results.hpp"
#include "simulacra/telemetry.hpp"
#include "simulacra/tir.hpp"
#include "simulacra/util.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>

namespace simulacra::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct BackendArgs {
    std::string kind = "mock";
    std::string mock_script;
    std::string model = "gpt-4o";
    std::string base_url;
    std::string templates_dir;
    std::size_t prompt_budget = kDefaultPromptBudget;
    int max_in_flight = 4;
    bool require_deterministic = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--backend", kind, "mock or live")->check(CLI::IsMember({"mock", "live"}));
        cmd->add_option("--mock-script", mock_script, "Scripted responses for the mock backend");
        cmd->add_option("--model", model, "Model id for the live backend");
        cmd->add_option("--base-url", base_url, "Chat endpoint base url (default: $SIMULACRA_BASE_URL)");
        cmd->add_option("--templates", templates_dir, "Directory overriding prompt templates");
        cmd->add_option("--prompt-budget", prompt_budget, "Character budget per prompt");
        cmd->add_option("--max-in-flight", max_in_flight, "Concurrent live requests")->check(CLI::PositiveNumber);
        cmd->add_flag("--require-deterministic", require_deterministic, "Refuse to run without the mock backend");
    }

    std::unique_ptr<Backend> make() const {
        if (require_deterministic && kind != "mock") throw UsageError("--require-deterministic needs --backend mock");
        if (kind == "mock") {
            if (mock_script.empty()) throw UsageError("--backend mock needs --mock-script");
            return std::make_unique<MockBackend>(MockScript::load(mock_script), false);
        }
        auto cfg = LiveConfig::from_env(model, base_url);
        if (cfg.api_key.empty()) throw UsageError("live backend needs SIMULACRA_API_KEY");
        if (cfg.base_url.empty()) throw UsageError("live backend needs --base-url or SIMULACRA_BASE_URL");
        cfg.max_in_flight = max_in_flight;
        return std::make_unique<LiveBackend>(std::move(cfg), false);
    }

    PromptKit prompts() const {
        return PromptKit(templates_dir.empty() ? Templates::defaults() : Templates::load_dir(templates_dir),
                         prompt_budget);
    }
};

struct TirArgs {
    TirConfig cfg;
    bool all_exemplars = false;

    void attach(CLI::App* cmd, bool training) {
        cmd->add_option("--seed", cfg.seed, "Global seed");
        cmd->add_option("--n-past", cfg.n_past, "Past questions per window")->check(CLI::PositiveNumber);
        cmd->add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
        if (training) {
            cmd->add_option("--max-iterations", cfg.max_iterations, "Reflection rounds per record")
                ->check(CLI::PositiveNumber);
        } else {
            cmd->add_option("--m", cfg.exemplars_m, "Exemplar reflections per target")->check(CLI::PositiveNumber);
            cmd->add_flag("--all-exemplars", all_exemplars, "Sample from every entry, not only improved ones");
        }
    }

    TirConfig config() const {
        TirConfig c = cfg;
        c.prefer_improved = !all_exemplars;
        c.validate();
        return c;
    }
};

SplitSpec load_split(const std::string& path) {
    try {
        return split_from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// Write-once output named after its content unless an explicit path is given.
fs::path emit(std::string_view content, const std::string& explicit_out, const std::string& out_dir,
              const std::string& stem, const std::string& ext) {
    fs::path path = explicit_out.empty()
                        ? fs::path(out_dir) / fmt::format("{}-{}{}", stem, sha256_hex(content).substr(0, 12), ext)
                        : fs::path(explicit_out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_once(path, content);
    return path;
}

void print_issues(std::ostream& err, const std::vector<RecordIssue>& issues, const char* what) {
    for (const auto& i : issues) err << what << " " << i.student_id << "/" << i.lecture_id << ": " << i.reason << "\n";
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

// ---- commands -------------------------------------------------------------------------

struct SplitCmd {
    std::string dataset, out, out_dir = ".";
    double ratio = kEduAgentSplitRatio;
    std::uint64_t seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--dataset", dataset, "Dataset JSON")->required();
        cmd->add_option("--ratio", ratio, "Train share (0.8 or 0.7 in the published protocols)");
        cmd->add_option("--seed", seed, "Shuffle seed");
        cmd->add_option("--out", out, "Output path");
        cmd->add_option("--out-dir", out_dir, "Directory for the content-named output");
    }

    int run(std::ostream& o) const {
        if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("--ratio must lie in (0, 1)");
        const auto spec = split_individual_wise(load_dataset(dataset), ratio, seed);
        const auto path = emit(json_text(split_to_json(spec)), out, out_dir, "split", ".json");
        o << fmt::format("train {} val {} test {}\n{}\n", spec.train_ids.size(), spec.val_ids.size(),
                         spec.test_ids.size(), path.string());
        return kExitOk;
    }
};

struct TrainCmd {
    std::string dataset, split, out, out_dir = ".";
    BackendArgs backend;
    TirArgs tir;

    void attach(CLI::App* cmd) {
        cmd->add_option("--dataset", dataset, "Dataset JSON")->required();
        cmd->add_option("--split", split, "Split JSON")->required();
        cmd->add_option("--out", out, "Output path");
        cmd->add_option("--out-dir", out_dir, "Directory for the content-named output");
        backend.attach(cmd);
        tir.attach(cmd, true);
    }

    int run(std::ostream& o, std::ostream& e) const {
        const auto d = load_dataset(dataset);
        const auto spec = load_split(split);
        const auto cfg = tir.config();
        auto be = backend.make();
        const auto prompts = backend.prompts();
        const AgentContext ctx{be.get(), &prompts, {}};
        const auto report = build_reflection_db(d, spec, ctx, cfg);
        print_issues(e, report.skipped, "skipped");
        print_issues(e, report.failed, "failed");
        for (const auto& [lecture, entries] : report.db.by_lecture()) {
            std::size_t improved = 0;
            for (const auto& x : entries) improved += x.improved;
            o << fmt::format("{}: {} entries, {} improved\n", lecture, entries.size(), improved);
        }
        o << emit(report.db.serialize(), out, out_dir, "reflections", ".jsonl").string() << "\n";
        return kExitOk;
    }
};

struct SimulateCmd {
    std::string dataset, split, db, out, out_dir = ".", variant = "standard", classifier_url;
    bool use_tir = false;
    int epochs = 10;
    double lr = 0.1;
    BackendArgs backend;
    TirArgs tir;

    void attach(CLI::App* cmd) {
        cmd->add_option("--dataset", dataset, "Dataset JSON")->required();
        cmd->add_option("--split", split, "Split JSON")->required();
        cmd->add_option("--variant", variant, "standard, cot or classifier")
            ->check(CLI::IsMember({"standard", "cot", "classifier"}));
        cmd->add_flag("--tir", use_tir, "Use reflections from --db");
        cmd->add_option("--db", db, "Reflection database (JSONL)");
        cmd->add_option("--classifier-url", classifier_url, "External classifier; default trains the reference one");
        cmd->add_option("--epochs", epochs, "Reference classifier epochs")->check(CLI::PositiveNumber);
        cmd->add_option("--lr", lr, "Reference classifier learning rate")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out, "Output path");
        cmd->add_option("--out-dir", out_dir, "Directory for the content-named output");
        backend.attach(cmd);
        tir.attach(cmd, false);
    }

    int run(std::ostream& o, std::ostream& e) const {
        if (use_tir && db.empty()) throw UsageError("--tir needs --db");
        const auto d = load_dataset(dataset);
        const auto spec = load_split(split);
        std::optional<ReflectionDB> reflections;
        if (!db.empty()) {
            reflections = ReflectionDB::load(db);
            if (reflections->metadata().dataset_hash != dataset_hash(d))
                throw IntegrityError(db, "reflection database was built from a different dataset");
        }

        SimulationOptions opt;
        opt.variant = variant_from_string(variant);
        opt.tir = use_tir;
        opt.db = reflections ? &*reflections : nullptr;
        opt.config = tir.config();

        auto be = backend.make();
        const auto prompts = backend.prompts();
        const AgentContext ctx{be.get(), &prompts, {}};
        const auto targets = test_targets(d, spec);

        SimulationReport report;
        if (opt.variant == Variant::Classifier) {
            std::unique_ptr<Classifier> classifier;
            if (classifier_url.empty()) {
                const auto examples = build_classifier_examples(d, spec, use_tir ? opt.db : nullptr, ctx, opt.config);
                classifier = std::make_unique<ReferenceClassifier>(
                    ReferenceClassifier::train(examples, {epochs, lr, opt.config.seed}));
            } else {
                classifier = std::make_unique<HttpClassifier>(classifier_url);
            }
            report = simulate_classifier(d, targets, ctx, *classifier, opt);
        } else {
            report = simulate_prompting(d, targets, ctx, opt);
        }
        print_issues(e, report.skipped, "skipped");
        print_issues(e, report.failed, "failed");

        const auto m = accuracy_f1(report.results);
        o << fmt::format("{} targets, accuracy {:.4f}, f1 {:.4f}\n", report.results.size(), m.accuracy, m.f1);
        const std::string stem = fmt::format("results-{}-{}", variant, use_tir ? "tir" : "notir");
        o << emit(results_to_csv(report.results), out, out_dir, stem, ".csv").string() << "\n";
        return kExitOk;
    }
};

struct EvaluateCmd {
    std::string results, dataset, agreement, out_dir = ".";
    std::vector<std::string> levels{"individual"};
    bool graph = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--results", results, "Results CSV")->required();
        cmd->add_option("--dataset", dataset, "Dataset JSON")->required();
        cmd->add_option("--level", levels, "individual, lecture, question, slide (repeatable)")
            ->check(CLI::IsMember({"individual", "lecture", "question", "slide"}));
        cmd->add_flag("--graph", graph, "Write inter-student graphs (simulated and real)");
        cmd->add_option("--agreement", agreement, "Second results CSV for Bland-Altman agreement");
        cmd->add_option("--out-dir", out_dir, "Report directory");
    }

    int run(std::ostream& o) const {
        const auto d = load_dataset(dataset);
        const auto rs = results_from_csv(read_file(results));
        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        auto opt_json = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };

        const auto m = accuracy_f1(rs);
        json report{{"n", m.n}, {"accuracy", m.accuracy}, {"f1", m.f1}, {"levels", json::object()}};
        for (const auto& name : levels) {
            const auto level = level_from_string(name);
            const auto series = aggregate(rs, d, level);
            report["levels"][name] = {{"keys", series.keys.size()}, {"pearson", opt_json(series.pearson_r)}};
            write_file(dir / ("series-" + name + ".csv"), series_to_csv(series));
        }
        if (graph) {
            for (const bool simulated : {true, false}) {
                const auto g = interstudent_graph(observations_from_results(rs, d, simulated));
                const std::string stem = simulated ? "graph-sim" : "graph-label";
                write_file(dir / (stem + ".json"), json_text(graph_to_json(g)));
                write_file(dir / (stem + ".dot"), graph_to_dot(g));
            }
        }
        if (!agreement.empty()) {
            const auto level = level_from_string(levels.front());
            const auto a = accuracy_series(rs, d, level);
            const auto b = accuracy_series(results_from_csv(read_file(agreement)), d, level);
            std::vector<double> xa, xb;
            std::vector<std::string> keys;
            for (std::size_t i = 0, j = 0; i < a.keys.size() && j < b.keys.size();) {
                if (a.keys[i] < b.keys[j]) {
                    ++i;
                } else if (b.keys[j] < a.keys[i]) {
                    ++j;
                } else {
                    keys.push_back(a.keys[i]);
                    xa.push_back(a.values[i++]);
                    xb.push_back(b.values[j++]);
                }
            }
            auto ag = agreement_to_json(bland_altman_paired_t(xa, xb));
            ag["level"] = levels.front();
            ag["keys"] = keys;
            write_file(dir / "agreement.json", json_text(ag));
            report["agreement"] = ag;
        }
        write_file(dir / "metrics.json", json_text(report));
        o << fmt::format("accuracy {:.4f}, f1 {:.4f}, n {}\n{}\n", m.accuracy, m.f1, m.n, (dir / "metrics.json").string());
        return kExitOk;
    }
};

struct GazeCmd {
    std::vector<std::string> streams;
    std::string flags, out;
    bool cluster = false, fixations = false;
    std::optional<double> sigma;
    std::uint64_t seed = 0;
    FixationOptions fix;

    void attach(CLI::App* cmd) {
        cmd->add_option("--stream", streams, "Gaze CSV (t_ms,x,y,on_screen); repeat per student")->required();
        auto* c = cmd->add_flag("--cluster", cluster, "Cluster fixations into AoIs");
        auto* f = cmd->add_flag("--fixations", fixations, "Only label fixations");
        c->excludes(f);
        cmd->add_option("--flags", flags, "Cognitive flags CSV for AoI support and confusion ratios");
        cmd->add_option("--sigma", sigma, "Affinity kernel width in pixels")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", seed, "k-means seed");
        cmd->add_option("--window", fix.smoothing_window, "Velocity smoothing window (odd)");
        cmd->add_option("--lambda", fix.lambda, "Velocity threshold multiplier")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out, "Output JSON (default: stdout)");
    }

    int run(std::ostream& o) const {
        if (cluster == fixations) throw UsageError("choose exactly one of --cluster or --fixations");
        std::vector<Fixation> all;
        std::vector<std::string> owners;
        json per_stream = json::array();
        for (const auto& path : streams) {
            const auto samples = gaze_from_csv(read_file(path));
            const auto fx = label_fixations(samples, fix);
            const std::string owner = fs::path(path).stem().string();
            per_stream.push_back({{"student_id", owner}, {"fixations", fixations_to_json(fx)["fixations"]}});
            for (const auto& x : fx) {
                all.push_back(x);
                owners.push_back(owner);
            }
        }
        json result;
        if (fixations) {
            result = {{"streams", per_stream}};
        } else {
            AoiOptions opt;
            opt.sigma = sigma;
            opt.seed = seed;
            auto aois = cluster_aoi(all, opt);
            std::vector<CognitiveFlags> f;
            if (!flags.empty()) f = flags_from_csv(read_file(flags));
            if (streams.size() > 1 || !f.empty()) annotate_aois(aois, owners, f);
            result = aois_to_json(aois);
            result["owners"] = owners;
        }
        const std::string text = json_text(result);
        if (out.empty()) {
            o << text;
        } else {
            write_file(out, text);
            o << out << "\n";
        }
        return kExitOk;
    }
};

struct CogbarCmd {
    std::string flags, out;
    double low = 1.0 / 3.0, high = 2.0 / 3.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--flags", flags, "Cognitive flags CSV")->required();
        cmd->add_option("--low", low, "Upper bound of the Low bucket");
        cmd->add_option("--high", high, "Lower bound of the High bucket");
        cmd->add_option("--out", out, "Output JSON (default: stdout)");
    }

    int run(std::ostream& o) const {
        if (!(0.0 <= low && low < high && high <= 1.0)) throw UsageError("need 0 <= --low < --high <= 1");
        const auto s = cog_snapshot(flags_from_csv(read_file(flags)));
        const std::string text = json_text(snapshot_to_json(s, action_prompt(s, low, high)));
        if (out.empty()) {
            o << text;
        } else {
            write_file(out, text);
            o << out << "\n";
        }
        return kExitOk;
    }
};

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Usage: return kExitUsage;
        case ErrorKind::Data: return kExitData;
        case ErrorKind::Backend: return kExitBackend;
    }
    return kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Student simulation with transferable iterative reflection, plus classroom telemetry"};
    app.name(args.empty() ? "simulacra" : args.front());
    app.require_subcommand(1);

    SplitCmd split;
    TrainCmd train;
    SimulateCmd simulate;
    EvaluateCmd evaluate;
    GazeCmd gaze;
    CogbarCmd cogbar;
    auto* c_split = app.add_subcommand("split", "Individual-wise train/val/test split");
    auto* c_train = app.add_subcommand("tir-train", "Build the reflection database from training students");
    auto* c_sim = app.add_subcommand("simulate", "Simulate test students");
    auto* c_eval = app.add_subcommand("evaluate", "Metrics, series, graphs and agreement for a results file");
    auto* c_gaze = app.add_subcommand("gaze", "Fixation labeling and AoI clustering");
    auto* c_cog = app.add_subcommand("cogbar", "Knowledge and attention ratios with the action prompt");
    split.attach(c_split);
    train.attach(c_train);
    simulate.attach(c_sim);
    evaluate.attach(c_eval);
    gaze.attach(c_gaze);
    cogbar.attach(c_cog);

    // CLI11 consumes a reversed argument vector.
    std::vector<std::string> rest(args.empty() ? args.end() : args.begin() + 1, args.end());
    std::reverse(rest.begin(), rest.end());
    try {
        app.parse(rest);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (c_split->parsed()) return split.run(out);
        if (c_train->parsed()) return train.run(out, err);
        if (c_sim->parsed()) return simulate.run(out, err);
        if (c_eval->parsed()) return evaluate.run(out);
        if (c_gaze->parsed()) return gaze.run(out);
        if (c_cog->parsed()) return cogbar.run(out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace simulacra::cli
