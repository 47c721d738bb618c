#include "simulacra/pipelines.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>

namespace simulacra {

using nlohmann::json;

std::vector<SimulationTarget> test_targets(const Dataset& d, const SplitSpec& split) {
    std::vector<SimulationTarget> out;
    for (const auto& rec : d.records()) {
        if (split.test_ids.contains(rec.student_id)) out.push_back({rec.student_id, rec.lecture_id});
    }
    return out;
}

std::vector<LeakHit> find_label_leaks(std::span<const Exchange> transcript, std::span<const QuestionId> future_ids) {
    std::vector<std::string> tokens;
    tokens.reserve(future_ids.size());
    for (const auto& id : future_ids) tokens.push_back(label_token(id));
    std::vector<LeakHit> hits;
    for (std::size_t e = 0; e < transcript.size(); ++e) {
        const auto& messages = transcript[e].request.messages;
        for (std::size_t m = 0; m < messages.size(); ++m) {
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                if (messages[m].content.find(tokens[t]) != std::string::npos) hits.push_back({e, m, future_ids[t]});
            }
        }
    }
    return hits;
}

namespace {

std::string describe(const std::exception_ptr& p) {
    try {
        std::rethrow_exception(p);
    } catch (const std::exception& e) {
        return e.what();
    } catch (...) {
        return "unknown error";
    }
}

using Predictor = std::function<PredictionSet(const HistoryWindow& blind, const AgentContext& ctx, std::uint64_t seed)>;

// Shared per-target driver: private transcript per target, leakage scan before any
// label is joined, index-ordered collection so worker count cannot change output.
SimulationReport run_targets(const Dataset& d, std::span<const SimulationTarget> targets, const AgentContext& ctx,
                             const SimulationOptions& opt, const Predictor& predict) {
    opt.config.validate();
    if (!ctx.backend || !ctx.prompts) throw InvalidArgument("agent context needs a backend and prompts");
    if (targets.empty()) throw EmptyInput("no simulation targets");

    SimulationReport report;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& rec = d.record(targets[i].student_id, targets[i].lecture_id);
        if (rec.responses.size() <= static_cast<std::size_t>(opt.config.n_past)) {
            report.skipped.push_back({targets[i].student_id, targets[i].lecture_id,
                                      "record has " + std::to_string(rec.responses.size()) +
                                          " responses, need more than " + std::to_string(opt.config.n_past)});
            continue;
        }
        eligible.push_back(i);
    }
    if (eligible.empty()) throw EmptyInput("no eligible simulation targets");

    const std::size_t n = eligible.size();
    std::vector<std::optional<PredictionSet>> predictions(n);
    std::vector<HistoryWindow> windows(n);
    std::vector<std::vector<Exchange>> transcripts(n);
    std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic, 1) num_threads(opt.config.workers)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
        const auto i = static_cast<std::size_t>(k);
        const auto& target = targets[eligible[i]];
        RecordingBackend recorder(*ctx.backend);
        AgentContext local = ctx;
        local.backend = &recorder;
        try {
            windows[i] = partition_history(d, target.student_id, target.lecture_id, opt.config.n_past);
            const auto seed = derive_seed(opt.config.seed, target.student_id, target.lecture_id);
            predictions[i] = predict(windows[i].without_labels(), local, seed);
        } catch (...) {
            errors[i] = std::current_exception();
        }
        transcripts[i] = recorder.transcript();
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& target = targets[eligible[i]];
        const auto ids = windows[i].future_ids();
        const auto hits = find_label_leaks(transcripts[i], ids);
        if (!hits.empty()) {
            throw LabelLeak(std::to_string(hits.size()) + " held-out label(s) of " + target.student_id + "/" +
                            target.lecture_id + " reached a prompt, first for question " + hits.front().question_id);
        }
        report.transcripts.push_back({target, std::move(transcripts[i])});
    }

    std::exception_ptr first_error;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& target = targets[eligible[i]];
        if (!predictions[i]) {
            if (!first_error) first_error = errors[i];
            report.failed.push_back({target.student_id, target.lecture_id, describe(errors[i])});
            continue;
        }
        SimulationResult r;
        r.student_id = target.student_id;
        r.lecture_id = target.lecture_id;
        r.predictions = std::move(*predictions[i]);
        r.labels = windows[i].y_future;
        r.variant = opt.variant;
        r.tir = opt.tir;
        report.results.push_back(std::move(r));
    }
    if (report.results.empty() && first_error) std::rethrow_exception(first_error);
    return report;
}

void require_db(const SimulationOptions& opt) {
    if (opt.tir && (!opt.db || opt.db->empty())) throw NotFound("reflection database required when TIR is enabled");
}

std::vector<ReflectionEntry> exemplars_for(const HistoryWindow& w, const SimulationOptions& opt) {
    return retrieve_exemplars(*opt.db, w.lecture_id, opt.config.exemplars_m,
                              derive_seed(opt.config.seed, w.student_id, w.lecture_id), opt.config.prefer_improved);
}

}  // namespace

SimulationReport simulate_prompting(const Dataset& d, std::span<const SimulationTarget> targets,
                                    const AgentContext& ctx, const SimulationOptions& opt) {
    if (opt.variant == Variant::Classifier) throw InvalidArgument("use simulate_classifier for the classifier variant");
    require_db(opt);
    return run_targets(d, targets, ctx, opt, [&](const HistoryWindow& w, const AgentContext& local, std::uint64_t seed) {
        std::vector<std::string> reflections;
        if (opt.tir) {
            for (auto& e : exemplars_for(w, opt)) reflections.push_back(std::move(e.reflection));
        }
        const Prompt prompt = opt.variant == Variant::CoT ? local.prompts->build_cot_prompt(w, reflections)
                                                          : local.prompts->build_standard_prompt(w, reflections);
        const auto ids = w.future_ids();
        return request_prediction(local, prompt, ids, seed);
    });
}

// ---- features -----------------------------------------------------------------------

namespace {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Unit-norm block of hashed unigram and bigram presence features.
void add_block(std::map<std::uint32_t, double>& acc, std::string_view text, std::string_view salt) {
    const auto toks = tokenize(text);
    std::map<std::uint32_t, double> block;
    auto put = [&](const std::string& gram) {
        const auto h = fnv1a64(std::string(salt) + gram);
        block[1 + static_cast<std::uint32_t>(h % (kFeatureBuckets - 1))] = 1.0;
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
        put("u:" + toks[i]);
        if (i + 1 < toks.size()) put("b:" + toks[i] + " " + toks[i + 1]);
    }
    if (block.empty()) return;
    const double scale = 1.0 / std::sqrt(static_cast<double>(block.size()));
    for (const auto& [idx, v] : block) acc[idx] += v * scale;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

SparseVector featurize(const QuestionItem& question, bool initial_bit, std::string_view reflection) {
    std::map<std::uint32_t, double> acc;
    acc[kInitialBitIndex] = initial_bit ? 1.0 : -1.0;
    add_block(acc, question.text, "question|");
    add_block(acc, reflection, "reflection|");
    return {acc.begin(), acc.end()};
}

ReferenceClassifier ReferenceClassifier::train(std::span<const ClassifierExample> examples, const TrainOptions& opt) {
    if (opt.epochs < 1 || !(opt.learning_rate > 0.0)) throw InvalidArgument("epochs and learning rate must be positive");
    const auto positives = std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.label; });
    if (examples.size() < 2 || positives == 0 || static_cast<std::size_t>(positives) == examples.size())
        throw DegenerateLabels("training needs at least one example of each class");

    ReferenceClassifier c;
    c.options_ = opt;
    c.weights_.assign(kFeatureBuckets, 0.0);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(opt.seed);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        seeded_shuffle(order, rng);
        for (auto i : order) {
            const auto& ex = examples[i];
            const double g = c.probability(ex.features) - (ex.label ? 1.0 : 0.0);
            for (const auto& [idx, v] : ex.features) c.weights_[idx] -= opt.learning_rate * g * v;
            c.bias_ -= opt.learning_rate * g;
        }
    }
    return c;
}

double ReferenceClassifier::probability(const SparseVector& x) const {
    double z = bias_;
    for (const auto& [idx, v] : x) {
        if (idx >= weights_.size()) throw InvalidArgument("feature index out of range");
        z += weights_[idx] * v;
    }
    return sigmoid(z);
}

HttpClassifier::HttpClassifier(std::string base_url, int timeout_seconds) : timeout_seconds_(timeout_seconds) {
    std::tie(scheme_host_port_, path_prefix_) = split_base_url(base_url);
}

bool HttpClassifier::classify(const SparseVector& x) const {
    json features = json::array();
    for (const auto& [idx, v] : x) features.push_back({idx, v});
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    auto res = client.Post(path_prefix_ + "/classify", json{{"features", features}}.dump(), "application/json");
    if (!res) throw ClassifierUnavailable(httplib::to_string(res.error()));
    if (res->status == 503) throw ClassifierUnavailable("HTTP 503");
    if (res->status != 200) throw BadResponse("classifier returned HTTP " + std::to_string(res->status));
    try {
        return json::parse(res->body).at("correct").get<bool>();
    } catch (const json::exception& e) {
        throw BadResponse(std::string("classifier body: ") + e.what());
    }
}

std::vector<ClassifierExample> build_classifier_examples(const Dataset& d, const SplitSpec& split,
                                                         const ReflectionDB* db, const AgentContext& ctx,
                                                         const TirConfig& cfg) {
    cfg.validate();
    std::vector<const LearningRecord*> eligible;
    for (const auto& rec : d.records()) {
        if (split.train_ids.contains(rec.student_id) && rec.responses.size() > static_cast<std::size_t>(cfg.n_past))
            eligible.push_back(&rec);
    }
    if (eligible.empty()) throw EmptyInput("no eligible training records for the classifier");

    const auto n = static_cast<std::ptrdiff_t>(eligible.size());
    std::vector<std::vector<ClassifierExample>> per_record(eligible.size());
    std::vector<std::exception_ptr> errors(eligible.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.workers)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        try {
            const auto* rec = eligible[i];
            const auto w = partition_history(d, rec->student_id, rec->lecture_id, cfg.n_past);
            const auto initial = initial_prediction(w, ctx, derive_seed(cfg.seed, rec->student_id, rec->lecture_id));
            std::string reflection;
            if (db) {
                if (const auto* e = db->find(rec->student_id, rec->lecture_id)) reflection = e->reflection;
            }
            for (std::size_t q = 0; q < w.future.size(); ++q) {
                per_record[i].push_back(
                    {featurize(w.future[q].question, initial.entries[q].correct, reflection), w.y_future[q]});
            }
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }

    std::vector<ClassifierExample> out;
    std::exception_ptr first_error;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        if (errors[i] && !first_error) first_error = errors[i];
        for (auto& ex : per_record[i]) out.push_back(std::move(ex));
    }
    if (out.empty() && first_error) std::rethrow_exception(first_error);
    return out;
}

SimulationReport simulate_classifier(const Dataset& d, std::span<const SimulationTarget> targets,
                                     const AgentContext& ctx, const Classifier& classifier,
                                     const SimulationOptions& opt) {
    require_db(opt);
    SimulationOptions tagged = opt;
    tagged.variant = Variant::Classifier;
    return run_targets(d, targets, ctx, tagged, [&](const HistoryWindow& w, const AgentContext& local, std::uint64_t seed) {
        const auto initial = initial_prediction(w, local, seed);
        std::string reflection;
        if (opt.tir) {
            const auto exemplars = exemplars_for(w, opt);
            reflection = transfer_reflection(exemplars, w, local, seed).text;
        }
        PredictionSet out;
        for (std::size_t q = 0; q < w.future.size(); ++q) {
            const auto& item = w.future[q].question;
            out.entries.push_back(
                {item.question_id, classifier.classify(featurize(item, initial.entries[q].correct, reflection)),
                 std::nullopt});
        }
        return out;
    });
}

}  // namespace simulacra
