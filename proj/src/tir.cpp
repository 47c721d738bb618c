#include "simulacra/tir.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <algorithm>
#include <exception>
#include <random>

namespace simulacra {

using nlohmann::json;

namespace {

std::string trim_copy(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

double ratio(std::size_t num, std::size_t den) { return static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

// ---- agents --------------------------------------------------------------------------

std::string AgentContext::send(std::vector<ChatMessage> messages, std::optional<std::uint64_t> seed) const {
    ChatRequest req;
    req.model_id = options.model_id.empty() ? backend->model_id() : options.model_id;
    req.messages = std::move(messages);
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    req.seed_hint = seed;
    return backend->chat(req);
}

std::string AgentContext::send(const Prompt& prompt, std::optional<std::uint64_t> seed) const {
    return send(prompt.messages, seed);
}

PredictionSet request_prediction(const AgentContext& ctx, const Prompt& prompt, std::span<const QuestionId> ids,
                                 std::optional<std::uint64_t> seed) {
    const std::string first = ctx.send(prompt, seed);
    try {
        return parse_prediction(first, ids);
    } catch (const MalformedPrediction& e) {
        auto messages = prompt.messages;
        messages.push_back({Role::Assistant, first.empty() ? std::string("(empty reply)") : first});
        messages.push_back({Role::User, ctx.prompts->format_reminder(e)});
        return parse_prediction(ctx.send(std::move(messages), seed), ids);
    }
}

PredictionSet initial_prediction(const HistoryWindow& w, const AgentContext& ctx, std::optional<std::uint64_t> seed) {
    const auto blind = w.without_labels();
    const auto ids = blind.future_ids();
    return request_prediction(ctx, ctx.prompts->build_standard_prompt(blind), ids, seed);
}

// ---- config ----------------------------------------------------------------------------

void TirConfig::validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (exemplars_m < 1) throw InvalidArgument("M must be >= 1");
    if (n_past < 1) throw InvalidArgument("n_past must be >= 1");
    if (workers < 1) throw InvalidArgument("workers must be >= 1");
}

json TirConfig::to_json() const {
    // workers is deliberately absent: it must not change any output.
    return {{"max_iterations", max_iterations}, {"M", exemplars_m}, {"seed", seed}, {"n_past", n_past},
            {"prefer_improved", prefer_improved}};
}

TirConfig TirConfig::from_json(const json& j) {
    TirConfig c;
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.exemplars_m = j.value("M", c.exemplars_m);
    c.seed = j.value("seed", c.seed);
    c.n_past = j.value("n_past", c.n_past);
    c.prefer_improved = j.value("prefer_improved", c.prefer_improved);
    c.validate();
    return c;
}

// ---- run_tir -------------------------------------------------------------------------------

TirResult run_tir(const HistoryWindow& w, const AgentContext& ctx, const TirConfig& cfg) {
    cfg.validate();
    if (w.y_future.size() != w.future.size() || w.future.empty())
        throw InvalidArgument("run_tir needs ground truth for every future question");

    const std::uint64_t seed = derive_seed(cfg.seed, w.student_id, w.lecture_id);
    const auto blind = w.without_labels();
    const auto ids = w.future_ids();
    const std::size_t n = ids.size();

    TirTrace trace;
    trace.initial_prediction = initial_prediction(blind, ctx, seed);
    trace.initial_matches = count_matches(trace.initial_prediction, w.y_future);
    trace.acc_0 = ratio(trace.initial_matches, n);

    Direction direction = Direction::Initial;
    for (int k = 1; k <= cfg.max_iterations; ++k) {
        std::string reflection = trim_copy(ctx.send(ctx.prompts->build_reflection_prompt(w, trace, direction), seed));
        if (reflection.empty()) throw BadResponse("reflective agent returned an empty reflection");

        TirIteration it;
        it.reflection = {std::move(reflection), k};
        it.novice_prediction =
            request_prediction(ctx, ctx.prompts->build_novice_prompt(blind, it.reflection.text), ids, seed);
        it.matches = count_matches(it.novice_prediction, w.y_future);
        it.accuracy = ratio(it.matches, n);
        it.feedback_direction =
            it.matches < trace.initial_matches ? Direction::DifferentDirection : Direction::SameDirection;
        direction = it.feedback_direction;
        const bool perfect = it.matches == n;
        trace.iterations.push_back(std::move(it));
        if (perfect) break;
    }

    const auto& best = trace.iterations[trace.best_index()];
    ReflectionEntry entry;
    entry.lecture_id = w.lecture_id;
    entry.student_id = w.student_id;
    entry.reflection = best.reflection.text;
    entry.acc_best = best.accuracy;
    entry.acc_0 = trace.acc_0;
    entry.improved = best.matches > trace.initial_matches;
    entry.seed_used = seed;
    return {std::move(trace), std::move(entry)};
}

// ---- ReflectionDB -----------------------------------------------------------------------------

namespace {

json entry_to_json(const ReflectionEntry& e) {
    return {{"lecture_id", e.lecture_id}, {"student_id", e.student_id}, {"reflection", e.reflection},
            {"acc_best", e.acc_best},     {"acc_0", e.acc_0},           {"improved", e.improved},
            {"seed_used", e.seed_used}};
}

ReflectionEntry entry_from_json(const json& j) {
    try {
        ReflectionEntry e;
        e.lecture_id = j.at("lecture_id").get<std::string>();
        e.student_id = j.at("student_id").get<std::string>();
        e.reflection = j.at("reflection").get<std::string>();
        e.acc_best = j.at("acc_best").get<double>();
        e.acc_0 = j.at("acc_0").get<double>();
        e.improved = j.at("improved").get<bool>();
        e.seed_used = j.at("seed_used").get<std::uint64_t>();
        return e;
    } catch (const json::exception& ex) {
        throw ParseError(std::string("reflection entry: ") + ex.what());
    }
}

}  // namespace

void ReflectionDB::add(ReflectionEntry entry) {
    auto& bucket = entries_[entry.lecture_id];
    auto pos = std::lower_bound(bucket.begin(), bucket.end(), entry.student_id,
                                [](const ReflectionEntry& e, const StudentId& s) { return e.student_id < s; });
    if (pos != bucket.end() && pos->student_id == entry.student_id)
        throw IntegrityError(entry.student_id + "/" + entry.lecture_id, "duplicate reflection entry");
    bucket.insert(pos, std::move(entry));
}

std::span<const ReflectionEntry> ReflectionDB::lecture(const LectureId& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) return {};
    return it->second;
}

std::size_t ReflectionDB::size() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, v] : entries_) n += v.size();
    return n;
}

const ReflectionEntry* ReflectionDB::find(const StudentId& student, const LectureId& lecture_id) const {
    for (const auto& e : lecture(lecture_id)) {
        if (e.student_id == student) return &e;
    }
    return nullptr;
}

std::string ReflectionDB::serialize() const {
    std::string out =
        json{{"schema", kReflectionDbSchema}, {"dataset_hash", meta_.dataset_hash}, {"config", meta_.config}}.dump();
    out += "\n";
    for (const auto& [_, bucket] : entries_) {
        for (const auto& e : bucket) out += entry_to_json(e).dump() + "\n";
    }
    return out;
}

ReflectionDB ReflectionDB::parse(std::string_view jsonl) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < jsonl.size()) {
        auto end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        auto line = jsonl.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        start = end + 1;
    }
    if (lines.empty()) throw ParseError("reflection db is empty (missing header line)");
    try {
        const auto header = json::parse(lines.front());
        if (header.value("schema", std::string{}) != kReflectionDbSchema)
            throw ParseError("reflection db header must declare schema " + std::string(kReflectionDbSchema));
        ReflectionDB db(DbMetadata{header.value("dataset_hash", std::string{}),
                                   header.value("config", json::object())});
        for (std::size_t i = 1; i < lines.size(); ++i) db.add(entry_from_json(json::parse(lines[i])));
        return db;
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("reflection db: ") + e.what());
    }
}

ReflectionDB ReflectionDB::load(const std::filesystem::path& path) { return parse(read_file(path)); }

// ---- build / retrieve / transfer ----------------------------------------------------------------

DbBuildReport build_reflection_db(const Dataset& d, const SplitSpec& split, const AgentContext& ctx,
                                  const TirConfig& cfg) {
    cfg.validate();
    DbBuildReport report;
    report.db = ReflectionDB(DbMetadata{dataset_hash(d), cfg.to_json()});

    std::vector<const LearningRecord*> eligible;
    for (const auto& rec : d.records()) {
        if (!split.train_ids.contains(rec.student_id)) continue;
        if (rec.responses.size() <= static_cast<std::size_t>(cfg.n_past)) {
            report.skipped.push_back({rec.student_id, rec.lecture_id,
                                      "record has " + std::to_string(rec.responses.size()) + " responses, need more than " +
                                          std::to_string(cfg.n_past)});
            continue;
        }
        eligible.push_back(&rec);
    }
    if (eligible.empty()) throw EmptyInput("no eligible training records");

    const auto n = static_cast<std::ptrdiff_t>(eligible.size());
    std::vector<std::optional<ReflectionEntry>> entries(eligible.size());
    std::vector<std::exception_ptr> errors(eligible.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.workers)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const auto* rec = eligible[static_cast<std::size_t>(i)];
            const auto w = partition_history(d, rec->student_id, rec->lecture_id, cfg.n_past);
            entries[static_cast<std::size_t>(i)] = run_tir(w, ctx, cfg).entry;
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }

    std::exception_ptr first_error;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        if (entries[i]) {
            report.db.add(std::move(*entries[i]));
            continue;
        }
        if (!first_error) first_error = errors[i];
        std::string why = "unknown error";
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            why = e.what();
        } catch (...) {
        }
        report.failed.push_back({eligible[i]->student_id, eligible[i]->lecture_id, why});
    }
    if (report.db.empty() && first_error) std::rethrow_exception(first_error);
    return report;
}

std::vector<ReflectionEntry> retrieve_exemplars(const ReflectionDB& db, const LectureId& lecture, int m,
                                                std::uint64_t seed, bool prefer_improved) {
    if (m < 1) throw InvalidArgument("M must be >= 1");
    const auto all = db.lecture(lecture);
    if (all.empty()) throw NoExemplars(lecture);

    std::vector<ReflectionEntry> pool;
    if (prefer_improved) {
        for (const auto& e : all) {
            if (e.improved) pool.push_back(e);
        }
        if (pool.size() < static_cast<std::size_t>(m)) pool.clear();
    }
    if (pool.empty()) pool.assign(all.begin(), all.end());

    // Partial Fisher-Yates over the id-sorted pool.
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

ReflectionText transfer_reflection(std::span<const ReflectionEntry> exemplars, const HistoryWindow& w,
                                   const AgentContext& ctx, std::optional<std::uint64_t> seed) {
    const auto prompt = ctx.prompts->build_transfer_prompt(exemplars, w.without_labels());
    std::string text = trim_copy(ctx.send(prompt, seed));
    if (text.empty()) throw BadResponse("reflective agent returned an empty transfer reflection");
    return {std::move(text), 1};
}

}  // namespace simulacra
