#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simulacra/dataset.hpp"
#include "simulacra/llm.hpp"
#include "simulacra/prompts.hpp"
#include "simulacra/reflection.hpp"

namespace simulacra {

struct AgentOptions {
    std::string model_id;  // empty: the backend's own model id
    double temperature = 0.0;
    int max_tokens = 1024;
};

/// Everything an agent call needs. Cheap to copy; the backend must outlive it.
struct AgentContext {
    Backend* backend = nullptr;
    const PromptKit* prompts = nullptr;
    AgentOptions options;

    std::string send(const Prompt& prompt, std::optional<std::uint64_t> seed) const;
    std::string send(std::vector<ChatMessage> messages, std::optional<std::uint64_t> seed) const;
};

/// Sends a prediction prompt and parses the reply. A malformed reply is answered
/// once with a format reminder in the same conversation; a second failure throws.
PredictionSet request_prediction(const AgentContext& ctx, const Prompt& prompt, std::span<const QuestionId> ids,
                                 std::optional<std::uint64_t> seed = std::nullopt);

/// Standard prompt without exemplars. Never reads `w.y_future`.
PredictionSet initial_prediction(const HistoryWindow& w, const AgentContext& ctx,
                                 std::optional<std::uint64_t> seed = std::nullopt);

// ---- TIR -------------------------------------------------------------------------

struct TirConfig {
    int max_iterations = 5;
    int exemplars_m = 4;
    std::uint64_t seed = 0;
    int n_past = kDefaultPastCount;
    /// Retrieve from improved entries when at least M exist.
    bool prefer_improved = true;
    /// OpenMP worker threads for per-record loops.
    int workers = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static TirConfig from_json(const nlohmann::json& j);
};

struct TirResult {
    TirTrace trace;
    ReflectionEntry entry;
};

/// Training-time loop for one labeled window: initial prediction, then repeated
/// reflection (shown y_future) and novice testing (blind to it) until the novice
/// reaches 100% or max_iterations. The next reflection is asked for a different
/// direction when acc_k < acc_0, otherwise for the same direction.
TirResult run_tir(const HistoryWindow& w, const AgentContext& ctx, const TirConfig& cfg);

struct DbMetadata {
    std::string dataset_hash;
    nlohmann::json config = nlohmann::json::object();
    bool operator==(const DbMetadata&) const = default;
};

/// Best reflections of training students, grouped by lecture, one per (student, lecture).
class ReflectionDB {
public:
    ReflectionDB() = default;
    explicit ReflectionDB(DbMetadata meta) : meta_(std::move(meta)) {}

    void add(ReflectionEntry entry);

    const DbMetadata& metadata() const noexcept { return meta_; }
    /// Entries of one lecture sorted by student id; empty when absent.
    std::span<const ReflectionEntry> lecture(const LectureId& id) const;
    const std::map<LectureId, std::vector<ReflectionEntry>>& by_lecture() const noexcept { return entries_; }
    std::size_t size() const noexcept;
    bool empty() const noexcept { return size() == 0; }
    const ReflectionEntry* find(const StudentId& student, const LectureId& lecture) const;

    /// JSON Lines: header {"schema":"tir-db/1",...} then one entry per line.
    std::string serialize() const;
    static ReflectionDB parse(std::string_view jsonl);
    static ReflectionDB load(const std::filesystem::path& path);

    bool operator==(const ReflectionDB&) const = default;

private:
    DbMetadata meta_;
    std::map<LectureId, std::vector<ReflectionEntry>> entries_;
};

inline constexpr const char* kReflectionDbSchema = "tir-db/1";

struct RecordIssue {
    StudentId student_id;
    LectureId lecture_id;
    std::string reason;
};

struct DbBuildReport {
    ReflectionDB db;
    std::vector<RecordIssue> skipped;  // ineligible records (too short)
    std::vector<RecordIssue> failed;   // backend or parse failures
};

/// One run_tir per record of every training student, parallel over records with
/// per-record seeds. Throws the first failure only when every eligible record failed.
DbBuildReport build_reflection_db(const Dataset& d, const SplitSpec& split, const AgentContext& ctx,
                                  const TirConfig& cfg);

/// Seeded uniform sample without replacement of min(M, available) entries.
std::vector<ReflectionEntry> retrieve_exemplars(const ReflectionDB& db, const LectureId& lecture, int m,
                                                std::uint64_t seed, bool prefer_improved = true);

/// Test-time reflection for an unseen student from same-lecture exemplars. The
/// window's labels are never rendered.
ReflectionText transfer_reflection(std::span<const ReflectionEntry> exemplars, const HistoryWindow& w,
                                   const AgentContext& ctx, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace simulacra
