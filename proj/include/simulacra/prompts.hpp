#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "simulacra/dataset.hpp"
#include "simulacra/error.hpp"
#include "simulacra/llm.hpp"
#include "simulacra/reflection.hpp"

namespace simulacra {

inline constexpr std::size_t kDefaultPromptBudget = 48'000;

struct Prompt {
    std::vector<ChatMessage> messages;
    std::size_t estimated_size = 0;

    ChatRequest to_request(const std::string& model_id, double temperature, int max_tokens,
                           std::optional<std::uint64_t> seed_hint = std::nullopt) const;
};

/// Named UTF-8 templates with {{placeholder}} slots. Defaults are compiled in from
/// the repository's templates/ directory.
class Templates {
public:
    static Templates defaults();
    /// Defaults overridden by any `<name>.txt` present in `dir`. Unknown names are rejected.
    static Templates load_dir(const std::filesystem::path& dir);

    const std::string& get(const std::string& name) const;
    const std::map<std::string, std::string>& all() const noexcept { return files_; }

private:
    std::map<std::string, std::string> files_;
};

/// Substitutes every {{name}}; a placeholder without a value is an error.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values);

/// The one rendering of a known answer used anywhere in a prompt. The leakage
/// scanner searches for this token.
std::string label_token(const QuestionId& id);
std::string label_line(const QuestionId& id, bool correct);

/// Canonical "Question <id>: Correct|Incorrect[, Reason: ...]" lines.
std::string render_predictions(const PredictionSet& predictions);

/// Scans lines of the form `Question <id>: Correct|Incorrect|Wrong[, Reason: ...]`,
/// case-insensitively. Throws MalformedPrediction when an expected id is missing
/// or appears with conflicting values; unexpected ids are ignored.
PredictionSet parse_prediction(std::string_view text, std::span<const QuestionId> expected_ids);

/// Builds every prompt the pipelines send. All builders are pure and enforce the
/// character budget.
class PromptKit {
public:
    explicit PromptKit(Templates templates = Templates::defaults(), std::size_t budget = kDefaultPromptBudget);

    std::size_t budget() const noexcept { return budget_; }
    const Templates& templates() const noexcept { return templates_; }

    Prompt build_standard_prompt(const HistoryWindow& w, std::span<const std::string> exemplars = {}) const;
    Prompt build_cot_prompt(const HistoryWindow& w, std::span<const std::string> exemplars = {}) const;
    /// Prediction prompt for a ground-truth-blind novice holding one reflection.
    Prompt build_novice_prompt(const HistoryWindow& w, const std::string& reflection) const;
    Prompt build_reflection_prompt(const HistoryWindow& w, const TirTrace& prior, Direction direction) const;
    Prompt build_transfer_prompt(std::span<const ReflectionEntry> exemplars, const HistoryWindow& w) const;

    /// Follow-up turn asking for a well-formed answer after MalformedPrediction.
    std::string format_reminder(const MalformedPrediction& error) const;

private:
    std::string render_history_body(const HistoryWindow& w) const;
    std::string render_prediction_body(const HistoryWindow& w, const std::string& preamble,
                                       const std::string& guidance) const;
    std::string render_exemplars(std::span<const std::string> exemplars) const;
    std::string render_past(const HistoryWindow& w) const;
    std::string render_future(const HistoryWindow& w) const;
    std::string render_materials(const std::vector<CourseSlide>& slides) const;
    Prompt finish(std::vector<ChatMessage> messages) const;

    Templates templates_;
    std::size_t budget_;
};

}  // namespace simulacra
