#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simulacra/dataset.hpp"

namespace simulacra {

/// One predicted answer, optionally with the agent's stated reason.
struct PredictionEntry {
    QuestionId question_id;
    bool correct = false;
    std::optional<std::string> reason;
    bool operator==(const PredictionEntry&) const = default;
};

/// Predictions for exactly the requested future question ids, in request order.
struct PredictionSet {
    std::vector<PredictionEntry> entries;

    const PredictionEntry& at(const QuestionId& id) const;
    std::vector<bool> as_bools() const;
    std::size_t size() const noexcept { return entries.size(); }
    bool operator==(const PredictionSet&) const = default;
};

/// Number of predictions agreeing with `labels` (aligned with `entries`).
std::size_t count_matches(const PredictionSet& predictions, const std::vector<bool>& labels);

struct ReflectionText {
    std::string text;
    int iteration = 1;
};

enum class Direction { Initial, DifferentDirection, SameDirection };
std::string_view to_string(Direction d) noexcept;

struct TirIteration {
    ReflectionText reflection;
    PredictionSet novice_prediction;
    double accuracy = 0.0;
    std::size_t matches = 0;
    /// Direction requested from the reflective agent after this iteration.
    Direction feedback_direction = Direction::SameDirection;
};

struct TirTrace {
    PredictionSet initial_prediction;
    double acc_0 = 0.0;
    std::size_t initial_matches = 0;
    std::vector<TirIteration> iterations;

    /// Index of the earliest iteration with the highest accuracy.
    std::size_t best_index() const;
};

struct ReflectionEntry {
    LectureId lecture_id;
    StudentId student_id;
    std::string reflection;
    double acc_best = 0.0;
    double acc_0 = 0.0;
    bool improved = false;
    std::uint64_t seed_used = 0;
    bool operator==(const ReflectionEntry&) const = default;
};

}  // namespace simulacra
