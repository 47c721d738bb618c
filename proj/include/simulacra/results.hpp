#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "simulacra/dataset.hpp"
#include "simulacra/reflection.hpp"

namespace simulacra {

enum class Variant { Standard, CoT, Classifier };

std::string_view to_string(Variant v) noexcept;
Variant variant_from_string(std::string_view s);

/// Predictions for one simulated (student, lecture). `labels` are joined from the
/// dataset after the pipeline has finished and are aligned with predictions.
struct SimulationResult {
    StudentId student_id;
    LectureId lecture_id;
    PredictionSet predictions;
    std::vector<bool> labels;
    Variant variant = Variant::Standard;
    bool tir = false;
    bool operator==(const SimulationResult&) const = default;
};

inline constexpr std::string_view kResultsHeader = "student_id,lecture_id,question_id,predicted,label,variant,tir";

/// One row per future question, rows sorted by (student, lecture) then question order.
std::string results_to_csv(std::vector<SimulationResult> results);
/// Inverse of results_to_csv (reasons are not persisted).
std::vector<SimulationResult> results_from_csv(std::string_view csv);

}  // namespace simulacra
