#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "simulacra/dataset.hpp"
#include "simulacra/results.hpp"

namespace simulacra {

struct MetricReport {
    double accuracy = 0.0;
    double f1 = 0.0;  // positive class = answered correctly
    std::size_t n = 0;
};

/// accuracy = matches / n; f1 = 2TP / (2TP + FP + FN), 0 when the denominator is 0.
MetricReport accuracy_f1(const std::vector<bool>& predictions, const std::vector<bool>& labels);
MetricReport accuracy_f1(const std::vector<SimulationResult>& results);

/// Sample Pearson correlation; nullopt ("undefined") when either variance is 0.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

enum class Level { Individual, Lecture, Question, Slide };
std::string_view to_string(Level level) noexcept;
Level level_from_string(std::string_view s);

struct SeriesReport {
    Level level = Level::Individual;
    std::vector<std::string> keys;  // sorted ids
    std::vector<double> sim_values;
    std::vector<double> label_values;
    std::optional<double> pearson_r;
};

/// Mean predicted correctness and mean labeled correctness per key. At Slide level
/// a question counts once toward every slide it references.
SeriesReport aggregate(const std::vector<SimulationResult>& results, const Dataset& d, Level level);

struct KeyedSeries {
    std::vector<std::string> keys;
    std::vector<double> values;
};

/// Per-key simulation accuracy (fraction of predictions equal to the label).
KeyedSeries accuracy_series(const std::vector<SimulationResult>& results, const Dataset& d, Level level);

// ---- inter-student graph -----------------------------------------------------------

struct Observation {
    StudentId student_id;
    LectureId lecture_id;
    QuestionId question_id;
    int position = 0;
    bool value = false;
};

std::vector<Observation> observations_from_records(const Dataset& d);
/// `use_predictions` selects simulated answers, otherwise the joined labels.
std::vector<Observation> observations_from_results(const std::vector<SimulationResult>& results, const Dataset& d,
                                                   bool use_predictions);

struct GraphEdge {
    std::optional<double> r;
    std::size_t n = 0;  // aligned questions
};

struct StudentGraph {
    std::map<StudentId, double> nodes;
    std::map<std::pair<StudentId, StudentId>, GraphEdge> edges;  // key.first < key.second

    const GraphEdge* edge(const StudentId& a, const StudentId& b) const;
};

/// Node = mean correctness over all of a student's answers. Edge between students
/// sharing a lecture = Pearson of their answers to common questions of the shared
/// lectures, ordered by (lecture_id, question position).
StudentGraph interstudent_graph(const std::vector<Observation>& observations);

nlohmann::json graph_to_json(const StudentGraph& g);
std::string graph_to_dot(const StudentGraph& g);

// ---- agreement -----------------------------------------------------------------------

struct AgreementReport {
    double bias = 0.0;
    double sd = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    std::optional<double> t_statistic;  // absent when sd == 0
    int df = 0;
    std::size_t n = 0;
};

/// Bland-Altman on a - b with sample sd and 1.96 multiplier, plus the paired t statistic.
AgreementReport bland_altman_paired_t(std::span<const double> a, std::span<const double> b);
/// Throws ZeroVariance when the differences have zero sd.
double paired_t_statistic(std::span<const double> a, std::span<const double> b);

nlohmann::json agreement_to_json(const AgreementReport& r);
std::string series_to_csv(const SeriesReport& s);

}  // namespace simulacra
