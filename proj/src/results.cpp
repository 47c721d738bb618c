#include "simulacra/results.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <algorithm>
#include <array>

namespace simulacra {

std::string_view to_string(Variant v) noexcept {
    switch (v) {
        case Variant::Standard: return "standard";
        case Variant::CoT: return "cot";
        case Variant::Classifier: return "classifier";
    }
    return "standard";
}

Variant variant_from_string(std::string_view s) {
    if (s == "standard") return Variant::Standard;
    if (s == "cot") return Variant::CoT;
    if (s == "classifier") return Variant::Classifier;
    throw InvalidArgument("unknown variant '" + std::string(s) + "'");
}

std::string results_to_csv(std::vector<SimulationResult> results) {
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
        return std::tie(a.student_id, a.lecture_id) < std::tie(b.student_id, b.lecture_id);
    });
    std::string out(kResultsHeader);
    out += "\n";
    for (const auto& r : results) {
        if (r.labels.size() != r.predictions.size()) throw LengthMismatch(r.predictions.size(), r.labels.size());
        for (std::size_t i = 0; i < r.predictions.size(); ++i) {
            const std::array<std::string, 7> row{r.student_id,
                                                 r.lecture_id,
                                                 r.predictions.entries[i].question_id,
                                                 r.predictions.entries[i].correct ? "1" : "0",
                                                 r.labels[i] ? "1" : "0",
                                                 std::string(to_string(r.variant)),
                                                 r.tir ? "1" : "0"};
            out += csv_line(row);
        }
    }
    return out;
}

std::vector<SimulationResult> results_from_csv(std::string_view csv) {
    const auto rows = parse_csv(csv);
    if (rows.empty()) throw ParseError("results CSV is empty");
    std::string header;
    for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
    if (header != kResultsHeader) throw ParseError("results CSV header must be '" + std::string(kResultsHeader) + "'");

    std::vector<SimulationResult> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::string where = "results CSV line " + std::to_string(i + 1);
        if (row.size() != 7) throw ParseError(where + ": expected 7 fields");
        bool predicted = false;
        bool label = false;
        bool tir = false;
        if (!parse_bool_token(row[3], predicted) || !parse_bool_token(row[4], label) || !parse_bool_token(row[6], tir))
            throw ParseError(where + ": boolean fields must be 0/1");
        Variant variant;
        try {
            variant = variant_from_string(row[5]);
        } catch (const InvalidArgument&) {
            throw ParseError(where + ": unknown variant " + row[5]);
        }
        if (out.empty() || out.back().student_id != row[0] || out.back().lecture_id != row[1]) {
            SimulationResult r;
            r.student_id = row[0];
            r.lecture_id = row[1];
            r.variant = variant;
            r.tir = tir;
            out.push_back(std::move(r));
        }
        auto& r = out.back();
        for (const auto& e : r.predictions.entries) {
            if (e.question_id == row[2]) throw IntegrityError(row[2], where + ": duplicate question for " + row[0]);
        }
        r.predictions.entries.push_back({row[2], predicted, std::nullopt});
        r.labels.push_back(label);
    }
    return out;
}

}  // namespace simulacra
