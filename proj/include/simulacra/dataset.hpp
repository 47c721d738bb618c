#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace simulacra {

using StudentId = std::string;
using LectureId = std::string;
using QuestionId = std::string;
using SlideId = std::string;

struct Lecture {
    LectureId lecture_id;
    std::string title;
    bool operator==(const Lecture&) const = default;
};

struct CourseSlide {
    SlideId slide_id;
    LectureId lecture_id;
    int position = 0;
    std::string content;
    bool operator==(const CourseSlide&) const = default;
};

struct QuestionItem {
    QuestionId question_id;
    LectureId lecture_id;
    int position = 0;
    std::string text;
    std::vector<SlideId> slide_refs;
    std::vector<std::string> skill_tags;
    bool operator==(const QuestionItem&) const = default;
};

struct Response {
    QuestionId question_id;
    bool correct = false;
    bool operator==(const Response&) const = default;
};

struct LearningRecord {
    StudentId student_id;
    LectureId lecture_id;
    std::vector<Response> responses;
    bool operator==(const LearningRecord&) const = default;
};

/// Validated, immutable-after-load course dataset. Tables are keyed by id so the
/// canonical serialization is order independent.
class Dataset {
public:
    /// Validates every invariant and throws IntegrityError naming the offender.
    Dataset(std::set<StudentId> students, std::map<LectureId, Lecture> lectures,
            std::map<SlideId, CourseSlide> slides, std::map<QuestionId, QuestionItem> questions,
            std::vector<LearningRecord> records);

    const std::set<StudentId>& students() const noexcept { return students_; }
    const std::map<LectureId, Lecture>& lectures() const noexcept { return lectures_; }
    const std::map<SlideId, CourseSlide>& slides() const noexcept { return slides_; }
    const std::map<QuestionId, QuestionItem>& questions() const noexcept { return questions_; }
    /// Sorted by (student_id, lecture_id).
    const std::vector<LearningRecord>& records() const noexcept { return records_; }

    const QuestionItem& question(const QuestionId& id) const;
    const CourseSlide& slide(const SlideId& id) const;
    const Lecture& lecture(const LectureId& id) const;
    const LearningRecord& record(const StudentId& student, const LectureId& lecture) const;
    const LearningRecord* find_record(const StudentId& student, const LectureId& lecture) const;

    /// Questions of a lecture in post-test order.
    std::vector<const QuestionItem*> lecture_questions(const LectureId& id) const;

    bool operator==(const Dataset&) const = default;

private:
    void validate();

    std::set<StudentId> students_;
    std::map<LectureId, Lecture> lectures_;
    std::map<SlideId, CourseSlide> slides_;
    std::map<QuestionId, QuestionItem> questions_;
    std::vector<LearningRecord> records_;
};

Dataset dataset_from_json(const nlohmann::json& j);
nlohmann::json dataset_to_json(const Dataset& d);

Dataset load_dataset(const std::filesystem::path& path);
/// Canonical UTF-8 form: tables sorted by id, two-space indent, trailing newline.
std::string serialize_dataset(const Dataset& d);
void save_dataset(const Dataset& d, const std::filesystem::path& path);
/// SHA-256 of the canonical serialization.
std::string dataset_hash(const Dataset& d);

// ---- splitting -----------------------------------------------------------------

struct SplitSpec {
    double ratio = 0.8;
    std::uint64_t seed = 0;
    std::set<StudentId> train_ids;
    std::set<StudentId> val_ids;
    std::set<StudentId> test_ids;
    bool operator==(const SplitSpec&) const = default;
};

/// Protocol presets.
inline constexpr double kEduAgentSplitRatio = 0.8;
inline constexpr double kClassroomSplitRatio = 0.7;

/// Shuffles students (sorted by id) with `seed`; the first round(ratio * N) form
/// train+val, which is re-split with the same ratio and seed + 1.
SplitSpec split_individual_wise(const Dataset& d, double ratio, std::uint64_t seed);
SplitSpec split_individual_wise(const std::set<StudentId>& students, double ratio,
                                std::uint64_t seed);

nlohmann::json split_to_json(const SplitSpec& s);
SplitSpec split_from_json(const nlohmann::json& j);

// ---- history windows --------------------------------------------------------------

struct PastItem {
    QuestionItem question;
    std::vector<CourseSlide> materials;
    bool correct = false;
};

struct FutureItem {
    QuestionItem question;
    std::vector<CourseSlide> materials;
};

inline constexpr int kDefaultPastCount = 5;

/// l_past / l_future / y_future partition of one record. `y_future` is ground truth
/// and only training and evaluation code reads it; test-time pipelines strip it.
struct HistoryWindow {
    StudentId student_id;
    LectureId lecture_id;
    std::string lecture_title;
    std::vector<PastItem> past;
    std::vector<FutureItem> future;
    std::vector<bool> y_future;

    std::vector<QuestionId> future_ids() const;
    HistoryWindow without_labels() const;
};

HistoryWindow partition_history(const Dataset& d, const StudentId& student,
                                const LectureId& lecture, int n_past = kDefaultPastCount);

/// Slides referenced by the question, in lecture position order.
std::vector<CourseSlide> materials_for(const Dataset& d, const QuestionId& question);

}  // namespace simulacra
