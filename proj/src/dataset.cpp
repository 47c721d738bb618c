#include "simulacra/dataset.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace simulacra {

using nlohmann::json;

Dataset::Dataset(std::set<StudentId> students, std::map<LectureId, Lecture> lectures,
                 std::map<SlideId, CourseSlide> slides, std::map<QuestionId, QuestionItem> questions,
                 std::vector<LearningRecord> records)
    : students_(std::move(students)),
      lectures_(std::move(lectures)),
      slides_(std::move(slides)),
      questions_(std::move(questions)),
      records_(std::move(records)) {
    std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) {
        return std::tie(a.student_id, a.lecture_id) < std::tie(b.student_id, b.lecture_id);
    });
    validate();
}

void Dataset::validate() {
    for (const auto& [id, lec] : lectures_) {
        if (id != lec.lecture_id) throw IntegrityError(id, "lecture key does not match lecture_id");
    }

    std::map<LectureId, std::vector<int>> slide_positions;
    for (const auto& [id, s] : slides_) {
        if (id != s.slide_id) throw IntegrityError(id, "slide key does not match slide_id");
        if (!lectures_.contains(s.lecture_id))
            throw IntegrityError(id, "slide references unknown lecture " + s.lecture_id);
        if (s.content.empty()) throw IntegrityError(id, "slide content is empty");
        if (s.position < 0) throw IntegrityError(id, "negative slide position");
        slide_positions[s.lecture_id].push_back(s.position);
    }
    for (auto& [lecture, positions] : slide_positions) {
        std::sort(positions.begin(), positions.end());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            if (positions[i] != static_cast<int>(i))
                throw IntegrityError(lecture, "slide positions must be unique and contiguous from 0");
        }
    }

    std::map<LectureId, std::set<int>> question_positions;
    for (const auto& [id, q] : questions_) {
        if (id != q.question_id) throw IntegrityError(id, "question key does not match question_id");
        if (!lectures_.contains(q.lecture_id))
            throw IntegrityError(id, "question references unknown lecture " + q.lecture_id);
        if (q.position < 0) throw IntegrityError(id, "negative question position");
        if (!question_positions[q.lecture_id].insert(q.position).second)
            throw IntegrityError(id, "duplicate question position within lecture " + q.lecture_id);
        if (q.slide_refs.empty()) throw IntegrityError(id, "question has no slide_refs");
        for (const auto& ref : q.slide_refs) {
            auto it = slides_.find(ref);
            if (it == slides_.end()) throw IntegrityError(ref, "dangling slide_ref in question " + id);
            if (it->second.lecture_id != q.lecture_id)
                throw IntegrityError(ref, "slide belongs to a different lecture than question " + id);
        }
    }

    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (!students_.contains(r.student_id))
            throw IntegrityError(r.student_id, "record references unknown student");
        if (!lectures_.contains(r.lecture_id))
            throw IntegrityError(r.lecture_id, "record references unknown lecture");
        if (i > 0 && records_[i - 1].student_id == r.student_id &&
            records_[i - 1].lecture_id == r.lecture_id)
            throw IntegrityError(r.student_id + "/" + r.lecture_id, "duplicate (student, lecture) record");
        std::set<QuestionId> seen;
        int last_position = -1;
        for (const auto& resp : r.responses) {
            auto it = questions_.find(resp.question_id);
            if (it == questions_.end())
                throw IntegrityError(resp.question_id, "record of " + r.student_id + " references unknown question");
            if (it->second.lecture_id != r.lecture_id)
                throw IntegrityError(resp.question_id, "question does not belong to lecture " + r.lecture_id);
            if (!seen.insert(resp.question_id).second)
                throw IntegrityError(resp.question_id, "question answered twice by " + r.student_id);
            if (it->second.position <= last_position)
                throw IntegrityError(resp.question_id, "responses of " + r.student_id +
                                                           " are not ordered by question position");
            last_position = it->second.position;
        }
    }
}

const QuestionItem& Dataset::question(const QuestionId& id) const {
    auto it = questions_.find(id);
    if (it == questions_.end()) throw NotFound("question " + id);
    return it->second;
}

const CourseSlide& Dataset::slide(const SlideId& id) const {
    auto it = slides_.find(id);
    if (it == slides_.end()) throw NotFound("slide " + id);
    return it->second;
}

const Lecture& Dataset::lecture(const LectureId& id) const {
    auto it = lectures_.find(id);
    if (it == lectures_.end()) throw NotFound("lecture " + id);
    return it->second;
}

const LearningRecord* Dataset::find_record(const StudentId& student, const LectureId& lecture) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), std::tie(student, lecture),
                               [](const LearningRecord& r, const auto& key) {
                                   return std::tie(r.student_id, r.lecture_id) < key;
                               });
    if (it == records_.end() || it->student_id != student || it->lecture_id != lecture) return nullptr;
    return &*it;
}

const LearningRecord& Dataset::record(const StudentId& student, const LectureId& lecture) const {
    if (const auto* r = find_record(student, lecture)) return *r;
    throw NotFound("record " + student + "/" + lecture);
}

std::vector<const QuestionItem*> Dataset::lecture_questions(const LectureId& id) const {
    std::vector<const QuestionItem*> out;
    for (const auto& [qid, q] : questions_) {
        if (q.lecture_id == id) out.push_back(&q);
    }
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->position < b->position; });
    return out;
}

// ---- json ------------------------------------------------------------------------

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key))
        throw ParseError(context + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(context + ": field '" + key + "': " + e.what());
    }
}

const json& array_field(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array())
        throw ParseError(std::string("top-level '") + key + "' must be an array");
    return j.at(key);
}

template <typename Map, typename Value>
void insert_unique(Map& map, const std::string& id, Value value) {
    if (!map.emplace(id, std::move(value)).second) throw IntegrityError(id, "duplicate id");
}

}  // namespace

Dataset dataset_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("dataset root must be an object");

    std::set<StudentId> students;
    for (const auto& s : array_field(j, "students")) {
        if (!s.is_string()) throw ParseError("student ids must be strings");
        if (!students.insert(s.get<std::string>()).second)
            throw IntegrityError(s.get<std::string>(), "duplicate student id");
    }

    std::map<LectureId, Lecture> lectures;
    for (const auto& l : array_field(j, "lectures")) {
        Lecture lec{field<std::string>(l, "lecture_id", "lecture"), l.value("title", std::string{})};
        insert_unique(lectures, lec.lecture_id, lec);
    }

    std::map<SlideId, CourseSlide> slides;
    for (const auto& s : array_field(j, "slides")) {
        CourseSlide slide{field<std::string>(s, "slide_id", "slide"),
                          field<std::string>(s, "lecture_id", "slide"), field<int>(s, "position", "slide"),
                          field<std::string>(s, "content", "slide")};
        insert_unique(slides, slide.slide_id, slide);
    }

    std::map<QuestionId, QuestionItem> questions;
    for (const auto& q : array_field(j, "questions")) {
        QuestionItem item;
        item.question_id = field<std::string>(q, "question_id", "question");
        item.lecture_id = field<std::string>(q, "lecture_id", "question " + item.question_id);
        item.position = field<int>(q, "position", "question " + item.question_id);
        item.text = field<std::string>(q, "text", "question " + item.question_id);
        item.slide_refs = field<std::vector<std::string>>(q, "slide_refs", "question " + item.question_id);
        if (q.contains("skill_tags"))
            item.skill_tags = field<std::vector<std::string>>(q, "skill_tags", "question " + item.question_id);
        insert_unique(questions, item.question_id, item);
    }

    std::vector<LearningRecord> records;
    for (const auto& r : array_field(j, "records")) {
        LearningRecord rec;
        rec.student_id = field<std::string>(r, "student_id", "record");
        rec.lecture_id = field<std::string>(r, "lecture_id", "record of " + rec.student_id);
        const std::string ctx = "record " + rec.student_id + "/" + rec.lecture_id;
        if (!r.contains("responses") || !r.at("responses").is_array())
            throw ParseError(ctx + ": 'responses' must be an array");
        for (const auto& resp : r.at("responses")) {
            rec.responses.push_back({field<std::string>(resp, "question_id", ctx),
                                     field<bool>(resp, "correct", ctx)});
        }
        records.push_back(std::move(rec));
    }

    return Dataset(std::move(students), std::move(lectures), std::move(slides), std::move(questions),
                   std::move(records));
}

json dataset_to_json(const Dataset& d) {
    json j;
    j["students"] = json::array();
    for (const auto& s : d.students()) j["students"].push_back(s);
    j["lectures"] = json::array();
    for (const auto& [id, l] : d.lectures()) j["lectures"].push_back({{"lecture_id", id}, {"title", l.title}});
    j["slides"] = json::array();
    for (const auto& [id, s] : d.slides()) {
        j["slides"].push_back(
            {{"slide_id", id}, {"lecture_id", s.lecture_id}, {"position", s.position}, {"content", s.content}});
    }
    j["questions"] = json::array();
    for (const auto& [id, q] : d.questions()) {
        j["questions"].push_back({{"question_id", id},
                                  {"lecture_id", q.lecture_id},
                                  {"position", q.position},
                                  {"text", q.text},
                                  {"slide_refs", q.slide_refs},
                                  {"skill_tags", q.skill_tags}});
    }
    j["records"] = json::array();
    for (const auto& r : d.records()) {
        json responses = json::array();
        for (const auto& resp : r.responses)
            responses.push_back({{"question_id", resp.question_id}, {"correct", resp.correct}});
        j["records"].push_back(
            {{"student_id", r.student_id}, {"lecture_id", r.lecture_id}, {"responses", responses}});
    }
    return j;
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return dataset_from_json(j);
}

std::string serialize_dataset(const Dataset& d) { return dataset_to_json(d).dump(2) + "\n"; }

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    write_file(path, serialize_dataset(d));
}

std::string dataset_hash(const Dataset& d) { return sha256_hex(dataset_to_json(d).dump()); }

// ---- split -------------------------------------------------------------------------

SplitSpec split_individual_wise(const std::set<StudentId>& students, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie in (0, 1)");
    const auto n = static_cast<long>(students.size());
    if (n < 3) throw DegenerateSplit("need at least 3 students, have " + std::to_string(n));

    const long n_train_val = std::lround(ratio * static_cast<double>(n));
    const long n_test = n - n_train_val;
    const long n_train = std::lround(ratio * static_cast<double>(n_train_val));
    const long n_val = n_train_val - n_train;
    if (n_test <= 0 || n_train <= 0 || n_val <= 0) {
        throw DegenerateSplit("ratio " + format_real(ratio) + " over " + std::to_string(n) +
                              " students leaves a partition empty");
    }

    std::vector<StudentId> order(students.begin(), students.end());
    std::mt19937_64 rng(seed);
    seeded_shuffle(order, rng);

    SplitSpec split;
    split.ratio = ratio;
    split.seed = seed;
    split.test_ids.insert(order.begin() + n_train_val, order.end());

    std::vector<StudentId> train_val(order.begin(), order.begin() + n_train_val);
    std::sort(train_val.begin(), train_val.end());
    std::mt19937_64 inner(seed + 1);
    seeded_shuffle(train_val, inner);
    split.train_ids.insert(train_val.begin(), train_val.begin() + n_train);
    split.val_ids.insert(train_val.begin() + n_train, train_val.end());
    return split;
}

SplitSpec split_individual_wise(const Dataset& d, double ratio, std::uint64_t seed) {
    return split_individual_wise(d.students(), ratio, seed);
}

json split_to_json(const SplitSpec& s) {
    return {{"ratio", s.ratio}, {"seed", s.seed}, {"train", s.train_ids}, {"val", s.val_ids}, {"test", s.test_ids}};
}

SplitSpec split_from_json(const json& j) {
    SplitSpec s;
    s.ratio = field<double>(j, "ratio", "split");
    s.seed = field<std::uint64_t>(j, "seed", "split");
    s.train_ids = field<std::set<std::string>>(j, "train", "split");
    s.val_ids = field<std::set<std::string>>(j, "val", "split");
    s.test_ids = field<std::set<std::string>>(j, "test", "split");
    for (const auto& id : s.train_ids) {
        if (s.val_ids.contains(id) || s.test_ids.contains(id))
            throw IntegrityError(id, "student appears in more than one split partition");
    }
    for (const auto& id : s.val_ids) {
        if (s.test_ids.contains(id)) throw IntegrityError(id, "student appears in more than one split partition");
    }
    return s;
}

// ---- history -----------------------------------------------------------------------

std::vector<QuestionId> HistoryWindow::future_ids() const {
    std::vector<QuestionId> ids;
    ids.reserve(future.size());
    for (const auto& f : future) ids.push_back(f.question.question_id);
    return ids;
}

HistoryWindow HistoryWindow::without_labels() const {
    HistoryWindow w = *this;
    w.y_future.clear();
    return w;
}

std::vector<CourseSlide> materials_for(const Dataset& d, const QuestionId& question) {
    const auto& q = d.question(question);
    std::vector<CourseSlide> out;
    out.reserve(q.slide_refs.size());
    for (const auto& ref : q.slide_refs) out.push_back(d.slide(ref));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.position < b.position; });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const auto& a, const auto& b) { return a.slide_id == b.slide_id; }),
              out.end());
    return out;
}

HistoryWindow partition_history(const Dataset& d, const StudentId& student, const LectureId& lecture,
                                int n_past) {
    if (n_past < 1) throw InvalidArgument("n_past must be at least 1");
    const auto& rec = d.record(student, lecture);
    if (rec.responses.size() <= static_cast<std::size_t>(n_past)) {
        throw TooShort("record " + student + "/" + lecture + " has " + std::to_string(rec.responses.size()) +
                       " responses, need more than " + std::to_string(n_past));
    }
    HistoryWindow w;
    w.student_id = student;
    w.lecture_id = lecture;
    w.lecture_title = d.lecture(lecture).title;
    for (std::size_t i = 0; i < rec.responses.size(); ++i) {
        const auto& resp = rec.responses[i];
        const auto& q = d.question(resp.question_id);
        if (i < static_cast<std::size_t>(n_past)) {
            w.past.push_back({q, materials_for(d, q.question_id), resp.correct});
        } else {
            w.future.push_back({q, materials_for(d, q.question_id)});
            w.y_future.push_back(resp.correct);
        }
    }
    return w;
}

}  // namespace simulacra
