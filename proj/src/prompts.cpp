#include "simulacra/prompts.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

namespace simulacra {

// Generated from templates/*.txt at configure time.
const std::map<std::string, std::string>& builtin_templates();

MalformedPrediction::MalformedPrediction(std::vector<std::string> missing, std::vector<std::string> conflicting)
    : BackendError([&] {
          std::string msg = "malformed prediction";
          if (!missing.empty()) {
              msg += "; missing:";
              for (const auto& id : missing) msg += " " + id;
          }
          if (!conflicting.empty()) {
              msg += "; conflicting:";
              for (const auto& id : conflicting) msg += " " + id;
          }
          return msg;
      }()),
      missing_(std::move(missing)),
      conflicting_(std::move(conflicting)) {}

// ---- reflection.hpp helpers ---------------------------------------------------------

const PredictionEntry& PredictionSet::at(const QuestionId& id) const {
    for (const auto& e : entries) {
        if (e.question_id == id) return e;
    }
    throw NotFound("prediction for question " + id);
}

std::vector<bool> PredictionSet::as_bools() const {
    std::vector<bool> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.correct);
    return out;
}

std::size_t count_matches(const PredictionSet& predictions, const std::vector<bool>& labels) {
    if (predictions.entries.size() != labels.size())
        throw LengthMismatch(predictions.entries.size(), labels.size());
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) n += predictions.entries[i].correct == labels[i];
    return n;
}

std::string_view to_string(Direction d) noexcept {
    switch (d) {
        case Direction::Initial: return "initial";
        case Direction::DifferentDirection: return "different";
        case Direction::SameDirection: return "same";
    }
    return "initial";
}

std::size_t TirTrace::best_index() const {
    if (iterations.empty()) throw EmptyInput("trace has no iterations");
    std::size_t best = 0;
    for (std::size_t i = 1; i < iterations.size(); ++i) {
        if (iterations[i].matches > iterations[best].matches) best = i;
    }
    return best;
}

// ---- templates -------------------------------------------------------------------------

Templates Templates::defaults() {
    Templates t;
    t.files_ = builtin_templates();
    return t;
}

Templates Templates::load_dir(const std::filesystem::path& dir) {
    Templates t = defaults();
    if (!std::filesystem::is_directory(dir)) throw NotFound("template directory " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        const std::string name = entry.path().stem().string();
        if (!t.files_.contains(name)) throw ParseError("unknown template '" + name + "' in " + dir.string());
        t.files_[name] = read_file(entry.path());
    }
    return t;
}

const std::string& Templates::get(const std::string& name) const {
    auto it = files_.find(name);
    if (it == files_.end()) throw NotFound("template " + name);
    return it->second;
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const auto open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        const auto close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw ParseError("unterminated placeholder in template");
        out.append(tpl.substr(pos, open - pos));
        const std::string name(tpl.substr(open + 2, close - open - 2));
        auto it = values.find(name);
        if (it == values.end()) throw ParseError("template placeholder '" + name + "' has no value");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

std::string label_token(const QuestionId& id) { return "Student's answer to Question " + id + ":"; }

std::string label_line(const QuestionId& id, bool correct) {
    return label_token(id) + (correct ? " Correct" : " Incorrect");
}

// ---- predictions ------------------------------------------------------------------------

namespace {

std::string one_line(std::string_view s) {
    std::string out(s);
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

const std::regex& prediction_line_regex() {
    static const std::regex re(
        R"(Question\s+([^\s:]+)\s*:\s*(Correct|Incorrect|Wrong)\b(?:\s*[,;.]?\s*Reason\s*:\s*(.*))?)",
        std::regex::icase | std::regex::ECMAScript);
    return re;
}

}  // namespace

std::string render_predictions(const PredictionSet& predictions) {
    std::string out;
    for (const auto& e : predictions.entries) {
        out += "Question " + e.question_id + ": " + (e.correct ? "Correct" : "Incorrect");
        if (e.reason) out += ", Reason: " + one_line(*e.reason);
        out += "\n";
    }
    return out;
}

PredictionSet parse_prediction(std::string_view text, std::span<const QuestionId> expected_ids) {
    if (expected_ids.empty()) throw InvalidArgument("parse_prediction needs at least one expected id");

    std::map<std::string, QuestionId> by_lower;
    for (const auto& id : expected_ids) by_lower.emplace(lower(id), id);

    std::map<QuestionId, PredictionEntry> found;
    std::set<QuestionId> conflicting;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(start, end - start));
        line.erase(std::remove(line.begin(), line.end(), '*'), line.end());
        std::smatch m;
        if (std::regex_search(line, m, prediction_line_regex())) {
            auto it = by_lower.find(lower(m[1].str()));
            if (it != by_lower.end()) {
                PredictionEntry entry{it->second, lower(m[2].str()) == "correct", std::nullopt};
                if (m[3].matched) {
                    std::string reason = trim(m[3].str());
                    if (!reason.empty()) entry.reason = std::move(reason);
                }
                auto [pos, inserted] = found.emplace(entry.question_id, entry);
                if (!inserted && pos->second.correct != entry.correct) conflicting.insert(entry.question_id);
            }
        }
        if (end == text.size()) break;
        start = end + 1;
    }

    std::vector<std::string> missing;
    PredictionSet out;
    for (const auto& id : expected_ids) {
        auto it = found.find(id);
        if (it == found.end()) {
            missing.push_back(id);
        } else if (!conflicting.contains(id)) {
            out.entries.push_back(it->second);
        }
    }
    if (!missing.empty() || !conflicting.empty())
        throw MalformedPrediction(std::move(missing), {conflicting.begin(), conflicting.end()});
    return out;
}

// ---- prompt kit ----------------------------------------------------------------------------

ChatRequest Prompt::to_request(const std::string& model_id, double temperature, int max_tokens,
                               std::optional<std::uint64_t> seed_hint) const {
    return ChatRequest{model_id, messages, temperature, max_tokens, seed_hint};
}

PromptKit::PromptKit(Templates templates, std::size_t budget) : templates_(std::move(templates)), budget_(budget) {}

Prompt PromptKit::finish(std::vector<ChatMessage> messages) const {
    Prompt p;
    for (const auto& m : messages) p.estimated_size += m.content.size();
    p.messages = std::move(messages);
    if (p.estimated_size > budget_) throw PromptTooLarge(p.estimated_size, budget_);
    return p;
}

std::string PromptKit::render_materials(const std::vector<CourseSlide>& slides) const {
    std::string out;
    for (const auto& s : slides)
        out += render_template(templates_.get("material"), {{"slide_id", s.slide_id}, {"content", one_line(s.content)}});
    return out;
}

std::string PromptKit::render_past(const HistoryWindow& w) const {
    std::string out;
    for (const auto& p : w.past) {
        out += render_template(templates_.get("past_question"),
                               {{"question_id", p.question.question_id},
                                {"question_text", p.question.text},
                                {"materials", render_materials(p.materials)},
                                {"label_line", label_line(p.question.question_id, p.correct)}});
    }
    return out;
}

std::string PromptKit::render_future(const HistoryWindow& w) const {
    std::string out;
    for (const auto& f : w.future) {
        out += render_template(templates_.get("future_question"), {{"question_id", f.question.question_id},
                                                                    {"question_text", f.question.text},
                                                                    {"materials", render_materials(f.materials)}});
    }
    return out;
}

std::string PromptKit::render_exemplars(std::span<const std::string> exemplars) const {
    if (exemplars.empty()) return {};
    std::string out = templates_.get("exemplars_header");
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        out += render_template(templates_.get("exemplar"),
                               {{"index", std::to_string(i + 1)}, {"reflection", exemplars[i]}});
    }
    return out;
}

std::string PromptKit::render_history_body(const HistoryWindow& w) const {
    return render_template(templates_.get("history"), {{"lecture_title", w.lecture_title},
                                                       {"past_questions", render_past(w)},
                                                       {"future_questions", render_future(w)}});
}

std::string PromptKit::render_prediction_body(const HistoryWindow& w, const std::string& preamble,
                                              const std::string& guidance) const {
    return render_template(templates_.get("prediction"), {{"preamble", preamble},
                                                          {"lecture_title", w.lecture_title},
                                                          {"past_questions", render_past(w)},
                                                          {"future_questions", render_future(w)},
                                                          {"guidance", guidance},
                                                          {"format_instruction", templates_.get("format_instruction")}});
}

Prompt PromptKit::build_standard_prompt(const HistoryWindow& w, std::span<const std::string> exemplars) const {
    return finish({{Role::System, templates_.get("system_simulator")},
                   {Role::User, render_prediction_body(w, render_exemplars(exemplars), "")}});
}

Prompt PromptKit::build_cot_prompt(const HistoryWindow& w, std::span<const std::string> exemplars) const {
    return finish({{Role::System, templates_.get("system_simulator")},
                   {Role::User, render_prediction_body(w, render_exemplars(exemplars), templates_.get("cot_guidance"))}});
}

Prompt PromptKit::build_novice_prompt(const HistoryWindow& w, const std::string& reflection) const {
    const std::string preamble = render_template(templates_.get("novice_reflection"), {{"reflection", reflection}});
    return finish({{Role::System, templates_.get("system_simulator")},
                   {Role::User, render_prediction_body(w, preamble, "")}});
}

Prompt PromptKit::build_reflection_prompt(const HistoryWindow& w, const TirTrace& prior, Direction direction) const {
    if (w.y_future.size() != w.future.size())
        throw InvalidArgument("reflection prompt needs ground truth for every future question");
    if (direction != Direction::Initial && prior.iterations.empty())
        throw InvalidArgument("a follow-up reflection needs at least one prior iteration");

    std::string ground_truth;
    for (std::size_t i = 0; i < w.future.size(); ++i)
        ground_truth += label_line(w.future[i].question.question_id, w.y_future[i]) + "\n";

    std::vector<ChatMessage> messages{
        {Role::System, templates_.get("system_reflective")},
        {Role::User, render_prediction_body(w, "", "")},
        {Role::Assistant, render_predictions(prior.initial_prediction)},
        {Role::User, render_template(templates_.get("reflection_request"), {{"ground_truth", ground_truth}})},
    };
    if (direction == Direction::Initial) return finish(std::move(messages));

    const auto& last = prior.iterations.back();
    std::string wrong;
    for (std::size_t i = 0; i < w.future.size(); ++i) {
        const auto& id = w.future[i].question.question_id;
        if (last.novice_prediction.at(id).correct != w.y_future[i]) wrong += (wrong.empty() ? "" : ", ") + id;
    }
    const std::string tpl = direction == Direction::DifferentDirection ? "feedback_different" : "feedback_same";
    messages.push_back({Role::Assistant, last.reflection.text});
    messages.push_back({Role::User, render_template(templates_.get(tpl),
                                                    {{"accuracy", fmt::format("{:.1f}%", 100.0 * last.accuracy)},
                                                     {"initial_accuracy", fmt::format("{:.1f}%", 100.0 * prior.acc_0)},
                                                     {"wrong_ids", wrong.empty() ? "none" : wrong},
                                                     {"novice_predictions", render_predictions(last.novice_prediction)}})});
    return finish(std::move(messages));
}

Prompt PromptKit::build_transfer_prompt(std::span<const ReflectionEntry> exemplars, const HistoryWindow& w) const {
    if (exemplars.empty()) throw EmptyExemplars("transfer reflection needs at least one exemplar");
    std::vector<std::string> texts;
    for (const auto& e : exemplars) {
        if (e.lecture_id != w.lecture_id) {
            throw InvalidArgument("exemplar of " + e.student_id + " is from lecture " + e.lecture_id +
                                 ", expected " + w.lecture_id);
        }
        texts.push_back(e.reflection);
    }
    std::string blocks;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        blocks += render_template(templates_.get("exemplar"), {{"index", std::to_string(i + 1)}, {"reflection", texts[i]}});
    }
    return finish({{Role::System, templates_.get("system_reflective")},
                   {Role::User, render_template(templates_.get("transfer"),
                                                {{"exemplars", blocks}, {"history", render_history_body(w)}})}});
}

std::string PromptKit::format_reminder(const MalformedPrediction& error) const {
    std::string ids;
    for (const auto& id : error.missing_ids()) ids += (ids.empty() ? "" : ", ") + id;
    for (const auto& id : error.conflicting_ids()) ids += (ids.empty() ? "" : ", ") + id;
    return render_template(templates_.get("format_reminder"), {{"ids", ids}});
}

}  // namespace simulacra
