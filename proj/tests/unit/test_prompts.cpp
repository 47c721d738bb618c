#include <doctest.h>

#include "scripted_tir.hpp"
#include "simulacra/error.hpp"
#include "simulacra/prompts.hpp"
#include "simulacra/util.hpp"

#include <filesystem>
#include <random>

using namespace simulacra;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

std::string joined(const Prompt& p) {
    std::string out;
    for (const auto& m : p.messages) out += m.content + "\n";
    return out;
}

}  // namespace

TEST_SUITE("prompts") {
    TEST_CASE("render_template substitutes and rejects missing values") {
        CHECK(render_template("a {{x}} b {{y}} {{x}}", {{"x", "1"}, {"y", "2"}}) == "a 1 b 2 1");
        CHECK_THROWS_AS(render_template("{{missing}}", {}), ParseError);
        // Values are inserted verbatim, never re-expanded.
        CHECK(render_template("{{x}}", {{"x", "{{y}}"}}) == "{{y}}");
    }

    TEST_CASE("default templates are complete") {
        const auto t = Templates::defaults();
        for (const char* name : {"system_simulator", "system_reflective", "prediction", "history", "past_question",
                                 "future_question", "material", "exemplars_header", "exemplar", "novice_reflection",
                                 "cot_guidance", "format_instruction", "reflection_request", "feedback_different",
                                 "feedback_same", "transfer", "format_reminder"}) {
            CHECK_MESSAGE(!t.get(name).empty(), name);
        }
    }

    TEST_CASE("template directory overrides and rejects unknown names") {
        const auto dir = std::filesystem::temp_directory_path() / "simulacra_tpl_test";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        write_file(dir / "system_simulator.txt", "Custom system.");
        const auto t = Templates::load_dir(dir);
        CHECK(t.get("system_simulator") == "Custom system.");
        CHECK(t.get("transfer") == Templates::defaults().get("transfer"));
        write_file(dir / "bogus.txt", "x");
        CHECK_THROWS_AS(Templates::load_dir(dir), DataError);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("parse: the documented line format with reasons") {
        const std::vector<QuestionId> ids{"7", "8", "9"};
        const auto p = parse_prediction(
            "Here is my prediction.\nQuestion 7: Correct, Reason: the slide covers it\n"
            "**Question 8**: Wrong\nquestion 9 : incorrect.\n",
            ids);
        REQUIRE(p.size() == 3);
        CHECK(p.entries[0].correct);
        CHECK(p.entries[0].reason == std::optional<std::string>("the slide covers it"));
        CHECK_FALSE(p.entries[1].correct);
        CHECK_FALSE(p.entries[2].correct);
        CHECK(p.as_bools() == std::vector<bool>{true, false, false});
    }

    TEST_CASE("parse: all Correct") {
        const std::vector<QuestionId> ids{"a", "b"};
        const auto p = parse_prediction("Question a: Correct\nQuestion b: Correct", ids);
        CHECK(p.as_bools() == std::vector<bool>{true, true});
    }

    TEST_CASE("parse: ids are not confused by prefixes") {
        const std::vector<QuestionId> ids{"q1", "q10"};
        const auto p = parse_prediction("Question q10: Incorrect\nQuestion q1: Correct\n", ids);
        CHECK(p.at("q1").correct);
        CHECK_FALSE(p.at("q10").correct);
        CHECK(p.entries[0].question_id == "q1");
    }

    TEST_CASE("parse: missing and conflicting ids") {
        const std::vector<QuestionId> ids{"1", "2", "3"};
        try {
            parse_prediction("Question 1: Correct\nQuestion 3: Correct\nQuestion 3: Incorrect\n", ids);
            FAIL("expected MalformedPrediction");
        } catch (const MalformedPrediction& e) {
            CHECK(e.missing_ids() == std::vector<std::string>{"2"});
            CHECK(e.conflicting_ids() == std::vector<std::string>{"3"});
        }
        // A repeated consistent line is fine; an unexpected id is ignored.
        CHECK_NOTHROW(parse_prediction("Question 1: Correct\nQuestion 1: Correct\nQuestion 4: Correct\n"
                                       "Question 2: Correct\nQuestion 3: Correct\n",
                                       ids));
    }

    TEST_CASE("render then parse is the identity") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 200; ++trial) {
            PredictionSet p;
            std::vector<QuestionId> ids;
            const int n = 1 + static_cast<int>(rng() % 9);
            for (int i = 0; i < n; ++i) {
                const QuestionId id = "Q" + std::to_string(trial) + "_" + std::to_string(i);
                ids.push_back(id);
                std::optional<std::string> reason;
                if (rng() % 2) reason = "because line " + std::to_string(i) + "\nhas a break";
                p.entries.push_back({id, rng() % 2 == 0, reason});
            }
            const auto back = parse_prediction(render_predictions(p), ids);
            REQUIRE(back.size() == p.size());
            for (int i = 0; i < n; ++i) {
                CHECK(back.entries[static_cast<std::size_t>(i)].correct == p.entries[static_cast<std::size_t>(i)].correct);
                CHECK(back.entries[static_cast<std::size_t>(i)].reason.has_value() ==
                      p.entries[static_cast<std::size_t>(i)].reason.has_value());
            }
        }
    }

    TEST_CASE("standard prompt: past labels only, no reflections") {
        const auto w = fixtures::small_window(3);
        const PromptKit kit;
        const auto text = joined(kit.build_standard_prompt(w));
        CHECK(count(text, "Lecture: Lecture L1") == 1);
        for (const auto& p : w.past) CHECK(count(text, label_token(p.question.question_id)) == 1);
        for (const auto& id : w.future_ids()) CHECK(count(text, label_token(id)) == 0);
        CHECK(count(text, "Reflection ") == 0);
        CHECK(count(text, "Think step by step") == 0);
        CHECK(kit.build_standard_prompt(w).messages.front().role == Role::System);
    }

    TEST_CASE("standard prompt with M exemplars shows M reflection blocks") {
        const auto w = fixtures::small_window(3);
        const PromptKit kit;
        const std::vector<std::string> ex{"r one", "r two", "r three", "r four"};
        const auto text = joined(kit.build_standard_prompt(w, ex));
        CHECK(count(text, "(student in the same course)") == 4);
        for (const auto& r : ex) CHECK(count(text, r) == 1);
    }

    TEST_CASE("cot prompt carries the three guidance steps") {
        const auto w = fixtures::small_window(2);
        const auto text = joined(PromptKit().build_cot_prompt(w));
        CHECK(count(text, "Analyze the student's past performance") == 1);
        CHECK(count(text, "Review the course concepts") == 1);
        CHECK(count(text, "Predict the student's performance in future questions") == 1);
    }

    TEST_CASE("reflection prompt shows ground truth; follow-ups carry the direction") {
        const auto w = fixtures::small_window(3);
        const PromptKit kit;
        TirTrace trace;
        trace.initial_prediction = parse_prediction(fixtures::prediction_text(w, 1), w.future_ids());
        trace.acc_0 = 1.0 / 3.0;
        const auto first = kit.build_reflection_prompt(w, trace, Direction::Initial);
        const auto text = joined(first);
        for (const auto& id : w.future_ids()) CHECK(count(text, label_token(id)) == 1);
        CHECK(first.messages.size() == 4);
        CHECK(first.messages[2].role == Role::Assistant);

        TirIteration it;
        it.reflection = {"first reflection", 1};
        it.novice_prediction = parse_prediction(fixtures::prediction_text(w, 0), w.future_ids());
        trace.iterations.push_back(it);
        const auto diff = joined(kit.build_reflection_prompt(w, trace, Direction::DifferentDirection));
        CHECK(count(diff, "another direction") == 1);
        CHECK(count(diff, "first reflection") == 1);
        const auto same = joined(kit.build_reflection_prompt(w, trace, Direction::SameDirection));
        CHECK(count(same, "indeed improved") == 1);
        CHECK(count(same, "similar direction") == 1);

        CHECK_THROWS_AS(kit.build_reflection_prompt(w.without_labels(), trace, Direction::Initial), InvalidArgument);
    }

    TEST_CASE("transfer prompt") {
        const auto w = fixtures::small_window(3);
        const PromptKit kit;
        std::vector<ReflectionEntry> ex{{"L1", "t1", "first exemplar", 1, 0.5, true, 1},
                                        {"L1", "t2", "second exemplar", 1, 0.5, true, 2}};
        const auto text = joined(kit.build_transfer_prompt(ex, w.without_labels()));
        CHECK(count(text, "first exemplar") == 1);
        CHECK(count(text, "second exemplar") == 1);
        CHECK(count(text, "My new reflection for the new student") == 1);
        for (const auto& id : w.future_ids()) CHECK(count(text, label_token(id)) == 0);
        CHECK_THROWS_AS(kit.build_transfer_prompt({}, w), EmptyExemplars);
        ex[1].lecture_id = "L9";
        CHECK_THROWS_AS(kit.build_transfer_prompt(ex, w), InvalidArgument);
    }

    TEST_CASE("budget is enforced") {
        const auto w = fixtures::small_window(3);
        const PromptKit small(Templates::defaults(), 200);
        try {
            small.build_standard_prompt(w);
            FAIL("expected PromptTooLarge");
        } catch (const PromptTooLarge& e) {
            CHECK(e.budget() == 200);
            CHECK(e.size() > 200);
        }
        const PromptKit kit;
        CHECK(kit.build_standard_prompt(w).estimated_size <= kit.budget());
    }

    TEST_CASE("format reminder names the problem ids") {
        const PromptKit kit;
        const auto text = kit.format_reminder(MalformedPrediction({"q2"}, {"q5"}));
        CHECK(count(text, "q2") == 1);
        CHECK(count(text, "q5") == 1);
    }

    TEST_CASE("prompt to request") {
        const auto w = fixtures::small_window(2);
        const auto req = PromptKit().build_standard_prompt(w).to_request("model-x", 0.0, 256, 42);
        CHECK(req.model_id == "model-x");
        CHECK(req.max_tokens == 256);
        CHECK(req.seed_hint == std::optional<std::uint64_t>(42));
        CHECK_NOTHROW(req.validate());
    }
}
