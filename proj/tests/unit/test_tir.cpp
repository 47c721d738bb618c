#include <doctest.h>

#include "planted_cohort.hpp"
#include "scripted_tir.hpp"
#include "simulacra/error.hpp"
#include "simulacra/tir.hpp"
#include "simulacra/util.hpp"

#include <set>

using namespace simulacra;
using fixtures::CallKind;

namespace {

struct Harness {
    fixtures::ScriptedTirBackend backend;
    PromptKit prompts;
    AgentContext ctx() { return {&backend, &prompts, {}}; }
};

}  // namespace

TEST_SUITE("tir") {
    TEST_CASE("config validation and json") {
        TirConfig c;
        CHECK_NOTHROW(c.validate());
        c.max_iterations = 0;
        CHECK_THROWS_AS(c.validate(), InvalidArgument);
        c = TirConfig{};
        c.seed = 99;
        c.workers = 8;
        const auto j = c.to_json();
        CHECK_FALSE(j.contains("workers"));
        const auto back = TirConfig::from_json(j);
        CHECK(back.seed == 99);
        CHECK(back.max_iterations == c.max_iterations);
    }

    TEST_CASE("initial prediction never sees labels") {
        const auto w = fixtures::small_window(4);
        Harness h{fixtures::ScriptedTirBackend(w, 4, {}), PromptKit()};
        const auto p = initial_prediction(w, h.ctx());
        CHECK(p.as_bools() == w.y_future);
        const auto log = h.backend.transcript();
        REQUIRE(log.size() == 1);
        for (const auto& id : w.future_ids()) {
            for (const auto& m : log[0].request.messages) CHECK(m.content.find(label_token(id)) == std::string::npos);
        }
    }

    TEST_CASE("malformed reply is repaired once in the same conversation") {
        const auto w = fixtures::small_window(2);
        MockScript s;
        s.rules.push_back({{"could not be parsed"}, std::nullopt, fixtures::prediction_text(w, 2), std::nullopt});
        s.fallback = "I think the student will do fine.";
        MockBackend m(s);
        const PromptKit kit;
        const AgentContext ctx{&m, &kit, {}};
        const auto p = initial_prediction(w, ctx);
        CHECK(p.as_bools() == w.y_future);
        const auto log = m.transcript();
        REQUIRE(log.size() == 2);
        CHECK(log[1].request.messages.size() == log[0].request.messages.size() + 2);
        CHECK(log[1].request.messages[log[0].request.messages.size()].role == Role::Assistant);
    }

    TEST_CASE("malformed twice fails") {
        const auto w = fixtures::small_window(2);
        MockScript s;
        s.fallback = "no idea";
        MockBackend m(s);
        const PromptKit kit;
        CHECK_THROWS_AS(initial_prediction(w, {&m, &kit, {}}), MalformedPrediction);
        CHECK(m.transcript().size() == 2);
    }

    TEST_CASE("perfect first novice stops after one iteration") {
        const auto w = fixtures::small_window(4);
        Harness h{fixtures::ScriptedTirBackend(w, 2, {4}), PromptKit()};
        TirConfig cfg;
        const auto r = run_tir(w, h.ctx(), cfg);
        CHECK(r.trace.iterations.size() == 1);
        CHECK(r.entry.acc_best == 1.0);
        CHECK(r.entry.acc_0 == 0.5);
        CHECK(r.entry.improved);
        CHECK(r.entry.reflection == "REFLECTION-1");
        CHECK(r.entry.seed_used == derive_seed(cfg.seed, w.student_id, w.lecture_id));
        CHECK(h.backend.calls == std::vector<CallKind>{CallKind::Initial, CallKind::Reflection, CallKind::Novice});
    }

    TEST_CASE("no improvement runs to max_iterations and keeps r_best anyway") {
        const auto w = fixtures::small_window(4);
        Harness h{fixtures::ScriptedTirBackend(w, 3, {1, 2, 2, 1, 0}), PromptKit()};
        const auto r = run_tir(w, h.ctx(), TirConfig{});
        CHECK(r.trace.iterations.size() == 5);
        CHECK_FALSE(r.entry.improved);
        CHECK(r.entry.reflection == "REFLECTION-2");
        CHECK(r.entry.acc_best == 0.5);
        for (const auto& it : r.trace.iterations) CHECK(it.feedback_direction == Direction::DifferentDirection);
        CHECK(h.backend.feedback_seen ==
              std::vector<std::string>{"", "another direction", "another direction", "another direction",
                                       "another direction"});
    }

    TEST_CASE("equal accuracy counts as the same direction") {
        const auto w = fixtures::small_window(4);
        Harness h{fixtures::ScriptedTirBackend(w, 2, {2, 4}), PromptKit()};
        const auto r = run_tir(w, h.ctx(), TirConfig{});
        REQUIRE(r.trace.iterations.size() == 2);
        CHECK(r.trace.iterations[0].feedback_direction == Direction::SameDirection);
        CHECK(h.backend.feedback_seen[1] == "indeed improved");
    }

    TEST_CASE("novice sees the reflection just written") {
        const auto w = fixtures::small_window(4);
        Harness h{fixtures::ScriptedTirBackend(w, 0, {1, 1, 4}), PromptKit()};
        run_tir(w, h.ctx(), TirConfig{});
        CHECK(h.backend.novice_reflections ==
              std::vector<std::string>{"REFLECTION-1", "REFLECTION-2", "REFLECTION-3"});
    }

    TEST_CASE("reflection db round trip and ordering") {
        ReflectionDB db(DbMetadata{"abc", TirConfig{}.to_json()});
        db.add({"L2", "s2", "r", 0.5, 0.25, true, 7});
        db.add({"L1", "s3", "multi\nline \"quoted\"", 1.0, 0.0, true, 8});
        db.add({"L1", "s1", "r", 0.0, 0.0, false, 9});
        CHECK_THROWS_AS(db.add({"L1", "s1", "again", 0.0, 0.0, false, 9}), IntegrityError);
        CHECK(db.size() == 3);
        REQUIRE(db.lecture("L1").size() == 2);
        CHECK(db.lecture("L1")[0].student_id == "s1");
        CHECK(db.lecture("L9").empty());
        const auto text = db.serialize();
        CHECK(text.rfind("{\"config\":", 0) == 0);
        CHECK(text.find("\"schema\":\"tir-db/1\"") != std::string::npos);
        const auto back = ReflectionDB::parse(text);
        CHECK(back == db);
        CHECK(back.serialize() == text);
        CHECK_THROWS_AS(ReflectionDB::parse("{\"schema\":\"other\"}\n"), ParseError);
    }

    TEST_CASE("retrieve_exemplars") {
        ReflectionDB db;
        for (int i = 0; i < 10; ++i) db.add({"L1", "s" + std::to_string(i), "r" + std::to_string(i), 1, 0, i < 6, 0});
        const auto a = retrieve_exemplars(db, "L1", 4, 123);
        CHECK(a.size() == 4);
        CHECK(a == retrieve_exemplars(db, "L1", 4, 123));
        for (const auto& e : a) CHECK(e.improved);
        std::set<std::string> distinct;
        for (const auto& e : a) distinct.insert(e.student_id);
        CHECK(distinct.size() == 4);
        // Fewer than M improved entries: sample from everything.
        const auto b = retrieve_exemplars(db, "L1", 8, 5);
        CHECK(b.size() == 8);
        CHECK(retrieve_exemplars(db, "L1", 50, 5).size() == 10);
        CHECK(retrieve_exemplars(db, "L1", 4, 5, false).size() == 4);
        CHECK_THROWS_AS(retrieve_exemplars(db, "L2", 4, 5), NoExemplars);
        bool differs = false;
        for (std::uint64_t s = 0; s < 20 && !differs; ++s) differs = retrieve_exemplars(db, "L1", 4, s) != a;
        CHECK(differs);
    }

    TEST_CASE("build_reflection_db: same bytes for 1 and 4 workers") {
        const auto d = fixtures::planted_dataset();
        const auto split = split_individual_wise(d, 0.8, 3);
        const auto script = fixtures::planted_script(d);
        const PromptKit kit;
        std::string bytes[2];
        int k = 0;
        for (int workers : {1, 4}) {
            MockBackend m(script);
            TirConfig cfg;
            cfg.seed = 3;
            cfg.workers = workers;
            const auto report = build_reflection_db(d, split, {&m, &kit, {}}, cfg);
            CHECK(report.failed.empty());
            CHECK(report.db.size() == 2 * split.train_ids.size());
            CHECK(report.db.metadata().dataset_hash == dataset_hash(d));
            bytes[k++] = report.db.serialize();
        }
        CHECK(bytes[0] == bytes[1]);
    }

    TEST_CASE("build_reflection_db: only train students, empty train set fails") {
        const auto d = fixtures::planted_dataset();
        auto split = split_individual_wise(d, 0.8, 3);
        MockBackend m(fixtures::planted_script(d));
        const PromptKit kit;
        const auto report = build_reflection_db(d, split, {&m, &kit, {}}, TirConfig{});
        for (const auto& [lecture, entries] : report.db.by_lecture())
            for (const auto& e : entries) CHECK(split.train_ids.contains(e.student_id));
        split.train_ids.clear();
        CHECK_THROWS_AS(build_reflection_db(d, split, {&m, &kit, {}}, TirConfig{}), EmptyInput);
    }

    TEST_CASE("transfer_reflection returns the reply") {
        const auto d = fixtures::planted_dataset();
        MockBackend m(fixtures::planted_script(d));
        const PromptKit kit;
        const auto w = partition_history(d, "s01", "L1");
        const std::vector<ReflectionEntry> ex{{"L1", "s02", "some reflection", 1, 0.5, true, 1}};
        const auto r = transfer_reflection(ex, w, {&m, &kit, {}});
        CHECK(r.text.rfind("My new reflection for the new student", 0) == 0);
    }
}
