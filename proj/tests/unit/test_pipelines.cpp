#include <doctest.h>

#include "leaky_pipeline.hpp"
#include "planted_cohort.hpp"
#include "simulacra/error.hpp"
#include "simulacra/metrics.hpp"
#include "simulacra/pipelines.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <set>
#include <thread>

using namespace simulacra;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

struct Planted {
    Dataset d = fixtures::planted_dataset();
    SplitSpec split = split_individual_wise(d, 0.8, 7);
    MockBackend backend{fixtures::planted_script(d), false};
    PromptKit kit;
    AgentContext ctx{&backend, &kit, {}};
    std::vector<SimulationTarget> targets = test_targets(d, split);

    ReflectionDB db(int workers = 1) {
        TirConfig cfg;
        cfg.seed = 7;
        cfg.workers = workers;
        return build_reflection_db(d, split, ctx, cfg).db;
    }
};

double accuracy(const SimulationReport& r) { return accuracy_f1(r.results).accuracy; }

std::size_t transfer_calls(const TargetTranscript& t) {
    std::size_t n = 0;
    for (const auto& e : t.exchanges) n += count(render_for_matching(e.request), "new reflection for the new student") > 0;
    return n;
}

class FakeClassifierService {
public:
    explicit FakeClassifierService(int status) : status_(status) {
        server_.Post("/api/classify", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            body_ = req.body;
            res.status = status_;
            res.set_content(R"({"correct":true})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeClassifierService() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/api"; }
    std::size_t hits() const { return hits_; }
    std::string body() const { return body_; }

private:
    int status_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<std::size_t> hits_{0};
    std::string body_;
};

}  // namespace

TEST_SUITE("pipelines") {
    TEST_CASE("test targets cover every record of the test students") {
        Planted p;
        CHECK(p.targets.size() == 2 * p.split.test_ids.size());
        for (const auto& t : p.targets) CHECK(p.split.test_ids.contains(t.student_id));
    }

    TEST_CASE("standard without TIR: no reflection blocks, no leaks, rule not found") {
        Planted p;
        const auto r = simulate_prompting(p.d, p.targets, p.ctx, {});
        CHECK(r.results.size() == p.targets.size());
        CHECK(r.failed.empty());
        for (const auto& t : r.transcripts) {
            REQUIRE(t.exchanges.size() == 1);
            const auto text = render_for_matching(t.exchanges[0].request);
            CHECK(count(text, "(student in the same course)") == 0);
        }
        CHECK(accuracy(r) <= 0.6);
    }

    TEST_CASE("standard and CoT with TIR: four exemplars each, rule transferred") {
        Planted p;
        const auto db = p.db();
        for (auto variant : {Variant::Standard, Variant::CoT}) {
            SimulationOptions opt;
            opt.variant = variant;
            opt.tir = true;
            opt.db = &db;
            opt.config.seed = 7;
            const auto r = simulate_prompting(p.d, p.targets, p.ctx, opt);
            for (const auto& t : r.transcripts) {
                const auto text = render_for_matching(t.exchanges.at(0).request);
                CHECK(count(text, "(student in the same course)") == 4);
            }
            CHECK(accuracy(r) == 1.0);
            for (const auto& res : r.results) {
                CHECK(res.variant == variant);
                CHECK(res.tir);
            }
        }
    }

    TEST_CASE("results do not depend on the worker count") {
        Planted p;
        const auto db1 = p.db(1);
        const auto db4 = p.db(4);
        CHECK(db1.serialize() == db4.serialize());
        std::string csv[2];
        int i = 0;
        for (int workers : {1, 4}) {
            SimulationOptions opt;
            opt.tir = true;
            opt.db = &db1;
            opt.config.workers = workers;
            csv[i++] = results_to_csv(simulate_prompting(p.d, p.targets, p.ctx, opt).results);
        }
        CHECK(csv[0] == csv[1]);
    }

    TEST_CASE("option errors") {
        Planted p;
        SimulationOptions opt;
        opt.tir = true;
        CHECK_THROWS_AS(simulate_prompting(p.d, p.targets, p.ctx, opt), NotFound);
        opt.tir = false;
        opt.variant = Variant::Classifier;
        CHECK_THROWS_AS(simulate_prompting(p.d, p.targets, p.ctx, opt), InvalidArgument);
    }

    TEST_CASE("short records are skipped; nothing eligible is an error") {
        Planted p;
        auto records = p.d.records();
        records[0].responses.resize(kDefaultPastCount);
        const Dataset d(p.d.students(), p.d.lectures(), p.d.slides(), p.d.questions(), records);
        SimulationOptions opt;
        const std::vector<SimulationTarget> mixed{{records[0].student_id, records[0].lecture_id},
                                                  {records[1].student_id, records[1].lecture_id}};
        const auto r = simulate_prompting(d, mixed, p.ctx, opt);
        CHECK(r.results.size() == 1);
        CHECK(r.skipped.size() == 1);
        opt.config.n_past = fixtures::kPlantedQuestions;
        CHECK_THROWS_AS(simulate_prompting(d, mixed, p.ctx, opt), EmptyInput);
    }

    TEST_CASE("leak scanner catches a leaky pipeline and a leaky template") {
        Planted p;
        const auto run = fixtures::leaky_simulate(p.d, p.targets, p.ctx);
        REQUIRE(run.transcripts.size() == p.targets.size());
        for (std::size_t i = 0; i < run.transcripts.size(); ++i) {
            const auto hits = find_label_leaks(run.transcripts[i].exchanges, run.future_ids[i]);
            CHECK(hits.size() == run.future_ids[i].size());
            // The leak is in the reflection request, not the blind initial call.
            for (const auto& h : hits) CHECK(h.exchange == 1);
        }
        const PromptKit leaky(fixtures::leaky_templates());
        const AgentContext ctx{&p.backend, &leaky, {}};
        CHECK_THROWS_AS(simulate_prompting(p.d, p.targets, ctx, {}), LabelLeak);
    }

    TEST_CASE("featurize") {
        const auto d = fixtures::planted_dataset();
        const auto& q = d.question("L1-Q07");
        const auto bare = featurize(q, true, "");
        CHECK(bare.front() == std::make_pair(kInitialBitIndex, 1.0));
        CHECK(featurize(q, false, "").front().second == -1.0);
        CHECK(bare == featurize(q, true, ""));
        const auto with = featurize(q, true, "The student answers alpha questions.");
        CHECK(with.size() > bare.size());
        double norm = 0;
        for (std::size_t i = 1; i < bare.size(); ++i) {
            CHECK(bare[i].first > 0);
            CHECK(bare[i].first < kFeatureBuckets);
            CHECK(bare[i - 1].first < bare[i].first);
            norm += bare[i].second * bare[i].second;
        }
        CHECK(norm == doctest::Approx(1.0));
        // Distinct questions of the corpus never collide entirely.
        std::set<SparseVector> seen;
        for (const auto& [id, item] : d.questions()) CHECK(seen.insert(featurize(item, true, "")).second);
    }

    TEST_CASE("reference classifier") {
        std::vector<ClassifierExample> ex;
        QuestionItem q{"q", "L", 0, "", {"s"}, {}};
        for (int i = 0; i < 20; ++i) {
            const bool y = i % 2 == 0;
            q.text = (y ? "easy topic " : "hard topic ") + std::to_string(i);
            ex.push_back({featurize(q, y, ""), y});
        }
        const auto c = ReferenceClassifier::train(ex, {10, 0.1, 3});
        for (const auto& e : ex) CHECK(c.classify(e.features) == e.label);
        const auto again = ReferenceClassifier::train(ex, {10, 0.1, 3});
        CHECK(again.weights() == c.weights());
        CHECK(again.bias() == c.bias());

        auto same = ex;
        for (auto& e : same) e.label = true;
        CHECK_THROWS_AS(ReferenceClassifier::train(same), DegenerateLabels);
        CHECK_THROWS_AS(ReferenceClassifier::train(std::span<const ClassifierExample>(ex.data(), 1)),
                        DegenerateLabels);
        CHECK_THROWS_AS(ReferenceClassifier::train(ex, {0, 0.1, 3}), InvalidArgument);
    }

    TEST_CASE("classifier path: one transfer call per target with TIR, none without") {
        Planted p;
        const auto db = p.db();
        TirConfig cfg;
        cfg.seed = 7;
        const auto examples = build_classifier_examples(p.d, p.split, &db, p.ctx, cfg);
        CHECK(examples.size() == 2 * p.split.train_ids.size() * (fixtures::kPlantedQuestions - kDefaultPastCount));
        const auto clf = ReferenceClassifier::train(examples, {10, 0.1, 7});

        SimulationOptions opt;
        opt.tir = true;
        opt.db = &db;
        opt.config = cfg;
        const auto with = simulate_classifier(p.d, p.targets, p.ctx, clf, opt);
        for (const auto& t : with.transcripts) {
            CHECK(t.exchanges.size() == 2);
            CHECK(transfer_calls(t) == 1);
        }
        CHECK(accuracy(with) >= 0.95);
        for (const auto& r : with.results) CHECK(r.variant == Variant::Classifier);

        opt.tir = false;
        const auto without = simulate_classifier(p.d, p.targets, p.ctx, clf, opt);
        for (const auto& t : without.transcripts) {
            CHECK(t.exchanges.size() == 1);
            CHECK(transfer_calls(t) == 0);
        }
    }

    TEST_CASE("http classifier") {
        const SparseVector x{{0, 1.0}, {17, 0.5}};
        {
            FakeClassifierService svc(200);
            HttpClassifier c(svc.url(), 5);
            CHECK(c.classify(x));
            const auto body = nlohmann::json::parse(svc.body());
            CHECK(body["features"] == nlohmann::json::array({{0, 1.0}, {17, 0.5}}));
        }
        {
            FakeClassifierService svc(503);
            CHECK_THROWS_AS(HttpClassifier(svc.url(), 5).classify(x), ClassifierUnavailable);
        }
        {
            FakeClassifierService svc(500);
            CHECK_THROWS_AS(HttpClassifier(svc.url(), 5).classify(x), BadResponse);
        }
        CHECK_THROWS_AS(HttpClassifier("http://127.0.0.1:1", 1).classify(x), ClassifierUnavailable);
    }
}
