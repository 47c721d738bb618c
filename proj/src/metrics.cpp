#include "simulacra/metrics.hpp"

#include "simulacra/error.hpp"
#include "simulacra/kernels.hpp"
#include "simulacra/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace simulacra {

using nlohmann::json;

MetricReport accuracy_f1(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
    if (predictions.size() != labels.size()) throw LengthMismatch(predictions.size(), labels.size());
    if (predictions.empty()) throw EmptyInput("accuracy_f1 needs at least one pair");
    std::size_t tp = 0, fp = 0, fn = 0, matches = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i];
        const bool l = labels[i];
        matches += p == l;
        tp += p && l;
        fp += p && !l;
        fn += !p && l;
    }
    MetricReport r;
    r.n = labels.size();
    r.accuracy = static_cast<double>(matches) / static_cast<double>(r.n);
    const std::size_t denom = 2 * tp + fp + fn;
    r.f1 = denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
    return r;
}

MetricReport accuracy_f1(const std::vector<SimulationResult>& results) {
    std::vector<bool> preds;
    std::vector<bool> labels;
    for (const auto& r : results) {
        if (r.labels.size() != r.predictions.size()) throw LengthMismatch(r.predictions.size(), r.labels.size());
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
            preds.push_back(r.predictions.entries[i].correct);
            labels.push_back(r.labels[i]);
        }
    }
    return accuracy_f1(preds, labels);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw LengthMismatch(x.size(), y.size());
    if (x.size() < 2) throw TooShort("pearson needs at least 2 points");
    return kernels::pearson_r(x, y);
}

std::string_view to_string(Level level) noexcept {
    switch (level) {
        case Level::Individual: return "individual";
        case Level::Lecture: return "lecture";
        case Level::Question: return "question";
        case Level::Slide: return "slide";
    }
    return "individual";
}

Level level_from_string(std::string_view s) {
    if (s == "individual") return Level::Individual;
    if (s == "lecture") return Level::Lecture;
    if (s == "question") return Level::Question;
    if (s == "slide") return Level::Slide;
    throw InvalidArgument("unknown level '" + std::string(s) + "'");
}

namespace {

struct Tally {
    double sim = 0.0;
    double label = 0.0;
    double agree = 0.0;
    std::size_t n = 0;
};

std::vector<std::string> keys_for(const SimulationResult& r, const QuestionId& qid, const Dataset& d, Level level) {
    switch (level) {
        case Level::Individual: return {r.student_id};
        case Level::Lecture: return {r.lecture_id};
        case Level::Question: return {qid};
        case Level::Slide: {
            const auto& q = d.question(qid);
            std::set<std::string> unique(q.slide_refs.begin(), q.slide_refs.end());
            return {unique.begin(), unique.end()};
        }
    }
    return {};
}

std::map<std::string, Tally> tally(const std::vector<SimulationResult>& results, const Dataset& d, Level level) {
    if (results.empty()) throw EmptyInput("no simulation results");
    std::map<std::string, Tally> out;
    for (const auto& r : results) {
        if (!d.students().contains(r.student_id)) throw IntegrityError(r.student_id, "unresolved student id");
        if (!d.lectures().contains(r.lecture_id)) throw IntegrityError(r.lecture_id, "unresolved lecture id");
        if (r.labels.size() != r.predictions.size()) throw LengthMismatch(r.predictions.size(), r.labels.size());
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
            const auto& qid = r.predictions.entries[i].question_id;
            if (!d.questions().contains(qid)) throw IntegrityError(qid, "unresolved question id");
            const bool p = r.predictions.entries[i].correct;
            const bool l = r.labels[i];
            for (const auto& key : keys_for(r, qid, d, level)) {
                auto& t = out[key];
                t.sim += p;
                t.label += l;
                t.agree += p == l;
                ++t.n;
            }
        }
    }
    return out;
}

}  // namespace

SeriesReport aggregate(const std::vector<SimulationResult>& results, const Dataset& d, Level level) {
    SeriesReport s;
    s.level = level;
    for (const auto& [key, t] : tally(results, d, level)) {
        s.keys.push_back(key);
        s.sim_values.push_back(t.sim / static_cast<double>(t.n));
        s.label_values.push_back(t.label / static_cast<double>(t.n));
    }
    if (s.keys.size() >= 2) s.pearson_r = pearson(s.sim_values, s.label_values);
    return s;
}

KeyedSeries accuracy_series(const std::vector<SimulationResult>& results, const Dataset& d, Level level) {
    KeyedSeries s;
    for (const auto& [key, t] : tally(results, d, level)) {
        s.keys.push_back(key);
        s.values.push_back(t.agree / static_cast<double>(t.n));
    }
    return s;
}

// ---- graph ------------------------------------------------------------------------------

std::vector<Observation> observations_from_records(const Dataset& d) {
    std::vector<Observation> out;
    for (const auto& rec : d.records()) {
        for (const auto& resp : rec.responses) {
            out.push_back({rec.student_id, rec.lecture_id, resp.question_id, d.question(resp.question_id).position,
                           resp.correct});
        }
    }
    return out;
}

std::vector<Observation> observations_from_results(const std::vector<SimulationResult>& results, const Dataset& d,
                                                   bool use_predictions) {
    std::vector<Observation> out;
    for (const auto& r : results) {
        if (r.labels.size() != r.predictions.size()) throw LengthMismatch(r.predictions.size(), r.labels.size());
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
            const auto& qid = r.predictions.entries[i].question_id;
            out.push_back({r.student_id, r.lecture_id, qid, d.question(qid).position,
                           use_predictions ? r.predictions.entries[i].correct : static_cast<bool>(r.labels[i])});
        }
    }
    return out;
}

const GraphEdge* StudentGraph::edge(const StudentId& a, const StudentId& b) const {
    auto it = edges.find(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
    return it == edges.end() ? nullptr : &it->second;
}

StudentGraph interstudent_graph(const std::vector<Observation>& observations) {
    // student -> lecture -> (position, question) -> value
    using Answers = std::map<std::pair<int, QuestionId>, bool>;
    std::map<StudentId, std::map<LectureId, Answers>> by_student;
    for (const auto& o : observations) by_student[o.student_id][o.lecture_id][{o.position, o.question_id}] = o.value;
    if (by_student.size() < 2) throw InvalidArgument("inter-student graph needs at least 2 students");

    StudentGraph g;
    for (const auto& [student, lectures] : by_student) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [_, answers] : lectures) {
            for (const auto& [__, v] : answers) {
                sum += v;
                ++n;
            }
        }
        g.nodes[student] = sum / static_cast<double>(n);
    }

    std::vector<std::pair<StudentId, StudentId>> keys;
    std::vector<kernels::SeriesPair> pairs;
    for (auto a = by_student.begin(); a != by_student.end(); ++a) {
        for (auto b = std::next(a); b != by_student.end(); ++b) {
            bool shared = false;
            kernels::SeriesPair series;
            for (const auto& [lecture, answers_a] : a->second) {
                auto lb = b->second.find(lecture);
                if (lb == b->second.end()) continue;
                shared = true;
                for (const auto& [key, va] : answers_a) {
                    auto hit = lb->second.find(key);
                    if (hit == lb->second.end()) continue;
                    series.a.push_back(va);
                    series.b.push_back(hit->second);
                }
            }
            if (!shared) continue;
            keys.emplace_back(a->first, b->first);
            pairs.push_back(std::move(series));
        }
    }

    const auto rs = kernels::batch_pearson(pairs);
    for (std::size_t i = 0; i < keys.size(); ++i) g.edges[keys[i]] = GraphEdge{rs[i], pairs[i].a.size()};
    return g;
}

json graph_to_json(const StudentGraph& g) {
    json nodes = json::array();
    for (const auto& [id, v] : g.nodes) nodes.push_back({{"id", id}, {"value", v}});
    json edges = json::array();
    for (const auto& [key, e] : g.edges) {
        edges.push_back({{"source", key.first},
                         {"target", key.second},
                         {"weight", e.r ? json(*e.r) : json(nullptr)},
                         {"n", e.n}});
    }
    return {{"nodes", nodes}, {"edges", edges}};
}

std::string graph_to_dot(const StudentGraph& g) {
    auto quote = [](const std::string& s) {
        std::string out = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') out.push_back('\\');
            out.push_back(c);
        }
        return out + "\"";
    };
    std::string out = "graph students {\n";
    for (const auto& [id, v] : g.nodes) out += fmt::format("  {} [value={}];\n", quote(id), format_real(v));
    for (const auto& [key, e] : g.edges) {
        out += fmt::format("  {} -- {} [weight={}, n={}];\n", quote(key.first), quote(key.second),
                           e.r ? format_real(*e.r) : std::string("\"undefined\""), e.n);
    }
    out += "}\n";
    return out;
}

// ---- agreement ----------------------------------------------------------------------------

namespace {

struct DiffStats {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

DiffStats diff_stats(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatch(a.size(), b.size());
    if (a.size() < 2) throw TooShort("agreement needs at least 2 pairs");
    DiffStats s;
    s.n = a.size();
    for (std::size_t i = 0; i < s.n; ++i) s.mean += a[i] - b[i];
    s.mean /= static_cast<double>(s.n);
    double ss = 0.0;
    for (std::size_t i = 0; i < s.n; ++i) {
        const double d = (a[i] - b[i]) - s.mean;
        ss += d * d;
    }
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    return s;
}

}  // namespace

AgreementReport bland_altman_paired_t(std::span<const double> a, std::span<const double> b) {
    const auto s = diff_stats(a, b);
    AgreementReport r;
    r.n = s.n;
    r.df = static_cast<int>(s.n) - 1;
    r.bias = s.mean;
    r.sd = s.sd;
    r.loa_low = s.mean - 1.96 * s.sd;
    r.loa_high = s.mean + 1.96 * s.sd;
    if (s.sd > 0.0) r.t_statistic = s.mean / (s.sd / std::sqrt(static_cast<double>(s.n)));
    return r;
}

double paired_t_statistic(std::span<const double> a, std::span<const double> b) {
    const auto s = diff_stats(a, b);
    if (s.sd == 0.0) throw ZeroVariance("differences are constant, t is undefined");
    return s.mean / (s.sd / std::sqrt(static_cast<double>(s.n)));
}

json agreement_to_json(const AgreementReport& r) {
    return {{"bias", r.bias},
            {"sd", r.sd},
            {"loa_low", r.loa_low},
            {"loa_high", r.loa_high},
            {"t", r.t_statistic ? json(*r.t_statistic) : json(nullptr)},
            {"df", r.df},
            {"n", r.n}};
}

std::string series_to_csv(const SeriesReport& s) {
    std::string out = "key,simulated,label\n";
    for (std::size_t i = 0; i < s.keys.size(); ++i) {
        out += csv_field(s.keys[i]) + "," + format_real(s.sim_values[i]) + "," + format_real(s.label_values[i]) + "\n";
    }
    return out;
}

}  // namespace simulacra
