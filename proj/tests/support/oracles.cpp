#include "oracles.hpp"

#include <cmath>
#include <fmt/format.h>
#include <set>

namespace simulacra::oracle {

AccF1 accuracy_f1(const std::vector<bool>& preds, const std::vector<bool>& labels) {
    long tp = 0, fp = 0, fn = 0, same = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) ++same;
        if (preds[i] && labels[i]) ++tp;
        if (preds[i] && !labels[i]) ++fp;
        if (!preds[i] && labels[i]) ++fn;
    }
    AccF1 out;
    out.accuracy = static_cast<double>(static_cast<long double>(same) / static_cast<long double>(preds.size()));
    const long denom = 2 * tp + fp + fn;
    out.f1 = denom == 0 ? 0.0 : static_cast<double>(static_cast<long double>(2 * tp) / denom);
    return out;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<long double>(x.size());
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    long double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    if (vx == 0 || vy == 0) return std::nullopt;
    return static_cast<double>(cov / std::sqrt(vx * vy));
}

Series aggregate(const std::vector<SimulationResult>& results, const Dataset& d, Level level) {
    std::map<std::string, std::vector<std::pair<bool, bool>>> cells;
    for (const auto& r : results) {
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
            const auto& qid = r.predictions.entries[i].question_id;
            const std::pair<bool, bool> v{r.predictions.entries[i].correct, r.labels[i]};
            switch (level) {
                case Level::Individual: cells[r.student_id].push_back(v); break;
                case Level::Lecture: cells[r.lecture_id].push_back(v); break;
                case Level::Question: cells[qid].push_back(v); break;
                case Level::Slide: {
                    const std::set<std::string> refs(d.question(qid).slide_refs.begin(),
                                                     d.question(qid).slide_refs.end());
                    for (const auto& s : refs) cells[s].push_back(v);
                    break;
                }
            }
        }
    }
    Series out;
    for (const auto& [key, vs] : cells) {
        long double sim = 0, lab = 0;
        for (const auto& [p, l] : vs) {
            sim += p;
            lab += l;
        }
        out.keys.push_back(key);
        out.sim.push_back(static_cast<double>(sim / vs.size()));
        out.label.push_back(static_cast<double>(lab / vs.size()));
    }
    return out;
}

Agreement bland_altman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<long double>(a.size());
    long double mean = 0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += static_cast<long double>(a[i]) - b[i];
    mean /= n;
    long double ss = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double dev = static_cast<long double>(a[i]) - b[i] - mean;
        ss += dev * dev;
    }
    const long double sd = std::sqrt(ss / (n - 1));
    Agreement out;
    out.bias = static_cast<double>(mean);
    out.sd = static_cast<double>(sd);
    out.loa_low = static_cast<double>(mean - 1.96L * sd);
    out.loa_high = static_cast<double>(mean + 1.96L * sd);
    if (sd > 0) out.t = static_cast<double>(mean / (sd / std::sqrt(n)));
    return out;
}

EdgeOracle graph_edge(const Dataset& d, const StudentId& a, const StudentId& b) {
    EdgeOracle out;
    std::vector<double> xa, xb;
    for (const auto& [lid, lec] : d.lectures()) {
        const auto* ra = d.find_record(a, lid);
        const auto* rb = d.find_record(b, lid);
        if (!ra || !rb) continue;
        out.exists = true;
        for (const auto* q : d.lecture_questions(lid)) {
            const Response* pa = nullptr;
            const Response* pb = nullptr;
            for (const auto& r : ra->responses)
                if (r.question_id == q->question_id) pa = &r;
            for (const auto& r : rb->responses)
                if (r.question_id == q->question_id) pb = &r;
            if (pa && pb) {
                xa.push_back(pa->correct);
                xb.push_back(pb->correct);
            }
        }
    }
    out.n = xa.size();
    if (xa.size() >= 2) out.r = pearson(xa, xb);
    return out;
}

double node_value(const Dataset& d, const StudentId& s) {
    long double sum = 0;
    std::size_t n = 0;
    for (const auto& rec : d.records()) {
        if (rec.student_id != s) continue;
        for (const auto& r : rec.responses) {
            sum += r.correct;
            ++n;
        }
    }
    return static_cast<double>(sum / n);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, long> table;
    std::map<int, long> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++table[{a[i], b[i]}];
        ++rows[a[i]];
        ++cols[b[i]];
    }
    auto c2 = [](long v) { return static_cast<long double>(v) * (v - 1) / 2; };
    long double index = 0, sa = 0, sb = 0;
    for (const auto& [k, v] : table) index += c2(v);
    for (const auto& [k, v] : rows) sa += c2(v);
    for (const auto& [k, v] : cols) sb += c2(v);
    const long double expected = sa * sb / c2(static_cast<long>(a.size()));
    const long double max_index = (sa + sb) / 2;
    if (max_index == expected) return 1.0;
    return static_cast<double>((index - expected) / (max_index - expected));
}

TirExpectation tir(std::size_t n, std::size_t initial_matches, const std::vector<std::size_t>& novice_matches,
                   int max_iterations) {
    TirExpectation out;
    std::size_t best_matches = 0;
    for (int k = 0; k < max_iterations; ++k) {
        const std::size_t m = novice_matches[static_cast<std::size_t>(k)];
        ++out.iterations;
        if (out.best == 0 || m > best_matches) {
            best_matches = m;
            out.best = out.iterations;
        }
        if (m == n) break;
        if (k + 1 < max_iterations) out.different.push_back(m < initial_matches);
    }
    out.improved = best_matches > initial_matches;
    return out;
}

Dataset random_cohort(std::mt19937_64& rng, int n_students, int n_lectures) {
    std::uniform_int_distribution<int> coin(0, 1);
    std::bernoulli_distribution attend(0.6);
    std::set<StudentId> students;
    std::map<LectureId, Lecture> lectures;
    std::map<SlideId, CourseSlide> slides;
    std::map<QuestionId, QuestionItem> questions;
    std::vector<LearningRecord> records;
    std::map<LectureId, std::vector<QuestionId>> order;
    for (int l = 0; l < n_lectures; ++l) {
        const LectureId lid = "L" + std::to_string(l);
        lectures[lid] = {lid, "Lecture " + std::to_string(l)};
        const int n_slides = 2 + coin(rng);
        for (int s = 0; s < n_slides; ++s) {
            const SlideId sid = lid + "-S" + std::to_string(s);
            slides[sid] = {sid, lid, s, "content " + sid};
        }
        const int n_q = 6 + static_cast<int>(rng() % 4);
        for (int q = 0; q < n_q; ++q) {
            const QuestionId qid = lid + "-Q" + std::to_string(q);
            std::vector<SlideId> refs{lid + "-S" + std::to_string(rng() % n_slides)};
            if (coin(rng)) {
                const auto other = lid + "-S" + std::to_string(rng() % n_slides);
                if (other != refs[0]) refs.push_back(other);
            }
            questions[qid] = {qid, lid, q, "question " + qid, refs, {}};
            order[lid].push_back(qid);
        }
    }
    for (int s = 0; s < n_students; ++s) {
        const std::string id = fmt::format("s{:03d}", s);
        students.insert(id);
        std::vector<int> attended;
        for (int l = 0; l < n_lectures; ++l)
            if (attend(rng)) attended.push_back(l);
        if (attended.empty()) attended.push_back(static_cast<int>(rng() % n_lectures));
        for (int l : attended) {
            LearningRecord rec{id, "L" + std::to_string(l), {}};
            for (const auto& qid : order[rec.lecture_id]) rec.responses.push_back({qid, coin(rng) == 1});
            records.push_back(std::move(rec));
        }
    }
    return Dataset(std::move(students), std::move(lectures), std::move(slides), std::move(questions),
                   std::move(records));
}

std::vector<SimulationResult> random_results(std::mt19937_64& rng, const Dataset& d) {
    std::vector<SimulationResult> out;
    for (const auto& rec : d.records()) {
        SimulationResult r;
        r.student_id = rec.student_id;
        r.lecture_id = rec.lecture_id;
        for (const auto& resp : rec.responses) {
            r.predictions.entries.push_back({resp.question_id, rng() % 2 == 0, std::nullopt});
            r.labels.push_back(resp.correct);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace simulacra::oracle
