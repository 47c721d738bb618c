#include "simulacra/telemetry.hpp"

#include "simulacra/error.hpp"
#include "simulacra/util.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace simulacra {

using nlohmann::json;

namespace {

double median(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

// Median-based velocity dispersion per axis.
double dispersion(const std::vector<double>& v) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    const double m = median(v);
    const double s = std::sqrt(std::max(0.0, median(std::move(sq)) - m * m));
    return std::max(s, 1e-6);
}

double unit_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double parse_real(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw ParseError(where + ": not a number '" + s + "'");
    return v;
}

void check_header(const std::vector<CsvRow>& rows, const std::vector<std::string>& expected, const char* what) {
    if (rows.empty() || rows[0] != expected) {
        std::string h;
        for (std::size_t i = 0; i < expected.size(); ++i) h += (i ? "," : "") + expected[i];
        throw ParseError(std::string(what) + " CSV header must be '" + h + "'");
    }
}

}  // namespace

std::vector<Fixation> label_fixations(std::span<const GazeSample> samples, const FixationOptions& opt) {
    if (opt.smoothing_window < 3 || opt.smoothing_window % 2 == 0)
        throw InvalidArgument("smoothing window must be odd and >= 3");
    if (opt.lambda <= 0.0) throw InvalidArgument("lambda must be positive");
    if (samples.size() < static_cast<std::size_t>(opt.smoothing_window))
        throw TooFewSamples(std::to_string(samples.size()) + " gaze samples, need " +
                            std::to_string(opt.smoothing_window));

    std::vector<double> t(samples.size()), x(samples.size()), y(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        t[i] = samples[i].t;
        x[i] = samples[i].x;
        y[i] = samples[i].y;
        if (i > 0 && !(t[i] > t[i - 1])) throw InvalidArgument("gaze timestamps must strictly increase");
    }
    std::vector<double> vx, vy;
    try {
        kernels::gaze_velocities(t, x, y, opt.smoothing_window / 2, vx, vy);
    } catch (const std::invalid_argument& e) {
        throw InvalidArgument(e.what());
    }

    std::vector<double> on_vx, on_vy;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].on_screen) continue;
        on_vx.push_back(vx[i]);
        on_vy.push_back(vy[i]);
    }
    if (on_vx.empty()) return {};
    const double tx = opt.lambda * dispersion(on_vx);
    const double ty = opt.lambda * dispersion(on_vy);

    std::vector<Fixation> out;
    std::size_t i = 0;
    while (i < samples.size()) {
        auto slow = [&](std::size_t k) {
            const double a = vx[k] / tx;
            const double b = vy[k] / ty;
            return samples[k].on_screen && a * a + b * b < 1.0;
        };
        if (!slow(i)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        double sx = 0.0, sy = 0.0;
        while (j < samples.size() && slow(j)) {
            sx += samples[j].x;
            sy += samples[j].y;
            ++j;
        }
        const std::size_t n = j - i;
        if (n >= opt.min_samples) {
            out.push_back({samples[i].t, samples[j - 1].t, sx / static_cast<double>(n), sy / static_cast<double>(n), n});
        }
        i = j;
    }
    return out;
}

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& affinity) {
    const Eigen::VectorXd deg = affinity.rowwise().sum();
    const Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
    Eigen::MatrixXd l = -(inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal());
    l.diagonal().array() += 1.0;
    return 0.5 * (l + l.transpose());
}

int eigengap_k(std::span<const double> ascending) {
    const std::size_t n = ascending.size();
    if (n < 2) return 1;
    const std::size_t half = n / 2;
    int best = 1;
    double best_gap = -1.0;
    for (std::size_t i = 1; i <= half; ++i) {
        const double gap = ascending[i] - ascending[i - 1];
        if (gap > best_gap) {
            best_gap = gap;
            best = static_cast<int>(i);
        }
    }
    return best;
}

namespace {

std::vector<Point2> kmeans_pp(std::span<const Point2> pts, int k, std::mt19937_64& rng) {
    std::vector<Point2> centers;
    centers.push_back(pts[uniform_index(rng, pts.size())]);
    std::vector<double> d2(pts.size(), 0.0);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = INFINITY;
            for (const auto& c : centers) {
                const double dx = pts[i].x - c.x;
                const double dy = pts[i].y - c.y;
                best = std::min(best, dx * dx + dy * dy);
            }
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(pts[uniform_index(rng, pts.size())]);
            continue;
        }
        const double target = unit_real(rng) * total;
        double acc = 0.0;
        std::size_t pick = pts.size() - 1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            acc += d2[i];
            if (acc > target && d2[i] > 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
    }
    return centers;
}

}  // namespace

AoiResult cluster_aoi(std::span<const Fixation> fixations, const AoiOptions& opt) {
    const std::size_t n = fixations.size();
    if (n < 2) throw TooFewFixations(std::to_string(n) + " fixation(s), need at least 2");
    if (opt.sigma && !(*opt.sigma > 0.0)) throw InvalidArgument("sigma must be positive");
    if (opt.max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");

    std::vector<Point2> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = {fixations[i].cx, fixations[i].cy};

    AoiResult r;
    const bool identical = std::all_of(pts.begin(), pts.end(), [&](const Point2& p) { return p == pts[0]; });
    std::vector<int> labels;
    if (identical) {
        r.degenerate = true;
        r.k = 1;
        labels.assign(n, 0);
    } else {
        if (opt.sigma) {
            r.sigma = *opt.sigma;
        } else {
            const int kn = std::clamp(opt.sigma_neighbors, 1, static_cast<int>(n) - 1);
            r.sigma = median(kernels::kth_neighbor_distances(pts, kn));
            if (r.sigma <= 0.0) {
                // Heavy duplication: fall back to the median of the non-zero distances.
                const Eigen::MatrixXd d2 = kernels::pairwise_sq_distances(pts);
                std::vector<double> nz;
                for (Eigen::Index i = 0; i < d2.rows(); ++i)
                    for (Eigen::Index j = i + 1; j < d2.cols(); ++j)
                        if (d2(i, j) > 0.0) nz.push_back(std::sqrt(d2(i, j)));
                r.sigma = median(std::move(nz));
            }
        }
        const Eigen::MatrixXd lap = normalized_laplacian(kernels::gaussian_affinity(pts, r.sigma));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) throw InvalidArgument("eigendecomposition did not converge");
        const Eigen::VectorXd ev = solver.eigenvalues();
        r.eigenvalues.assign(ev.data(), ev.data() + ev.size());
        r.k = eigengap_k(r.eigenvalues);

        std::mt19937_64 rng(opt.seed);
        std::vector<Point2> centers = kmeans_pp(pts, r.k, rng);
        for (int it = 0; it < opt.max_iterations; ++it) {
            if (kernels::kmeans_assign(pts, centers, labels) == 0) break;
            std::vector<double> sx(centers.size(), 0.0), sy(centers.size(), 0.0);
            std::vector<std::size_t> cnt(centers.size(), 0);
            for (std::size_t i = 0; i < n; ++i) {
                const auto c = static_cast<std::size_t>(labels[i]);
                sx[c] += pts[i].x;
                sy[c] += pts[i].y;
                ++cnt[c];
            }
            for (std::size_t c = 0; c < centers.size(); ++c) {
                if (cnt[c] > 0) centers[c] = {sx[c] / static_cast<double>(cnt[c]), sy[c] / static_cast<double>(cnt[c])};
            }
        }
    }

    // Renumber clusters by first appearance; empty clusters vanish.
    std::map<int, int> renumber;
    r.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = renumber.emplace(labels[i], static_cast<int>(renumber.size()));
        r.assignment[i] = it->second;
        if (inserted) {
            AoI a;
            a.min_x = a.max_x = pts[i].x;
            a.min_y = a.max_y = pts[i].y;
            r.aois.push_back(a);
        }
        auto& a = r.aois[static_cast<std::size_t>(it->second)];
        a.min_x = std::min(a.min_x, pts[i].x);
        a.max_x = std::max(a.max_x, pts[i].x);
        a.min_y = std::min(a.min_y, pts[i].y);
        a.max_y = std::max(a.max_y, pts[i].y);
        a.members.push_back(i);
    }
    for (auto& a : r.aois) a.support_ratio = static_cast<double>(a.members.size()) / static_cast<double>(n);
    return r;
}

void annotate_aois(AoiResult& result, std::span<const std::string> owners, std::span<const CognitiveFlags> flags) {
    if (owners.size() != result.assignment.size()) throw LengthMismatch(owners.size(), result.assignment.size());
    std::map<std::string, bool> confused;
    for (const auto& f : flags) {
        if (!confused.emplace(f.student_id, f.confused).second)
            throw IntegrityError(f.student_id, "duplicate student in cognitive flags");
    }
    std::set<std::string> everyone(owners.begin(), owners.end());
    if (!flags.empty()) {
        for (const auto& o : everyone) {
            if (!confused.contains(o)) throw IntegrityError(o, "fixation owner has no cognitive flags");
        }
        for (const auto& [id, _] : confused) everyone.insert(id);
    }
    for (auto& a : result.aois) {
        std::set<std::string> viewers;
        for (auto m : a.members) viewers.insert(owners[m]);
        std::size_t n_confused = 0;
        for (const auto& v : viewers) {
            auto it = confused.find(v);
            n_confused += it != confused.end() && it->second;
        }
        a.support_ratio = static_cast<double>(viewers.size()) / static_cast<double>(everyone.size());
        a.confusion_ratio = static_cast<double>(n_confused) / static_cast<double>(viewers.size());
    }
}

bool is_attentive(const CognitiveFlags& f) noexcept { return f.tab_visible && f.face_detected && f.gaze_on_screen; }

CogSnapshot cog_snapshot(std::span<const CognitiveFlags> flags) {
    if (flags.empty()) throw EmptyInput("no cognitive flags");
    std::size_t clear = 0;
    std::size_t attentive = 0;
    for (const auto& f : flags) {
        clear += !f.confused;
        attentive += is_attentive(f);
    }
    const auto n = static_cast<double>(flags.size());
    return {static_cast<double>(clear) / n, static_cast<double>(attentive) / n, flags.size()};
}

std::string_view to_string(Action a) noexcept {
    switch (a) {
        case Action::NoAction: return "none";
        case Action::DrawAttention: return "draw_attention";
        case Action::RepeatContent: return "repeat_content";
    }
    return "none";
}

Bucket bucket_of(double ratio, double low, double high) noexcept {
    if (ratio < low) return Bucket::Low;
    if (ratio >= high) return Bucket::High;
    return Bucket::Medium;
}

Action action_for(Bucket attention, Bucket knowledge) noexcept {
    if (attention == Bucket::High && knowledge == Bucket::High) return Action::NoAction;
    if (knowledge < attention) return Action::RepeatContent;
    return Action::DrawAttention;
}

Action action_prompt(const CogSnapshot& s, double low, double high) {
    if (!(0.0 <= low && low < high && high <= 1.0)) throw InvalidArgument("need 0 <= low < high <= 1");
    return action_for(bucket_of(s.attention_ratio, low, high), bucket_of(s.knowledge_ratio, low, high));
}

// ---- IO --------------------------------------------------------------------------

std::vector<GazeSample> gaze_from_csv(std::string_view csv) {
    const auto rows = parse_csv(csv);
    check_header(rows, {"t_ms", "x", "y", "on_screen"}, "gaze");
    std::vector<GazeSample> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string where = "gaze CSV line " + std::to_string(i + 1);
        if (rows[i].size() != 4) throw ParseError(where + ": expected 4 fields");
        GazeSample s{parse_real(rows[i][0], where), parse_real(rows[i][1], where), parse_real(rows[i][2], where), true};
        if (!parse_bool_token(rows[i][3], s.on_screen)) throw ParseError(where + ": on_screen must be 0/1");
        if (!out.empty() && s.t <= out.back().t) throw ParseError(where + ": timestamps must increase");
        out.push_back(s);
    }
    return out;
}

std::string gaze_to_csv(std::span<const GazeSample> samples) {
    std::string out = "t_ms,x,y,on_screen\n";
    for (const auto& s : samples) {
        out += format_real(s.t) + "," + format_real(s.x) + "," + format_real(s.y) + "," + (s.on_screen ? "1" : "0") +
               "\n";
    }
    return out;
}

std::vector<CognitiveFlags> flags_from_csv(std::string_view csv) {
    const auto rows = parse_csv(csv);
    check_header(rows, {"student_id", "tab_visible", "face_detected", "gaze_on_screen", "confused"}, "flags");
    std::vector<CognitiveFlags> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string where = "flags CSV line " + std::to_string(i + 1);
        const auto& row = rows[i];
        if (row.size() != 5) throw ParseError(where + ": expected 5 fields");
        CognitiveFlags f;
        f.student_id = row[0];
        if (!parse_bool_token(row[1], f.tab_visible) || !parse_bool_token(row[2], f.face_detected) ||
            !parse_bool_token(row[3], f.gaze_on_screen) || !parse_bool_token(row[4], f.confused))
            throw ParseError(where + ": boolean fields must be 0/1");
        out.push_back(std::move(f));
    }
    return out;
}

std::string flags_to_csv(std::span<const CognitiveFlags> flags) {
    std::string out = "student_id,tab_visible,face_detected,gaze_on_screen,confused\n";
    auto b = [](bool v) { return v ? "1" : "0"; };
    for (const auto& f : flags) {
        out += csv_field(f.student_id) + "," + b(f.tab_visible) + "," + b(f.face_detected) + "," + b(f.gaze_on_screen) +
               "," + b(f.confused) + "\n";
    }
    return out;
}

json fixations_to_json(std::span<const Fixation> fixations) {
    json arr = json::array();
    for (const auto& f : fixations) {
        arr.push_back({{"t_start", f.t_start}, {"t_end", f.t_end}, {"cx", f.cx}, {"cy", f.cy}, {"n_samples", f.n_samples}});
    }
    return {{"fixations", arr}};
}

json aois_to_json(const AoiResult& r) {
    json arr = json::array();
    for (const auto& a : r.aois) {
        arr.push_back({{"bbox", {a.min_x, a.min_y, a.max_x, a.max_y}},
                       {"support_ratio", a.support_ratio},
                       {"confusion_ratio", a.confusion_ratio},
                       {"members", a.members}});
    }
    return {{"k", r.k},
            {"sigma", r.sigma},
            {"degenerate", r.degenerate},
            {"aois", arr},
            {"assignment", r.assignment}};
}

json snapshot_to_json(const CogSnapshot& s, Action a) {
    return {{"knowledge_ratio", s.knowledge_ratio},
            {"attention_ratio", s.attention_ratio},
            {"n_students", s.n_students},
            {"action", std::string(to_string(a))}};
}

}  // namespace simulacra
