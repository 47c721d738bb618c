#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "simulacra/kernels.hpp"

namespace simulacra {

struct GazeSample {
    double t = 0.0;  // ms
    double x = 0.0;
    double y = 0.0;
    bool on_screen = true;
};

struct Fixation {
    double t_start = 0.0;
    double t_end = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    std::size_t n_samples = 0;
};

struct FixationOptions {
    int smoothing_window = 5;  // odd; half-width = window / 2
    double lambda = 6.0;
    std::size_t min_samples = 3;
};

/// Velocity-threshold labeling with a median-based dispersion per axis and an
/// elliptic criterion. Off-screen samples always break a run.
std::vector<Fixation> label_fixations(std::span<const GazeSample> samples, const FixationOptions& opt = {});

struct AoI {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;
    double support_ratio = 0.0;
    double confusion_ratio = 0.0;
    std::vector<std::size_t> members;  // fixation indices
};

struct AoiOptions {
    std::optional<double> sigma;  // default: median distance to the sigma_neighbors-th neighbour
    int sigma_neighbors = 10;
    std::uint64_t seed = 0;
    int max_iterations = 100;
};

struct AoiResult {
    std::vector<AoI> aois;
    std::vector<int> assignment;  // one cluster index per fixation
    int k = 0;
    double sigma = 0.0;
    bool degenerate = false;  // all fixations identical, clustering skipped
    std::vector<double> eigenvalues;  // ascending
};

/// Spectral clustering: Gaussian affinity, normalized Laplacian, eigengap over the
/// first half of the spectrum, then k-means++ on the fixation coordinates.
/// Without annotation, support_ratio is the share of fixations in the AoI.
AoiResult cluster_aoi(std::span<const Fixation> fixations, const AoiOptions& opt = {});

/// Normalized symmetric Laplacian I - D^-1/2 A D^-1/2.
Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& affinity);
/// Number of eigenvalues before the largest gap among the first floor(n/2) + 1.
int eigengap_k(std::span<const double> ascending);

struct CognitiveFlags {
    std::string student_id;
    bool tab_visible = true;
    bool face_detected = true;
    bool gaze_on_screen = true;
    bool confused = false;
    bool operator==(const CognitiveFlags&) const = default;
};

/// Sets support_ratio (students with a fixation in the AoI / all students) and
/// confusion_ratio (confused among those students). `owners[i]` is the student of fixation i.
void annotate_aois(AoiResult& result, std::span<const std::string> owners, std::span<const CognitiveFlags> flags);

bool is_attentive(const CognitiveFlags& f) noexcept;

struct CogSnapshot {
    double knowledge_ratio = 0.0;
    double attention_ratio = 0.0;
    std::size_t n_students = 0;
};

CogSnapshot cog_snapshot(std::span<const CognitiveFlags> flags);

enum class Bucket { Low = 0, Medium = 1, High = 2 };
enum class Action { NoAction, DrawAttention, RepeatContent };

std::string_view to_string(Action a) noexcept;
Bucket bucket_of(double ratio, double low = 1.0 / 3.0, double high = 2.0 / 3.0) noexcept;
Action action_for(Bucket attention, Bucket knowledge) noexcept;
Action action_prompt(const CogSnapshot& s, double low = 1.0 / 3.0, double high = 2.0 / 3.0);

// ---- IO --------------------------------------------------------------------------

/// CSV with header t_ms,x,y,on_screen.
std::vector<GazeSample> gaze_from_csv(std::string_view csv);
std::string gaze_to_csv(std::span<const GazeSample> samples);
/// CSV with header student_id,tab_visible,face_detected,gaze_on_screen,confused.
std::vector<CognitiveFlags> flags_from_csv(std::string_view csv);
std::string flags_to_csv(std::span<const CognitiveFlags> flags);

nlohmann::json fixations_to_json(std::span<const Fixation> fixations);
nlohmann::json aois_to_json(const AoiResult& r);
nlohmann::json snapshot_to_json(const CogSnapshot& s, Action a);

}  // namespace simulacra
