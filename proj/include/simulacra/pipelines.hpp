#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simulacra/dataset.hpp"
#include "simulacra/llm.hpp"
#include "simulacra/results.hpp"
#include "simulacra/tir.hpp"

namespace simulacra {

struct SimulationTarget {
    StudentId student_id;
    LectureId lecture_id;
    bool operator==(const SimulationTarget&) const = default;
};

/// Every record of the split's test students, in (student, lecture) order.
std::vector<SimulationTarget> test_targets(const Dataset& d, const SplitSpec& split);

// ---- leakage guard ------------------------------------------------------------------

struct LeakHit {
    std::size_t exchange = 0;
    std::size_t message = 0;
    QuestionId question_id;
};

/// Every request message that renders a known answer to one of `future_ids`.
std::vector<LeakHit> find_label_leaks(std::span<const Exchange> transcript, std::span<const QuestionId> future_ids);

// ---- prompting pipelines ------------------------------------------------------------

struct SimulationOptions {
    Variant variant = Variant::Standard;
    bool tir = false;
    /// Required when tir is set.
    const ReflectionDB* db = nullptr;
    /// exemplars_m, seed, n_past, prefer_improved and workers are used.
    TirConfig config;
};

struct TargetTranscript {
    SimulationTarget target;
    std::vector<Exchange> exchanges;
};

struct SimulationReport {
    std::vector<SimulationResult> results;  // labels joined, target order
    std::vector<RecordIssue> skipped;
    std::vector<RecordIssue> failed;
    std::vector<TargetTranscript> transcripts;
};

/// Standard or CoT prediction per target; with tir, M same-lecture reflections from
/// the database are shown as demonstrations. Labels are joined only after every
/// transcript passed the leakage scan. Throws LabelLeak on any hit, and the first
/// failure when every target failed.
SimulationReport simulate_prompting(const Dataset& d, std::span<const SimulationTarget> targets,
                                    const AgentContext& ctx, const SimulationOptions& opt);

// ---- classifier path ----------------------------------------------------------------

using SparseVector = std::vector<std::pair<std::uint32_t, double>>;  // sorted by index

inline constexpr std::uint32_t kFeatureBuckets = 1u << 18;
inline constexpr std::uint32_t kInitialBitIndex = 0;

/// Hashed unigrams and bigrams of the question text and of the reflection (separate
/// salts, indices in [1, 2^18)), plus the initial prediction as +-1 at index 0.
SparseVector featurize(const QuestionItem& question, bool initial_bit, std::string_view reflection);

struct ClassifierExample {
    SparseVector features;
    bool label = false;
};

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual bool classify(const SparseVector& x) const = 0;
};

struct TrainOptions {
    int epochs = 10;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
};

/// Hashed bag-of-words logistic regression.
class ReferenceClassifier final : public Classifier {
public:
    /// Logistic-loss SGD with a seeded shuffle per epoch. Throws DegenerateLabels
    /// unless both classes are present.
    static ReferenceClassifier train(std::span<const ClassifierExample> examples, const TrainOptions& opt = {});

    double probability(const SparseVector& x) const;
    bool classify(const SparseVector& x) const override { return probability(x) >= 0.5; }

    const std::vector<double>& weights() const noexcept { return weights_; }
    double bias() const noexcept { return bias_; }
    const TrainOptions& options() const noexcept { return options_; }

private:
    std::vector<double> weights_;
    double bias_ = 0.0;
    TrainOptions options_;
};

/// External classifier: POST {base}/classify {"features": [[index, value], ...]}
/// answered with {"correct": bool}. HTTP 503 or no connection -> ClassifierUnavailable.
class HttpClassifier final : public Classifier {
public:
    explicit HttpClassifier(std::string base_url, int timeout_seconds = 30);
    bool classify(const SparseVector& x) const override;

private:
    std::string scheme_host_port_;
    std::string path_prefix_;
    int timeout_seconds_;
};

/// Training examples from the split's train students: per future question, the
/// standard initial prediction, r_best from `db` (empty when null or absent) and
/// the ground-truth label.
std::vector<ClassifierExample> build_classifier_examples(const Dataset& d, const SplitSpec& split,
                                                         const ReflectionDB* db, const AgentContext& ctx,
                                                         const TirConfig& cfg);

/// Per target: standard initial prediction, one transfer reflection when tir is set,
/// then one classifier decision per future question.
SimulationReport simulate_classifier(const Dataset& d, std::span<const SimulationTarget> targets,
                                     const AgentContext& ctx, const Classifier& classifier,
                                     const SimulationOptions& opt);

}  // namespace simulacra
