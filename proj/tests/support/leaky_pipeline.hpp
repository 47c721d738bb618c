#pragma once
// Deliberately broken test-time pipeline: predicts from the reflection prompt,
// which renders the held-out labels. Only exists to prove the scanner catches it.

#include <span>
#include <vector>

#include "simulacra/pipelines.hpp"

namespace simulacra::fixtures {

struct LeakyRun {
    std::vector<TargetTranscript> transcripts;
    std::vector<std::vector<QuestionId>> future_ids;  // per transcript
};

LeakyRun leaky_simulate(const Dataset& d, std::span<const SimulationTarget> targets, const AgentContext& ctx,
                        int n_past = kDefaultPastCount);

/// Templates whose future-question block prints the label token.
Templates leaky_templates();

}  // namespace simulacra::fixtures
