#pragma once
// Backend that plays back a chosen accuracy per TIR iteration, for control-flow tests.

#include <string>
#include <vector>

#include "simulacra/dataset.hpp"
#include "simulacra/llm.hpp"

namespace simulacra::fixtures {

/// A window with `n_future` future questions; labels alternate Correct/Incorrect.
HistoryWindow small_window(std::size_t n_future = 4, const std::string& student = "s1",
                           const std::string& lecture = "L1");

/// Prediction text with exactly `matches` answers agreeing with `w.y_future`.
std::string prediction_text(const HistoryWindow& w, std::size_t matches);

enum class CallKind { Initial, Reflection, Novice };

/// The initial prediction gets `initial_matches`; the k-th novice call gets
/// `novice_matches[k-1]`. Reflections are "REFLECTION-<k>". Calls are logged.
class ScriptedTirBackend final : public Backend {
public:
    ScriptedTirBackend(HistoryWindow w, std::size_t initial_matches, std::vector<std::size_t> novice_matches);
    std::string model_id() const override { return "scripted"; }

    std::vector<CallKind> calls;
    /// Feedback phrase seen in each reflection request ("", "another direction" or "indeed improved").
    std::vector<std::string> feedback_seen;
    /// Reflection text present in each novice prompt.
    std::vector<std::string> novice_reflections;

protected:
    std::string do_chat(const ChatRequest& req) override;

private:
    HistoryWindow w_;
    std::size_t initial_matches_;
    std::vector<std::size_t> novice_matches_;
    int reflections_ = 0;
    std::size_t novice_ = 0;
};

}  // namespace simulacra::fixtures
