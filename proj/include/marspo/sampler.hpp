#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "marspo/grader.hpp"
#include "marspo/records.hpp"

namespace marspo {

struct SamplingPlan {
    int n_samples = 1;
    double temperature = 0.8;
    int max_tokens = 1024;
    std::uint64_t seed = 0;
};

// Paper defaults; all overridable through the run config.
struct PlanDefaults {
    int n_gsm8k = 40;
    int n_math = 30;
    int n_synthetic = 12;
    int max_tokens = 1024;
    double temperature_iter1 = 0.8;
    double temperature_iter2 = 1.2;
    double temperature_iter3 = 1.2;  // also used past iteration 3
};

// Iteration 1 samples at the low temperature, later iterations at the high
// one; N depends on the dataset flavor.
SamplingPlan plan_for_iteration(int iteration, DatasetSource source, const PlanDefaults& defaults,
                                std::uint64_t seed);

struct CompletionClient {
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
    int max_in_flight = 4;
    int retries = 2;
    std::string auth_token;
};

// Abstracts one agent's generation capability: a live completion endpoint or
// the deterministic mock.
class CompletionService {
public:
    virtual ~CompletionService() = default;
    // Returns exactly n texts or throws; order is stable.
    virtual std::vector<std::string> complete(const std::string& prompt, int n, double temperature,
                                              int max_tokens, std::uint64_t seed) = 0;
};

// Wire protocol: POST {"prompt","n","temperature","max_tokens","seed"}
// -> {"choices":[{"text":...} x n]}. A response with the wrong choice count is
// an error; batches are all-or-nothing.
class HttpCompletionService : public CompletionService {
public:
    explicit HttpCompletionService(CompletionClient client);
    std::vector<std::string> complete(const std::string& prompt, int n, double temperature, int max_tokens,
                                      std::uint64_t seed) override;

private:
    CompletionClient client_;
};

// Test double for an agent of the given skill: each sample carries the gold
// answer with probability `skill`, otherwise a seeded wrong answer that never
// equals gold. Weaker agents ramble: they prefix filler tokens before the
// answer and occasionally append a trailing line, both of which leave
// correctness intact but mark the sample as sloppy for the reward stub.
// Output is byte-stable given (style_seed, request seed, prompt, index).
class MockCompletionService : public CompletionService {
public:
    MockCompletionService(AgentSpec spec, std::vector<PromptRecord> prompts, AnswerFormat format);
    std::vector<std::string> complete(const std::string& prompt, int n, double temperature, int max_tokens,
                                      std::uint64_t seed) override;

private:
    AgentSpec spec_;
    std::vector<PromptRecord> prompts_;
    AnswerFormat format_;
};

std::unique_ptr<CompletionService> make_completion_service(const AgentSpec& spec,
                                                           const std::vector<PromptRecord>& prompts,
                                                           const AnswerFormat& format,
                                                           const CompletionClient& client_defaults);

// Exactly plan.n_samples texts for one (agent, prompt), retrying transport
// failures; the request prompt is the instruction template rendered around the
// question. Errors name the agent, prompt and attempt count.
std::vector<std::string> sample_responses(const AgentId& agent, const PromptRecord& prompt,
                                          const SamplingPlan& plan, CompletionService& service,
                                          const std::string& prompt_template, int retries);

// Samples and grades every (agent, prompt) cell. Cells may run concurrently
// (bounded by max_in_flight); the result is ordered by
// (prompt_id, agent.index, sample_index) regardless of completion order.
std::vector<GradedSample> generate_graded_samples(const std::vector<AgentSpec>& agents,
                                                  const std::vector<PromptRecord>& prompts,
                                                  const SamplingPlan& plan, const AnswerFormat& format,
                                                  const std::string& prompt_template,
                                                  const CompletionClient& client_defaults);

// MARSPO_AGENT_<INDEX>_ENDPOINT / MARSPO_AGENT_<INDEX>_TOKEN overrides.
std::string agent_endpoint_from_env(int agent_index);
std::string agent_token_from_env(int agent_index);

}  // namespace marspo
