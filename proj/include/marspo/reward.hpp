#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "marspo/grader.hpp"
#include "marspo/records.hpp"

namespace marspo {

struct RewardClient {
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
    int max_in_flight = 4;
    std::string auth_token;
};

// Wire protocol: POST {"prompt","response"} -> {"score": real}.
class RewardService {
public:
    virtual ~RewardService() = default;
    virtual double score(const std::string& prompt, const std::string& response) = 0;
};

class HttpRewardService : public RewardService {
public:
    explicit HttpRewardService(RewardClient client);
    double score(const std::string& prompt, const std::string& response) override;

private:
    RewardClient client_;
};

// Deterministic desk-scale scorer. Not a semantic judge: it prefers concise
// responses (negated token-length z-score within the prompt's positive pool),
// clean final-answer formatting, and breaks ties with seeded hash jitter.
struct StubWeights {
    double w_length = 0.5;
    double w_format = 0.4;
    double w_jitter = 0.1;
    std::uint64_t seed = 0;
};

// Pool statistics for the z-score term: the positive pool of one prompt
// across all agents.
struct PoolStats {
    double mean = 0.0;
    double stddev = 0.0;  // population; 0 when the pool is uniform
};

PoolStats length_pool_stats(const std::vector<const GradedSample*>& positives);

double stub_score(const GradedSample& sample, const PoolStats& stats, const StubWeights& weights,
                  const AnswerFormat& format);

// Scores one correct sample through a live service. Calling it on an
// incorrect sample is a precondition error.
double score_sample(RewardService& service, const PromptRecord& prompt, const GradedSample& sample);

// Attaches rewards to every correct sample in place. Incorrect samples never
// carry a reward. Stub scoring is a pure function of (samples, weights,
// format); live scoring runs bounded-concurrent requests but assigns results
// in deterministic order.
void score_samples_stub(std::vector<GradedSample>& samples, const StubWeights& weights,
                        const AnswerFormat& format);
void score_samples_live(std::vector<GradedSample>& samples, const std::vector<PromptRecord>& prompts,
                        RewardService& service, int max_in_flight);

// MARSPO_RM_ENDPOINT / MARSPO_RM_TOKEN.
std::string reward_endpoint_from_env();
std::string reward_token_from_env();

}  // namespace marspo
