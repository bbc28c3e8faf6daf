#include "marspo/reward.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "marspo/rng.hpp"

namespace marspo {

namespace {

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) throw std::runtime_error("endpoint missing scheme: " + endpoint);
    const auto path_at = endpoint.find('/', scheme_end + 3);
    if (path_at == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_at), endpoint.substr(path_at)};
}

std::string sample_coords(const GradedSample& s) {
    return "prompt " + s.prompt_id + ", agent " + std::to_string(s.agent.index) + ", sample " +
           std::to_string(s.sample_index);
}

}  // namespace

HttpRewardService::HttpRewardService(RewardClient client) : client_(std::move(client)) {
    if (client_.endpoint.empty()) throw std::runtime_error("reward endpoint not configured");
    if (client_.max_in_flight < 1) throw std::runtime_error("max_in_flight must be >= 1");
}

double HttpRewardService::score(const std::string& prompt, const std::string& response) {
    const auto [base, path] = split_endpoint(client_.endpoint);
    httplib::Client cli(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(client_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(client_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!client_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + client_.auth_token);

    nlohmann::ordered_json body;
    body["prompt"] = prompt;
    body["response"] = response;
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw std::runtime_error("transport failure talking to " + client_.endpoint + ": " +
                                 httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw std::runtime_error("reward endpoint returned status " + std::to_string(res->status));
    }
    const auto parsed = nlohmann::json::parse(res->body);
    const double s = parsed.at("score").get<double>();
    if (!std::isfinite(s)) throw std::runtime_error("reward endpoint returned a non-finite score");
    return s;
}

PoolStats length_pool_stats(const std::vector<const GradedSample*>& positives) {
    PoolStats st;
    if (positives.empty()) return st;
    double sum = 0.0;
    for (const auto* s : positives) sum += static_cast<double>(s->token_count);
    st.mean = sum / static_cast<double>(positives.size());
    double var = 0.0;
    for (const auto* s : positives) {
        const double d = static_cast<double>(s->token_count) - st.mean;
        var += d * d;
    }
    st.stddev = std::sqrt(var / static_cast<double>(positives.size()));
    return st;
}

double stub_score(const GradedSample& sample, const PoolStats& stats, const StubWeights& weights,
                  const AnswerFormat& format) {
    const double z = stats.stddev > 0.0
                         ? (static_cast<double>(sample.token_count) - stats.mean) / stats.stddev
                         : 0.0;
    const double compliance = final_line_compliant(sample.cot, format) ? 1.0 : 0.0;
    const std::uint64_t h = mix64(mix64(weights.seed, fnv1a64(sample.prompt_id)),
                                  mix64(static_cast<std::uint64_t>(sample.agent.index),
                                        static_cast<std::uint64_t>(sample.sample_index)));
    const double jitter = static_cast<double>(h >> 11) * 0x1.0p-53;
    return weights.w_length * (-z) + weights.w_format * compliance + weights.w_jitter * jitter;
}

double score_sample(RewardService& service, const PromptRecord& prompt, const GradedSample& sample) {
    if (!sample.correct) {
        throw std::runtime_error("score_sample precondition violated: " + sample_coords(sample) +
                                 " is not a correct sample");
    }
    try {
        return service.score(prompt.question, sample.cot);
    } catch (const std::exception& e) {
        throw std::runtime_error("reward scoring failed for " + sample_coords(sample) + ": " + e.what());
    }
}

void score_samples_stub(std::vector<GradedSample>& samples, const StubWeights& weights,
                        const AnswerFormat& format) {
    // Group positives per prompt; the z-score is relative to that pool.
    std::map<std::string, std::vector<const GradedSample*>> pools;
    for (const auto& s : samples) {
        if (s.correct) pools[s.prompt_id].push_back(&s);
    }
    std::map<std::string, PoolStats> stats;
    for (const auto& [pid, pool] : pools) stats[pid] = length_pool_stats(pool);
    for (auto& s : samples) {
        if (s.correct) {
            s.reward = stub_score(s, stats[s.prompt_id], weights, format);
        } else {
            s.reward.reset();
        }
    }
}

void score_samples_live(std::vector<GradedSample>& samples, const std::vector<PromptRecord>& prompts,
                        RewardService& service, int max_in_flight) {
    std::unordered_map<std::string, const PromptRecord*> by_id;
    for (const auto& p : prompts) by_id[p.id] = &p;

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].correct) {
            todo.push_back(i);
        } else {
            samples[i].reward.reset();
        }
    }

    std::vector<double> scores(todo.size(), 0.0);
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto worker = [&] {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= todo.size() || first_error) return;
            try {
                const GradedSample& s = samples[todo[k]];
                auto it = by_id.find(s.prompt_id);
                if (it == by_id.end()) {
                    throw std::runtime_error("no prompt record for " + sample_coords(s));
                }
                scores[k] = score_sample(service, *it->second, s);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_threads = std::max<std::size_t>(
        1, std::min<std::size_t>(static_cast<std::size_t>(max_in_flight), todo.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);

    for (std::size_t k = 0; k < todo.size(); ++k) samples[todo[k]].reward = scores[k];
}

std::string reward_endpoint_from_env() {
    const char* v = std::getenv("MARSPO_RM_ENDPOINT");
    return v ? v : "";
}

std::string reward_token_from_env() {
    const char* v = std::getenv("MARSPO_RM_TOKEN");
    return v ? v : "";
}

}  // namespace marspo
