#include "marspo/sampler.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "marspo/rng.hpp"
#include "marspo/vocab.hpp"

namespace marspo {

namespace {

// Protocol violations (wrong choice count, unknown prompt) are not retried;
// transport failures are.
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const char* kFillers[] = {"hmm", "uh", "so", "well", "then"};

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading '/', default "/"
};

SplitUrl split_url(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) throw std::runtime_error("endpoint missing scheme: " + endpoint);
    const auto path_at = endpoint.find('/', scheme_end + 3);
    if (path_at == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_at), endpoint.substr(path_at)};
}

}  // namespace

SamplingPlan plan_for_iteration(int iteration, DatasetSource source, const PlanDefaults& defaults,
                                std::uint64_t seed) {
    if (iteration < 1) throw std::runtime_error("iteration must be >= 1");
    SamplingPlan plan;
    switch (source) {
        case DatasetSource::Gsm8kStyle: plan.n_samples = defaults.n_gsm8k; break;
        case DatasetSource::MathStyle: plan.n_samples = defaults.n_math; break;
        case DatasetSource::Synthetic: plan.n_samples = defaults.n_synthetic; break;
    }
    if (iteration == 1) {
        plan.temperature = defaults.temperature_iter1;
    } else if (iteration == 2) {
        plan.temperature = defaults.temperature_iter2;
    } else {
        plan.temperature = defaults.temperature_iter3;
    }
    plan.max_tokens = defaults.max_tokens;
    plan.seed = seed;
    return plan;
}

HttpCompletionService::HttpCompletionService(CompletionClient client) : client_(std::move(client)) {
    if (client_.endpoint.empty()) throw std::runtime_error("completion endpoint not configured");
    if (client_.max_in_flight < 1) throw std::runtime_error("max_in_flight must be >= 1");
}

std::vector<std::string> HttpCompletionService::complete(const std::string& prompt, int n, double temperature,
                                                         int max_tokens, std::uint64_t seed) {
    const SplitUrl url = split_url(client_.endpoint);
    httplib::Client cli(url.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(client_.timeout);
    const auto usecs_rem = std::chrono::duration_cast<std::chrono::microseconds>(client_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs_rem.count());
    cli.set_read_timeout(secs.count(), usecs_rem.count());
    cli.set_write_timeout(secs.count(), usecs_rem.count());

    httplib::Headers headers;
    if (!client_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + client_.auth_token);

    nlohmann::ordered_json body;
    body["prompt"] = prompt;
    body["n"] = n;
    body["temperature"] = temperature;
    body["max_tokens"] = max_tokens;
    body["seed"] = seed;

    auto res = cli.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        throw std::runtime_error("transport failure talking to " + client_.endpoint + ": " +
                                 httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw std::runtime_error("completion endpoint returned status " + std::to_string(res->status));
    }
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("unparseable completion response: ") + e.what());
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
        parsed["choices"].size() != static_cast<std::size_t>(n)) {
        throw ProtocolError("completion response did not contain exactly " + std::to_string(n) + " choices");
    }
    std::vector<std::string> texts;
    texts.reserve(static_cast<std::size_t>(n));
    for (const auto& c : parsed["choices"]) texts.push_back(c.at("text").get<std::string>());
    return texts;
}

MockCompletionService::MockCompletionService(AgentSpec spec, std::vector<PromptRecord> prompts,
                                             AnswerFormat format)
    : spec_(std::move(spec)), prompts_(std::move(prompts)), format_(std::move(format)) {
    if (spec_.skill < 0.0 || spec_.skill > 1.0) {
        throw std::runtime_error("mock agent skill must lie in [0,1]");
    }
}

std::vector<std::string> MockCompletionService::complete(const std::string& prompt, int n, double temperature,
                                                         int /*max_tokens*/, std::uint64_t seed) {
    const PromptRecord* record = nullptr;
    for (const auto& r : prompts_) {
        if (prompt.find(r.question) != std::string::npos) {
            record = &r;
            break;
        }
    }
    if (!record) throw ProtocolError("mock agent " + spec_.id.name + ": prompt does not match any known question");

    const CanonicalAnswer gold = normalize(record->gold_answer);

    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        SplitMix64 rng(mix64(mix64(spec_.style_seed, seed), mix64(fnv1a64(record->id), static_cast<std::uint64_t>(i))));
        const bool correct = rng.next_double() < spec_.skill;

        std::string answer = record->gold_answer;
        if (!correct) {
            bool done = false;
            if (spec_.wrong_answer_modulus && gold.numeric_value &&
                boost::multiprecision::denominator(*gold.numeric_value) == 1) {
                const auto m = *spec_.wrong_answer_modulus;
                const auto num = boost::multiprecision::numerator(*gold.numeric_value);
                if (m >= 2 && num >= 0 && num < m) {
                    const std::int64_t g = num.convert_to<std::int64_t>();
                    const std::int64_t delta = 1 + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(m - 1)));
                    answer = std::to_string((g + delta) % m);
                    done = true;
                }
            }
            if (!done && gold.numeric_value) {
                const std::int64_t delta = 1 + static_cast<std::int64_t>(rng.next_below(9));
                Rational wrong = *gold.numeric_value + delta;
                const auto num = boost::multiprecision::numerator(wrong);
                const auto den = boost::multiprecision::denominator(wrong);
                answer = num.str();
                if (den != 1) answer += "/" + den.str();
                done = true;
            }
            if (!done) {
                answer = record->gold_answer + " oops" + std::to_string(rng.next_below(10));
            }
        }

        // Sloppy style: weaker agents ramble before the answer more often, and
        // high-temperature iterations make it worse.
        const double junk_p =
            std::min(0.9, (1.0 - spec_.skill) * 0.75 * (temperature >= 1.0 ? 1.2 : 1.0));
        const double trail_p = 0.25 * (1.0 - spec_.skill) + 0.05;

        std::string text;
        if (rng.next_double() < junk_p) {
            const int k = 1 + static_cast<int>(rng.next_below(2));
            for (int j = 0; j < k; ++j) {
                text += kFillers[rng.next_below(5)];
                text += ' ';
            }
        }
        text += answer;
        if (format_.kind == AnswerFormatKind::BoxedMarker) {
            text += " " + format_.pattern + "{" + answer + "}";
        } else if (format_.kind == AnswerFormatKind::LineMarker) {
            text += " " + format_.pattern + " " + answer;
        } else {
            text += " Answer: " + answer;
        }
        if (rng.next_double() < trail_p) {
            text += "\n";
            text += kFillers[rng.next_below(5)];
        }
        out.push_back(std::move(text));
    }
    return out;
}

std::string agent_endpoint_from_env(int agent_index) {
    const std::string key = "MARSPO_AGENT_" + std::to_string(agent_index) + "_ENDPOINT";
    const char* v = std::getenv(key.c_str());
    return v ? v : "";
}

std::string agent_token_from_env(int agent_index) {
    const std::string key = "MARSPO_AGENT_" + std::to_string(agent_index) + "_TOKEN";
    const char* v = std::getenv(key.c_str());
    return v ? v : "";
}

std::unique_ptr<CompletionService> make_completion_service(const AgentSpec& spec,
                                                           const std::vector<PromptRecord>& prompts,
                                                           const AnswerFormat& format,
                                                           const CompletionClient& client_defaults) {
    if (spec.kind == AgentKind::Mock) {
        return std::make_unique<MockCompletionService>(spec, prompts, format);
    }
    CompletionClient client = client_defaults;
    const std::string env_endpoint = agent_endpoint_from_env(spec.id.index);
    client.endpoint = env_endpoint.empty() ? spec.endpoint : env_endpoint;
    const std::string env_token = agent_token_from_env(spec.id.index);
    if (!env_token.empty()) client.auth_token = env_token;
    return std::make_unique<HttpCompletionService>(std::move(client));
}

std::vector<std::string> sample_responses(const AgentId& agent, const PromptRecord& prompt,
                                          const SamplingPlan& plan, CompletionService& service,
                                          const std::string& prompt_template, int retries) {
    if (plan.n_samples < 1) throw std::runtime_error("sampling plan must request at least one sample");
    const std::string rendered = render_prompt(prompt_template, prompt.question);
    const std::uint64_t request_seed = mix64(plan.seed, mix64(fnv1a64(prompt.id), static_cast<std::uint64_t>(agent.index)));

    const int attempts = retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        try {
            auto texts = service.complete(rendered, plan.n_samples, plan.temperature, plan.max_tokens, request_seed);
            if (texts.size() != static_cast<std::size_t>(plan.n_samples)) {
                throw ProtocolError("received " + std::to_string(texts.size()) + " of " +
                                    std::to_string(plan.n_samples) + " samples");
            }
            return texts;
        } catch (const ProtocolError&) {
            throw;  // all-or-nothing; malformed batches are not retried
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    throw std::runtime_error("sampling failed for agent " + agent.name + " (index " +
                             std::to_string(agent.index) + "), prompt " + prompt.id + " after " +
                             std::to_string(attempts) + " attempts: " + last_error);
}

std::vector<GradedSample> generate_graded_samples(const std::vector<AgentSpec>& agents,
                                                  const std::vector<PromptRecord>& prompts,
                                                  const SamplingPlan& plan, const AnswerFormat& format,
                                                  const std::string& prompt_template,
                                                  const CompletionClient& client_defaults) {
    struct Cell {
        const AgentSpec* agent;
        const PromptRecord* prompt;
    };
    std::vector<Cell> cells;
    std::vector<std::unique_ptr<CompletionService>> services;
    services.reserve(agents.size());
    for (const auto& a : agents) services.push_back(make_completion_service(a, prompts, format, client_defaults));
    for (std::size_t ai = 0; ai < agents.size(); ++ai) {
        for (const auto& p : prompts) cells.push_back(Cell{&agents[ai], &p});
    }

    std::vector<std::vector<GradedSample>> per_cell(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto worker = [&](std::size_t service_stride) {
        (void)service_stride;
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            if (first_error) return;
            try {
                const Cell& cell = cells[i];
                CompletionService& svc = *services[static_cast<std::size_t>(
                    std::distance(agents.data(), cell.agent))];
                const auto texts =
                    sample_responses(cell.agent->id, *cell.prompt, plan, svc, prompt_template,
                                     client_defaults.retries);
                const CanonicalAnswer gold = normalize(cell.prompt->gold_answer);
                std::vector<GradedSample> graded;
                graded.reserve(texts.size());
                for (std::size_t s = 0; s < texts.size(); ++s) {
                    GradedSample gs;
                    gs.prompt_id = cell.prompt->id;
                    gs.agent = cell.agent->id;
                    gs.sample_index = static_cast<int>(s) + 1;
                    gs.cot = texts[s];
                    const GradeResult res = grade(texts[s], gold, format);
                    gs.correct = res.correct;
                    if (res.answer) {
                        gs.answer_raw = res.answer->raw;
                        gs.answer = res.answer->canonical;
                    }
                    gs.token_count = count_tokens(texts[s]);
                    graded.push_back(std::move(gs));
                }
                per_cell[i] = std::move(graded);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(client_defaults.max_in_flight),
                                                       cells.size()));
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker, t);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::vector<GradedSample> all;
    for (auto& v : per_cell) {
        all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    }
    std::sort(all.begin(), all.end(), [](const GradedSample& a, const GradedSample& b) {
        if (a.prompt_id != b.prompt_id) return a.prompt_id < b.prompt_id;
        if (a.agent.index != b.agent.index) return a.agent.index < b.agent.index;
        return a.sample_index < b.sample_index;
    });
    return all;
}

}  // namespace marspo
