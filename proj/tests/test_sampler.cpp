#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "marspo/grader.hpp"
#include "marspo/sampler.hpp"

using namespace marspo;

namespace {

const AnswerFormat kLine{AnswerFormatKind::LineMarker, "Answer:"};

PromptRecord prompt_record(const std::string& id, const std::string& question, const std::string& gold) {
    PromptRecord r;
    r.id = id;
    r.question = question;
    r.gold_answer = gold;
    r.source = DatasetSource::Synthetic;
    return r;
}

AgentSpec mock_spec(int index, double skill, std::uint64_t style_seed) {
    AgentSpec s;
    s.id = {index, "mock" + std::to_string(index)};
    s.kind = AgentKind::Mock;
    s.skill = skill;
    s.style_seed = style_seed;
    return s;
}

struct TestServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit TestServer() = default;
    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
};

}  // namespace

TEST_CASE("plan_for_iteration follows the published schedule") {
    const PlanDefaults defaults;
    const auto p1 = plan_for_iteration(1, DatasetSource::Gsm8kStyle, defaults, 1);
    CHECK(p1.n_samples == 40);
    CHECK(p1.temperature == doctest::Approx(0.8));

    const auto p2 = plan_for_iteration(2, DatasetSource::MathStyle, defaults, 1);
    CHECK(p2.n_samples == 30);
    CHECK(p2.temperature == doctest::Approx(1.2));

    const auto p3 = plan_for_iteration(3, DatasetSource::Gsm8kStyle, defaults, 1);
    CHECK(p3.n_samples == 40);
    CHECK(p3.temperature == doctest::Approx(1.2));

    PlanDefaults custom;
    custom.n_synthetic = 9;
    CHECK(plan_for_iteration(1, DatasetSource::Synthetic, custom, 1).n_samples == 9);
    CHECK_THROWS(plan_for_iteration(0, DatasetSource::Synthetic, defaults, 1));
}

TEST_CASE("mock agent is deterministic and respects skill boundaries") {
    const auto prompt = prompt_record("p1", "what is 6 times 7", "42");
    const std::vector<PromptRecord> prompts{prompt};

    MockCompletionService perfect(mock_spec(1, 1.0, 5), prompts, kLine);
    MockCompletionService hopeless(mock_spec(2, 0.0, 5), prompts, kLine);

    const auto gold = normalize(prompt.gold_answer);
    auto texts = perfect.complete(prompt.question, 20, 0.8, 256, 99);
    REQUIRE(texts.size() == 20);
    for (const auto& t : texts) CHECK(grade(t, gold, kLine).correct);

    auto texts2 = perfect.complete(prompt.question, 20, 0.8, 256, 99);
    CHECK(texts == texts2);  // byte-identical on repeat

    for (const auto& t : hopeless.complete(prompt.question, 20, 0.8, 256, 99)) {
        CHECK_FALSE(grade(t, gold, kLine).correct);
    }
}

TEST_CASE("mock skill 0.7 lands inside the binomial interval") {
    const auto prompt = prompt_record("p1", "compute 5 + 8", "13");
    MockCompletionService svc(mock_spec(1, 0.7, 3), {prompt}, kLine);
    const auto gold = normalize(prompt.gold_answer);
    int correct = 0;
    const auto texts = svc.complete(prompt.question, 1000, 0.8, 256, 4);
    for (const auto& t : texts) {
        if (grade(t, gold, kLine).correct) ++correct;
    }
    const double rate = correct / 1000.0;
    CHECK(rate >= 0.66);
    CHECK(rate <= 0.74);
}

TEST_CASE("mock wrong answers never equal gold") {
    const auto numeric = prompt_record("p1", "q", "42");
    const auto fraction = prompt_record("p2", "q2", "3/4");
    const auto symbolic = prompt_record("p3", "q3", "x+1");
    AgentSpec spec = mock_spec(1, 0.0, 11);
    spec.wrong_answer_modulus = 97;

    for (const auto& p : {numeric, fraction, symbolic}) {
        MockCompletionService svc(spec, {p}, kLine);
        const auto gold = normalize(p.gold_answer);
        for (const auto& t : svc.complete(p.question, 200, 1.2, 256, 9)) {
            const auto extracted = extract_answer(t, kLine);
            REQUIRE(extracted.has_value());
            CHECK_FALSE(answers_equal(*extracted, gold));
        }
    }
}

TEST_CASE("mock rejects out-of-range skill") {
    CHECK_THROWS(MockCompletionService(mock_spec(1, 1.5, 0), {}, kLine));
}

TEST_CASE("sample_responses returns exactly N deterministic texts") {
    const auto prompt = prompt_record("p1", "compute 1 + 2", "3");
    MockCompletionService svc(mock_spec(1, 0.5, 21), {prompt}, kLine);
    SamplingPlan plan{3, 0.8, 128, 777};
    const auto a = sample_responses({1, "m"}, prompt, plan, svc, "{question}", 2);
    const auto b = sample_responses({1, "m"}, prompt, plan, svc, "{question}", 2);
    REQUIRE(a.size() == 3);
    CHECK(a == b);

    SamplingPlan plan40{40, 0.8, 128, 777};
    CHECK(sample_responses({1, "m"}, prompt, plan40, svc, "{question}", 2).size() == 40);
}

TEST_CASE("transport failures retry and then error with attempt count") {
    CompletionClient client;
    client.endpoint = "http://127.0.0.1:1/dead";  // nothing listens here
    client.timeout = std::chrono::milliseconds(200);
    HttpCompletionService svc(client);
    const auto prompt = prompt_record("p1", "q", "1");
    SamplingPlan plan{2, 0.8, 64, 5};
    CHECK_THROWS_WITH_AS(sample_responses({1, "alpha"}, prompt, plan, svc, "{question}", 2),
                         doctest::Contains("after 3 attempts"), std::runtime_error);
}

TEST_CASE("http completion round-trips the wire protocol") {
    TestServer ts;
    std::atomic<int> hits{0};
    nlohmann::json last_request;
    std::mutex req_mutex;
    ts.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auto body = nlohmann::json::parse(req.body);
        {
            std::lock_guard<std::mutex> lock(req_mutex);
            last_request = body;
        }
        nlohmann::json out;
        out["choices"] = nlohmann::json::array();
        for (int i = 0; i < body["n"].get<int>(); ++i) {
            out["choices"].push_back({{"text", "resp " + std::to_string(i) + " Answer: 3"}});
        }
        res.set_content(out.dump(), "application/json");
    });
    ts.start();

    CompletionClient client;
    client.endpoint = "http://127.0.0.1:" + std::to_string(ts.port) + "/v1/completions";
    HttpCompletionService svc(client);

    const auto prompt = prompt_record("p1", "compute 1 + 2", "3");
    SamplingPlan plan{4, 1.2, 256, 31337};
    const auto texts = sample_responses({1, "remote"}, prompt, plan, svc, "solve: {question}\nend with Answer:", 1);
    REQUIRE(texts.size() == 4);
    CHECK(hits == 1);
    {
        std::lock_guard<std::mutex> lock(req_mutex);
        const std::string sent_prompt = last_request.at("prompt").get<std::string>();
        CHECK(sent_prompt.find("compute 1 + 2") != std::string::npos);   // question embedded
        CHECK(sent_prompt.find("solve:") != std::string::npos);          // template applied
        CHECK(last_request.at("n").get<int>() == 4);
        CHECK(last_request.at("temperature").get<double>() == doctest::Approx(1.2));
        CHECK(last_request.at("max_tokens").get<int>() == 256);
        CHECK(last_request.contains("seed"));
    }
}

TEST_CASE("partial batches are an error, not a retry") {
    TestServer ts;
    std::atomic<int> hits{0};
    ts.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["choices"] = nlohmann::json::array();
        for (int i = 0; i < body["n"].get<int>() - 1; ++i) out["choices"].push_back({{"text", "x"}});
        res.set_content(out.dump(), "application/json");
    });
    ts.start();

    CompletionClient client;
    client.endpoint = "http://127.0.0.1:" + std::to_string(ts.port) + "/v1/completions";
    HttpCompletionService svc(client);
    const auto prompt = prompt_record("p1", "q", "1");
    SamplingPlan plan{5, 0.8, 64, 1};
    CHECK_THROWS_WITH_AS(sample_responses({1, "remote"}, prompt, plan, svc, "{question}", 3),
                         doctest::Contains("choices"), std::runtime_error);
    CHECK(hits == 1);
}

TEST_CASE("transient failures recover within the retry budget") {
    TestServer ts;
    std::atomic<int> hits{0};
    ts.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++hits;
        if (n <= 2) {
            res.status = 500;
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["choices"] = nlohmann::json::array();
        for (int i = 0; i < body["n"].get<int>(); ++i) out["choices"].push_back({{"text", "ok"}});
        res.set_content(out.dump(), "application/json");
    });
    ts.start();

    CompletionClient client;
    client.endpoint = "http://127.0.0.1:" + std::to_string(ts.port) + "/v1/completions";
    HttpCompletionService svc(client);
    const auto prompt = prompt_record("p1", "q", "1");
    SamplingPlan plan{2, 0.8, 64, 1};
    const auto texts = sample_responses({1, "remote"}, prompt, plan, svc, "{question}", 2);
    CHECK(texts.size() == 2);
    CHECK(hits == 3);
}

TEST_CASE("generate_graded_samples orders cells deterministically under concurrency") {
    std::vector<PromptRecord> prompts;
    for (int i = 0; i < 6; ++i) {
        const int a = i * 3 % 7, b = i * 5 % 11;
        prompts.push_back(prompt_record("p" + std::to_string(i), "add " + std::to_string(a) + " and " + std::to_string(b),
                                        std::to_string(a + b)));
    }
    const std::vector<AgentSpec> agents{mock_spec(1, 0.8, 1), mock_spec(2, 0.4, 2)};
    SamplingPlan plan{5, 0.8, 128, 42};

    CompletionClient serial;
    serial.max_in_flight = 1;
    CompletionClient parallel;
    parallel.max_in_flight = 4;

    const auto a = generate_graded_samples(agents, prompts, plan, kLine, "{question}", serial);
    const auto b = generate_graded_samples(agents, prompts, plan, kLine, "{question}", parallel);
    CHECK(a == b);
    REQUIRE(a.size() == prompts.size() * agents.size() * 5);

    // sorted by (prompt_id, agent index, sample index)
    for (std::size_t i = 1; i < a.size(); ++i) {
        const auto key = [](const GradedSample& s) {
            return std::make_tuple(s.prompt_id, s.agent.index, s.sample_index);
        };
        CHECK(key(a[i - 1]) < key(a[i]));
    }
    // correctness bit matches the grader on the stored text
    for (const auto& s : a) {
        const auto& prompt = *std::find_if(prompts.begin(), prompts.end(),
                                           [&](const PromptRecord& p) { return p.id == s.prompt_id; });
        CHECK(s.correct == grade(s.cot, normalize(prompt.gold_answer), kLine).correct);
        CHECK(s.token_count == count_tokens(s.cot));
        if (s.correct) CHECK(s.answer.has_value());
    }
}
