#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <thread>

#include "marspo/reward.hpp"

using namespace marspo;

namespace {

const AnswerFormat kLine{AnswerFormatKind::LineMarker, "Answer:"};

GradedSample sample_with(const std::string& prompt_id, int agent, int index, const std::string& text,
                         bool correct) {
    GradedSample s;
    s.prompt_id = prompt_id;
    s.agent = {agent, "a" + std::to_string(agent)};
    s.sample_index = index;
    s.cot = text;
    s.correct = correct;
    if (correct) s.answer = "42";
    s.token_count = count_tokens(text);
    return s;
}

}  // namespace

TEST_CASE("stub scores are deterministic and orderable") {
    StubWeights w;
    PoolStats stats{10.0, 2.0};
    const auto s = sample_with("p1", 1, 3, "42 Answer: 42", true);
    const double a = stub_score(s, stats, w, kLine);
    const double b = stub_score(s, stats, w, kLine);
    CHECK(a == b);
    CHECK(std::isfinite(a));
}

TEST_CASE("format compliance moves the score by exactly w_format") {
    StubWeights w;
    w.w_length = 0.5;
    w.w_format = 0.4;
    w.w_jitter = 0.0;  // zero jitter isolates the compliance term
    PoolStats stats{4.0, 1.0};

    auto compliant = sample_with("p1", 1, 1, "42 Answer: 42", true);
    auto sloppy = sample_with("p1", 1, 1, "42 Answer: 42\nso", true);
    sloppy.token_count = compliant.token_count;  // same length by construction

    const double diff = stub_score(compliant, stats, w, kLine) - stub_score(sloppy, stats, w, kLine);
    CHECK(diff == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("pool z-scores sum to zero") {
    StubWeights w;
    w.w_length = 1.0;
    w.w_format = 0.0;
    w.w_jitter = 0.0;

    std::vector<GradedSample> samples;
    const int lengths[] = {3, 5, 8, 13, 21};
    for (int i = 0; i < 5; ++i) {
        auto s = sample_with("p1", 1, i + 1, "42 Answer: 42", true);
        s.token_count = lengths[i];
        samples.push_back(s);
    }
    // independent recomputation of the pool statistics
    double mean = 0.0;
    for (const int l : lengths) mean += l;
    mean /= 5.0;
    double var = 0.0;
    for (const int l : lengths) var += (l - mean) * (l - mean);
    const double stddev = std::sqrt(var / 5.0);

    std::vector<const GradedSample*> pool;
    for (const auto& s : samples) pool.push_back(&s);
    const PoolStats stats = length_pool_stats(pool);
    CHECK(stats.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(stats.stddev == doctest::Approx(stddev).epsilon(1e-12));

    double z_sum = 0.0;
    for (const auto& s : samples) z_sum += stub_score(s, stats, w, kLine);
    CHECK(std::abs(z_sum) < 1e-9);
}

TEST_CASE("uniform pools have zero stddev and zero z-scores") {
    std::vector<GradedSample> samples;
    for (int i = 0; i < 4; ++i) samples.push_back(sample_with("p1", 1, i + 1, "42 Answer: 42", true));
    std::vector<const GradedSample*> pool;
    for (const auto& s : samples) pool.push_back(&s);
    const PoolStats stats = length_pool_stats(pool);
    CHECK(stats.stddev == 0.0);
    StubWeights w;
    w.w_format = 0.0;
    w.w_jitter = 0.0;
    CHECK(stub_score(samples[0], stats, w, kLine) == 0.0);
}

TEST_CASE("score_samples_stub rewards exactly the correct samples") {
    std::vector<GradedSample> samples;
    samples.push_back(sample_with("p1", 1, 1, "42 Answer: 42", true));
    samples.push_back(sample_with("p1", 1, 2, "took a while 41 Answer: 41", false));
    samples.push_back(sample_with("p1", 2, 1, "42 Answer: 42\nso", true));
    samples.push_back(sample_with("p2", 1, 1, "7 Answer: 7", true));
    StubWeights w;
    score_samples_stub(samples, w, kLine);
    for (const auto& s : samples) {
        CHECK(s.reward.has_value() == s.correct);
        if (s.reward) CHECK(std::isfinite(*s.reward));
    }
    // repeat runs give identical rewards
    auto again = samples;
    score_samples_stub(again, w, kLine);
    CHECK(again == samples);
}

TEST_CASE("score_sample enforces the positives-only precondition") {
    struct NullService : RewardService {
        double score(const std::string&, const std::string&) override { return 1.0; }
    } svc;
    PromptRecord prompt;
    prompt.id = "p1";
    prompt.question = "q";
    prompt.gold_answer = "42";

    const auto bad = sample_with("p1", 2, 7, "41 Answer: 41", false);
    CHECK_THROWS_WITH_AS(score_sample(svc, prompt, bad), doctest::Contains("precondition"), std::runtime_error);
    const auto good = sample_with("p1", 2, 7, "42 Answer: 42", true);
    CHECK(score_sample(svc, prompt, good) == 1.0);
}

TEST_CASE("live scoring round-trips the wire protocol and names failures") {
    httplib::Server server;
    server.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const double score = static_cast<double>(body.at("response").get<std::string>().size());
        res.set_content(nlohmann::json{{"score", score}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RewardClient rc;
    rc.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/score";
    HttpRewardService svc(rc);

    std::vector<PromptRecord> prompts(1);
    prompts[0].id = "p1";
    prompts[0].question = "q";
    prompts[0].gold_answer = "42";

    std::vector<GradedSample> samples;
    samples.push_back(sample_with("p1", 1, 1, "42 Answer: 42", true));
    samples.push_back(sample_with("p1", 1, 2, "41 Answer: 41", false));
    score_samples_live(samples, prompts, svc, 2);
    REQUIRE(samples[0].reward.has_value());
    CHECK(*samples[0].reward == doctest::Approx(static_cast<double>(samples[0].cot.size())));
    CHECK_FALSE(samples[1].reward.has_value());

    server.stop();
    t.join();

    // dead endpoint errors carry the sample coordinates
    RewardClient dead;
    dead.endpoint = "http://127.0.0.1:1/score";
    dead.timeout = std::chrono::milliseconds(200);
    HttpRewardService dead_svc(dead);
    auto good = sample_with("p9", 3, 4, "42 Answer: 42", true);
    CHECK_THROWS_WITH_AS(score_sample(dead_svc, prompts[0], good), doctest::Contains("prompt p9, agent 3, sample 4"),
                         std::runtime_error);
}
