#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "marspo/pairs.hpp"
#include "marspo/rng.hpp"

using namespace marspo;

namespace {

GradedSample gs(const std::string& prompt_id, int agent, int index, bool correct,
                std::optional<double> reward = std::nullopt, std::string text = "") {
    GradedSample s;
    s.prompt_id = prompt_id;
    s.agent = {agent, "a" + std::to_string(agent)};
    s.sample_index = index;
    s.cot = text.empty() ? "t" + std::to_string(agent) + "_" + std::to_string(index) : std::move(text);
    s.correct = correct;
    if (correct) s.answer = "42";
    s.reward = reward;
    s.token_count = count_tokens(s.cot);
    return s;
}

// Independent filter-by-bit oracle for partition().
std::pair<std::vector<int>, std::vector<int>> filter_oracle(const std::vector<GradedSample>& samples) {
    std::vector<int> win, lose;
    for (const auto& s : samples) (s.correct ? win : lose).push_back(s.sample_index);
    return {win, lose};
}

}  // namespace

TEST_CASE("partition splits by the correctness bit in order") {
    std::vector<GradedSample> samples{gs("p", 1, 1, true), gs("p", 1, 2, false), gs("p", 1, 3, true)};
    const auto part = partition(samples);
    REQUIRE(part.winners.size() == 2);
    REQUIRE(part.losers.size() == 1);
    CHECK(part.winners[0].sample_index == 1);
    CHECK(part.winners[1].sample_index == 3);
    CHECK(part.losers[0].sample_index == 2);
}

TEST_CASE("partition boundary and error cases") {
    std::vector<GradedSample> all_win{gs("p", 1, 1, true), gs("p", 1, 2, true)};
    CHECK(partition(all_win).losers.empty());

    std::vector<GradedSample> mixed{gs("p", 1, 1, true), gs("q", 1, 2, false)};
    CHECK_THROWS_WITH_AS(partition(mixed), doctest::Contains("mixed"), std::runtime_error);
    std::vector<GradedSample> mixed_agent{gs("p", 1, 1, true), gs("p", 2, 2, false)};
    CHECK_THROWS(partition(mixed_agent));
    CHECK_THROWS(partition({}));
}

TEST_CASE("partition matches the filter oracle on random instances") {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<GradedSample> samples;
        const int n = 40;
        for (int i = 1; i <= n; ++i) samples.push_back(gs("p", 1, i, rng.next_double() < 0.5));
        const auto part = partition(samples);
        const auto [win, lose] = filter_oracle(samples);
        REQUIRE(part.winners.size() + part.losers.size() == static_cast<std::size_t>(n));
        std::vector<int> got_win, got_lose;
        for (const auto& w : part.winners) got_win.push_back(w.sample_index);
        for (const auto& l : part.losers) got_lose.push_back(l.sample_index);
        CHECK(got_win == win);
        CHECK(got_lose == lose);
    }
}

TEST_CASE("distill_hybrid takes the top rewards across agents") {
    SamplePartition a;
    a.prompt_id = "p";
    a.agent = {1, "a1"};
    a.winners = {gs("p", 1, 1, true, 0.9), gs("p", 1, 2, true, 0.2)};
    SamplePartition b;
    b.prompt_id = "p";
    b.agent = {2, "a2"};
    b.winners = {gs("p", 2, 1, true, 0.7)};

    const auto hybrid = distill_hybrid({a, b}, 2);
    REQUIRE(hybrid.members.size() == 2);
    CHECK(hybrid.members[0].agent.index == 1);
    CHECK(hybrid.members[0].sample_index == 1);
    CHECK(hybrid.members[1].agent.index == 2);
    CHECK(hybrid.members[1].sample_index == 1);
}

TEST_CASE("distill_hybrid breaks reward ties by agent index") {
    SamplePartition a;
    a.prompt_id = "p";
    a.agent = {1, "a1"};
    a.winners = {gs("p", 1, 2, true, 0.7)};
    SamplePartition b;
    b.prompt_id = "p";
    b.agent = {2, "a2"};
    b.winners = {gs("p", 2, 1, true, 0.7)};
    const auto hybrid = distill_hybrid({a, b}, 1);
    REQUIRE(hybrid.members.size() == 1);
    CHECK(hybrid.members[0].agent.index == 1);
    CHECK(hybrid.members[0].sample_index == 2);
}

TEST_CASE("distill_hybrid rejects unscored positives by name") {
    SamplePartition a;
    a.prompt_id = "p";
    a.agent = {1, "a1"};
    a.winners = {gs("p", 1, 3, true)};  // no reward
    CHECK_THROWS_WITH_AS(distill_hybrid({a}, 2), doctest::Contains("agent 1, sample 3"), std::runtime_error);
}

TEST_CASE("distill_hybrid equals the sort-then-truncate oracle with dominance") {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<SamplePartition> parts;
        std::vector<GradedSample> pool;
        const int agents = 1 + static_cast<int>(rng.next_below(4));
        for (int a = 1; a <= agents; ++a) {
            SamplePartition part;
            part.prompt_id = "p";
            part.agent = {a, "a"};
            const int wins = static_cast<int>(rng.next_below(6));
            for (int i = 1; i <= wins; ++i) {
                auto s = gs("p", a, i, true, rng.next_double());
                part.winners.push_back(s);
                pool.push_back(s);
            }
            parts.push_back(std::move(part));
        }
        const int m = 1 + static_cast<int>(rng.next_below(5));
        const auto hybrid = distill_hybrid(parts, m);

        auto oracle = pool;
        std::sort(oracle.begin(), oracle.end(), [](const GradedSample& x, const GradedSample& y) {
            if (*x.reward != *y.reward) return *x.reward > *y.reward;
            if (x.agent.index != y.agent.index) return x.agent.index < y.agent.index;
            return x.sample_index < y.sample_index;
        });
        oracle.resize(std::min(oracle.size(), static_cast<std::size_t>(m)));
        CHECK(hybrid.members == oracle);

        if (!hybrid.members.empty()) {
            const double min_member = *hybrid.members.back().reward;
            for (const auto& s : pool) {
                const bool member = std::find(hybrid.members.begin(), hybrid.members.end(), s) !=
                                    hybrid.members.end();
                if (!member) CHECK(*s.reward <= min_member);
            }
        }
    }
}

TEST_CASE("build_pairs cycles chosen fastest and exhausts the product") {
    HybridPositiveSet hybrid;
    hybrid.prompt_id = "p";
    hybrid.capacity = 3;
    for (int i = 1; i <= 3; ++i) hybrid.members.push_back(gs("p", 1, i, true, 1.0 - 0.1 * i));
    SamplePartition part;
    part.prompt_id = "p";
    part.agent = {2, "a2"};
    for (int i = 1; i <= 10; ++i) part.losers.push_back(gs("p", 2, i, false));

    const auto pairs = build_pairs(hybrid, part, 15, 1, "q");
    REQUIRE(pairs.size() == 15);
    std::map<int, int> chosen_counts;
    std::set<std::pair<int, int>> distinct;
    for (const auto& p : pairs) {
        ++chosen_counts[p.chosen.sample_index];
        distinct.insert({p.chosen.sample_index, p.rejected.sample_index});
        CHECK(p.agent.index == 2);
        CHECK(p.rejected.agent.index == 2);
        CHECK(p.origin_agent_of_chosen == p.chosen.agent);
        CHECK(p.question == "q");
    }
    CHECK(distinct.size() == 15);  // no duplicate product cells
    for (const auto& [idx, count] : chosen_counts) CHECK(count == 5);
}

TEST_CASE("build_pairs truncates to the exhausted product") {
    HybridPositiveSet hybrid;
    hybrid.prompt_id = "p";
    hybrid.capacity = 2;
    hybrid.members = {gs("p", 1, 1, true, 0.9), gs("p", 1, 2, true, 0.8)};
    SamplePartition part;
    part.prompt_id = "p";
    part.agent = {1, "a1"};
    part.losers = {gs("p", 1, 3, false), gs("p", 1, 4, false), gs("p", 1, 5, false)};

    const auto pairs = build_pairs(hybrid, part, 15, 1, "q");
    CHECK(pairs.size() == 6);
    std::set<std::pair<int, int>> distinct;
    for (const auto& p : pairs) distinct.insert({p.chosen.sample_index, p.rejected.sample_index});
    CHECK(distinct.size() == 6);

    HybridPositiveSet empty;
    empty.prompt_id = "p";
    CHECK(build_pairs(empty, part, 15, 1, "q").empty());
    SamplePartition no_losers;
    no_losers.prompt_id = "p";
    no_losers.agent = {1, "a1"};
    CHECK(build_pairs(hybrid, no_losers, 15, 1, "q").empty());
    CHECK_THROWS(build_pairs(hybrid, part, 0, 1, "q"));
}

TEST_CASE("pair budget law holds on random set sizes") {
    SplitMix64 rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const int c = static_cast<int>(rng.next_below(7));
        const int l = static_cast<int>(rng.next_below(9));
        HybridPositiveSet hybrid;
        hybrid.prompt_id = "p";
        hybrid.capacity = std::max(1, c);
        for (int i = 1; i <= c; ++i) hybrid.members.push_back(gs("p", 1, i, true, rng.next_double()));
        std::sort(hybrid.members.begin(), hybrid.members.end(),
                  [](const GradedSample& a, const GradedSample& b) { return *a.reward > *b.reward; });
        SamplePartition part;
        part.prompt_id = "p";
        part.agent = {3, "a3"};
        for (int i = 1; i <= l; ++i) part.losers.push_back(gs("p", 3, i, false));

        const bool shuffle = rng.next_double() < 0.5;
        const auto pairs = build_pairs(hybrid, part, 15, rng.next(), "q", shuffle);
        CHECK(pairs.size() == static_cast<std::size_t>(std::min<std::int64_t>(15, std::int64_t{c} * l)));
        std::set<std::pair<int, int>> distinct;
        for (const auto& p : pairs) {
            CHECK(p.rejected.agent.index == p.agent.index);  // agent-specific negatives
            distinct.insert({p.chosen.sample_index, p.rejected.sample_index});
        }
        CHECK(distinct.size() == pairs.size());
    }
}

TEST_CASE("vanilla pairs use own winners and degrade to build_pairs for K=1") {
    SamplePartition part;
    part.prompt_id = "p";
    part.agent = {1, "a1"};
    part.winners = {gs("p", 1, 1, true, 0.4)};
    part.losers = {gs("p", 1, 2, false)};

    const auto pairs = build_vanilla_pairs(part, 1, 9, "q", 5);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].chosen.sample_index == 1);
    CHECK(pairs[0].rejected.sample_index == 2);

    SamplePartition no_wins;
    no_wins.prompt_id = "p";
    no_wins.agent = {1, "a1"};
    no_wins.losers = {gs("p", 1, 2, false)};
    CHECK(build_vanilla_pairs(no_wins, 5, 9, "q", 5).empty());

    // single-agent degeneracy: hybrid of one partition == own winners
    SplitMix64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        SamplePartition solo;
        solo.prompt_id = "p";
        solo.agent = {1, "a1"};
        const int wins = static_cast<int>(rng.next_below(8));
        const int losses = static_cast<int>(rng.next_below(8));
        for (int i = 1; i <= wins; ++i) solo.winners.push_back(gs("p", 1, i, true, rng.next_double()));
        for (int i = 1; i <= losses; ++i) solo.losers.push_back(gs("p", 1, 100 + i, false));
        const int capacity = 1 + static_cast<int>(rng.next_below(5));
        const auto hybrid = distill_hybrid({solo}, capacity);
        const auto via_hybrid = build_pairs(hybrid, solo, 15, 77, "q");
        const auto via_vanilla = build_vanilla_pairs(solo, 15, 77, "q", capacity);
        CHECK(via_hybrid == via_vanilla);
    }
}

TEST_CASE("emit_sft writes one line per hybrid member") {
    std::vector<PromptRecord> prompts(2);
    prompts[0].id = "p1";
    prompts[0].question = "q1";
    prompts[0].gold_answer = "1";
    prompts[1].id = "p2";
    prompts[1].question = "q2";
    prompts[1].gold_answer = "2";

    HybridPositiveSet h1;
    h1.prompt_id = "p1";
    h1.members = {gs("p1", 1, 1, true, 0.9), gs("p1", 2, 1, true, 0.8)};
    HybridPositiveSet h2;
    h2.prompt_id = "p2";
    h2.members = {gs("p2", 1, 2, true, 0.7), gs("p2", 3, 1, true, 0.6)};
    HybridPositiveSet empty;
    empty.prompt_id = "p1";

    const auto sft = emit_sft({h1, h2}, prompts);
    REQUIRE(sft.size() == 4);
    CHECK(sft[0].question == "q1");
    CHECK(sft[2].question == "q2");
    CHECK(emit_sft({empty}, prompts).empty());
}

TEST_CASE("dedup_by_text keeps the lowest sample index") {
    std::vector<GradedSample> samples{gs("p", 1, 3, true, std::nullopt, "same"),
                                      gs("p", 1, 1, true, std::nullopt, "same"),
                                      gs("p", 1, 2, false, std::nullopt, "other")};
    const auto deduped = dedup_by_text(samples);
    REQUIRE(deduped.size() == 2);
    CHECK(deduped[0].sample_index == 1);
    CHECK(deduped[1].sample_index == 2);
}

TEST_CASE("build_pair_dataset end-to-end invariants") {
    std::vector<PromptRecord> prompts(2);
    prompts[0].id = "p1";
    prompts[0].question = "q1";
    prompts[0].gold_answer = "1";
    prompts[1].id = "p2";
    prompts[1].question = "q2";
    prompts[1].gold_answer = "2";

    SplitMix64 rng(41);
    std::vector<GradedSample> samples;
    for (const auto& p : prompts) {
        for (int agent = 1; agent <= 3; ++agent) {
            for (int i = 1; i <= 8; ++i) {
                const bool correct = rng.next_double() < 0.5;
                auto s = gs(p.id, agent, i, correct);
                s.cot += " #" + std::to_string(agent) + "/" + std::to_string(i);
                if (correct) s.reward = rng.next_double();
                samples.push_back(std::move(s));
            }
        }
    }

    const auto stage = build_pair_dataset(samples, prompts, PairMode::MarsPo, 15, 5, 1234, true, false);
    CHECK_NOTHROW(verify_pair_references(stage.pairs, samples));
    for (const auto& p : stage.pairs) {
        CHECK(p.chosen.correct);
        CHECK_FALSE(p.rejected.correct);
        CHECK(p.rejected.agent.index == p.agent.index);
    }

    // deterministic under re-run
    const auto stage2 = build_pair_dataset(samples, prompts, PairMode::MarsPo, 15, 5, 1234, true, false);
    CHECK(stage.pairs == stage2.pairs);

    // vanilla mode never borrows positives
    const auto vstage = build_pair_dataset(samples, prompts, PairMode::Vanilla, 15, 5, 1234, true, false);
    for (const auto& p : vstage.pairs) CHECK(p.chosen.agent.index == p.agent.index);

    // sft mode emits positives only
    const auto sstage = build_pair_dataset(samples, prompts, PairMode::Sft, 15, 5, 1234, true, false);
    CHECK(sstage.pairs.empty());
    CHECK_FALSE(sstage.sft.empty());

    // tampered references are caught
    auto tampered = stage.pairs;
    tampered[0].chosen.sample_index = 999;
    CHECK_THROWS_WITH_AS(verify_pair_references(tampered, samples), doctest::Contains("unknown chosen"),
                         std::runtime_error);
}
