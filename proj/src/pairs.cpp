#include "marspo/pairs.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "marspo/rng.hpp"

namespace marspo {

namespace {

bool reward_order(const GradedSample& a, const GradedSample& b) {
    const double ra = a.reward.value_or(0.0);
    const double rb = b.reward.value_or(0.0);
    if (ra != rb) return ra > rb;
    if (a.agent.index != b.agent.index) return a.agent.index < b.agent.index;
    return a.sample_index < b.sample_index;
}

std::string sample_coords(const GradedSample& s) {
    return "prompt " + s.prompt_id + ", agent " + std::to_string(s.agent.index) + ", sample " +
           std::to_string(s.sample_index);
}

// Core cycling enumeration shared by the hybrid and vanilla routes.
std::vector<PreferencePair> pair_product(const std::vector<GradedSample>& members,
                                         const std::vector<GradedSample>& losers, const AgentId& agent,
                                         const std::string& prompt_id, const std::string& question,
                                         int budget, std::uint64_t seed, bool shuffle) {
    if (budget < 1) throw std::runtime_error("pair budget must be >= 1");
    std::vector<PreferencePair> out;
    const std::size_t c = members.size();
    const std::size_t l = losers.size();
    if (c == 0 || l == 0) return out;

    const std::uint64_t product = static_cast<std::uint64_t>(c) * static_cast<std::uint64_t>(l);
    const std::uint64_t total = std::min<std::uint64_t>(static_cast<std::uint64_t>(budget), product);

    std::vector<std::uint64_t> order(product);
    for (std::uint64_t t = 0; t < product; ++t) order[t] = t;
    if (shuffle) {
        SplitMix64 rng(seed);
        deterministic_shuffle(order, rng);
    }

    out.reserve(static_cast<std::size_t>(total));
    for (std::uint64_t k = 0; k < total; ++k) {
        const std::uint64_t t = order[static_cast<std::size_t>(k)];
        const GradedSample& chosen = members[static_cast<std::size_t>(t % c)];
        const GradedSample& rejected = losers[static_cast<std::size_t>(t / c)];
        PreferencePair p;
        p.prompt_id = prompt_id;
        p.question = question;
        p.agent = agent;
        p.chosen = chosen;
        p.rejected = rejected;
        p.origin_agent_of_chosen = chosen.agent;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

SamplePartition partition(const std::vector<GradedSample>& samples) {
    SamplePartition part;
    if (samples.empty()) throw std::runtime_error("partition: empty sample list");
    part.prompt_id = samples.front().prompt_id;
    part.agent = samples.front().agent;
    for (const auto& s : samples) {
        if (s.prompt_id != part.prompt_id || s.agent.index != part.agent.index) {
            throw std::runtime_error("partition: mixed prompt/agent in input (" + sample_coords(s) + ")");
        }
        (s.correct ? part.winners : part.losers).push_back(s);
    }
    return part;
}

std::vector<GradedSample> dedup_by_text(std::vector<GradedSample> samples) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const GradedSample& a, const GradedSample& b) { return a.sample_index < b.sample_index; });
    std::unordered_set<std::string> seen;
    std::vector<GradedSample> out;
    out.reserve(samples.size());
    for (auto& s : samples) {
        if (seen.insert(s.cot).second) out.push_back(std::move(s));
    }
    return out;
}

HybridPositiveSet distill_hybrid(const std::vector<SamplePartition>& partitions, int capacity) {
    if (capacity < 1) throw std::runtime_error("hybrid capacity must be >= 1");
    HybridPositiveSet hybrid;
    hybrid.capacity = capacity;
    if (partitions.empty()) return hybrid;
    hybrid.prompt_id = partitions.front().prompt_id;

    std::vector<GradedSample> pool;
    for (const auto& part : partitions) {
        if (part.prompt_id != hybrid.prompt_id) {
            throw std::runtime_error("distill_hybrid: partitions span multiple prompts");
        }
        for (const auto& w : part.winners) {
            if (!w.reward) {
                throw std::runtime_error("distill_hybrid: unscored positive sample (" + sample_coords(w) + ")");
            }
            pool.push_back(w);
        }
    }
    std::sort(pool.begin(), pool.end(), reward_order);
    const std::size_t keep = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(capacity));
    hybrid.members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
    return hybrid;
}

std::vector<PreferencePair> build_pairs(const HybridPositiveSet& hybrid, const SamplePartition& part,
                                        int budget, std::uint64_t seed, const std::string& question,
                                        bool shuffle) {
    if (!hybrid.members.empty() && hybrid.prompt_id != part.prompt_id) {
        throw std::runtime_error("build_pairs: hybrid set and partition disagree on prompt");
    }
    return pair_product(hybrid.members, part.losers, part.agent, part.prompt_id, question, budget, seed,
                        shuffle);
}

std::vector<PreferencePair> build_vanilla_pairs(const SamplePartition& part, int budget, std::uint64_t seed,
                                                const std::string& question, int capacity, bool shuffle) {
    if (capacity < 1) throw std::runtime_error("vanilla capacity must be >= 1");
    std::vector<GradedSample> members = part.winners;
    for (const auto& w : members) {
        if (!w.reward) {
            throw std::runtime_error("build_vanilla_pairs: unscored positive sample (" + sample_coords(w) + ")");
        }
    }
    std::sort(members.begin(), members.end(), reward_order);
    if (members.size() > static_cast<std::size_t>(capacity)) {
        members.resize(static_cast<std::size_t>(capacity));
    }
    return pair_product(members, part.losers, part.agent, part.prompt_id, question, budget, seed, shuffle);
}

std::vector<SftRecord> emit_sft(const std::vector<HybridPositiveSet>& hybrids,
                                const std::vector<PromptRecord>& prompts) {
    std::unordered_map<std::string, const PromptRecord*> by_id;
    for (const auto& p : prompts) by_id[p.id] = &p;
    std::vector<SftRecord> out;
    for (const auto& h : hybrids) {
        auto it = by_id.find(h.prompt_id);
        for (const auto& m : h.members) {
            if (it == by_id.end()) {
                throw std::runtime_error("emit_sft: no prompt record for " + h.prompt_id);
            }
            SftRecord rec;
            rec.prompt_id = h.prompt_id;
            rec.question = it->second->question;
            rec.origin_agent = m.agent;
            rec.sample_index = m.sample_index;
            rec.text = m.cot;
            rec.reward = m.reward.value_or(0.0);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

PairMode pair_mode_from_string(const std::string& s) {
    if (s == "marspo") return PairMode::MarsPo;
    if (s == "vanilla") return PairMode::Vanilla;
    if (s == "dpo_nll") return PairMode::DpoNll;
    if (s == "sft") return PairMode::Sft;
    throw std::runtime_error("unknown pair mode: " + s);
}

std::string to_string(PairMode m) {
    switch (m) {
        case PairMode::MarsPo: return "marspo";
        case PairMode::Vanilla: return "vanilla";
        case PairMode::DpoNll: return "dpo_nll";
        case PairMode::Sft: return "sft";
    }
    throw std::logic_error("unknown pair mode");
}

PairsStageOutput build_pair_dataset(const std::vector<GradedSample>& scored_samples,
                                    const std::vector<PromptRecord>& prompts, PairMode mode, int budget,
                                    int capacity, std::uint64_t seed, bool dedup, bool shuffle) {
    std::unordered_map<std::string, const PromptRecord*> prompt_by_id;
    for (const auto& p : prompts) prompt_by_id[p.id] = &p;

    // Group by (prompt, agent), keeping prompt order lexicographic and agent
    // order by index so the output is independent of input interleaving.
    std::map<std::string, std::map<int, std::vector<GradedSample>>> cells;
    for (const auto& s : scored_samples) {
        if (!prompt_by_id.count(s.prompt_id)) {
            throw std::runtime_error("sample references unknown prompt " + s.prompt_id);
        }
        cells[s.prompt_id][s.agent.index].push_back(s);
    }

    PairsStageOutput out;
    std::vector<HybridPositiveSet> hybrids;
    for (auto& [prompt_id, agents] : cells) {
        const std::string& question = prompt_by_id[prompt_id]->question;

        std::vector<SamplePartition> parts;
        for (auto& [agent_index, samples] : agents) {
            auto cell = dedup ? dedup_by_text(std::move(samples)) : std::move(samples);
            parts.push_back(partition(cell));
        }

        const bool hybrid_mode = mode == PairMode::MarsPo || mode == PairMode::Sft;
        HybridPositiveSet hybrid;
        if (hybrid_mode) {
            hybrid = distill_hybrid(parts, capacity);
            if (hybrid.members.empty()) ++out.prompts_without_positives;
        } else {
            bool any_winner = false;
            for (const auto& p : parts) any_winner = any_winner || !p.winners.empty();
            if (!any_winner) ++out.prompts_without_positives;
        }

        if (mode == PairMode::Sft) {
            hybrids.push_back(hybrid);
            continue;
        }
        for (const auto& part : parts) {
            const std::uint64_t cell_seed =
                mix64(seed, mix64(fnv1a64(prompt_id), static_cast<std::uint64_t>(part.agent.index)));
            std::vector<PreferencePair> pairs;
            if (mode == PairMode::MarsPo) {
                pairs = build_pairs(hybrid, part, budget, cell_seed, question, shuffle);
            } else {
                pairs = build_vanilla_pairs(part, budget, cell_seed, question, capacity, shuffle);
            }
            out.pairs.insert(out.pairs.end(), std::make_move_iterator(pairs.begin()),
                             std::make_move_iterator(pairs.end()));
        }
    }
    if (mode == PairMode::Sft) out.sft = emit_sft(hybrids, prompts);
    return out;
}

void verify_pair_references(const std::vector<PreferencePair>& pairs,
                            const std::vector<GradedSample>& samples) {
    auto key = [](const std::string& pid, int agent, int index) {
        return pid + "\x1f" + std::to_string(agent) + "\x1f" + std::to_string(index);
    };
    std::unordered_set<std::string> store;
    for (const auto& s : samples) store.insert(key(s.prompt_id, s.agent.index, s.sample_index));

    for (const auto& p : pairs) {
        if (!p.chosen.correct) {
            throw std::runtime_error("pair invariant violated: chosen sample not correct (" + p.prompt_id + ")");
        }
        if (p.rejected.correct) {
            throw std::runtime_error("pair invariant violated: rejected sample marked correct (" + p.prompt_id +
                                     ")");
        }
        if (p.rejected.agent.index != p.agent.index) {
            throw std::runtime_error("pair invariant violated: rejected sample from another agent (" +
                                     p.prompt_id + ")");
        }
        if (p.origin_agent_of_chosen.index != p.chosen.agent.index) {
            throw std::runtime_error("pair invariant violated: chosen origin mismatch (" + p.prompt_id + ")");
        }
        if (!store.count(key(p.prompt_id, p.chosen.agent.index, p.chosen.sample_index))) {
            throw std::runtime_error("pair references unknown chosen sample in " + p.prompt_id);
        }
        if (!store.count(key(p.prompt_id, p.rejected.agent.index, p.rejected.sample_index))) {
            throw std::runtime_error("pair references unknown rejected sample in " + p.prompt_id);
        }
    }
}

}  // namespace marspo
