#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marspo/records.hpp"

namespace marspo {

// Per-(prompt, agent) split of the N sampled responses by the correctness
// bit: winners solved the prompt, losers did not.
struct SamplePartition {
    std::string prompt_id;
    AgentId agent;
    std::vector<GradedSample> winners;
    std::vector<GradedSample> losers;
};

// Reward-ranked union of all agents' winners for one prompt, truncated to
// `capacity` members in (reward desc, agent index asc, sample index asc)
// order. May be empty when no agent solved the prompt.
struct HybridPositiveSet {
    std::string prompt_id;
    std::vector<GradedSample> members;
    int capacity = 1;
};

// Splits one (prompt, agent) cell by the correct bit, preserving sample order
// within each side. Mixed prompt ids or agents raise.
SamplePartition partition(const std::vector<GradedSample>& samples);

// Drops byte-identical response texts, keeping the lowest sample index;
// applied per (prompt, agent) cell before pairing.
std::vector<GradedSample> dedup_by_text(std::vector<GradedSample> samples);

// Top-capacity positives across all agents' partitions of one prompt. Every
// winner must carry a reward; an unscored positive raises, naming the sample.
HybridPositiveSet distill_hybrid(const std::vector<SamplePartition>& partitions, int capacity);

// Pairs the hybrid positives with this agent's losers: chosen cycles fastest
// in reward-descending order while rejected advances in sample-index order,
// visiting min(budget, |members| * |losers|) distinct product cells. The seed
// only matters in shuffled mode, which permutes the product before
// truncation. Empty when either side is empty.
std::vector<PreferencePair> build_pairs(const HybridPositiveSet& hybrid, const SamplePartition& part,
                                        int budget, std::uint64_t seed, const std::string& question,
                                        bool shuffle = false);

// Baseline: chosen drawn from the agent's own winners (reward-descending,
// truncated to `capacity` for parity with the hybrid route). With a single
// agent this coincides with build_pairs exactly.
std::vector<PreferencePair> build_vanilla_pairs(const SamplePartition& part, int budget, std::uint64_t seed,
                                                const std::string& question, int capacity,
                                                bool shuffle = false);

// One SFT line per hybrid member; questions resolved from the prompt records.
std::vector<SftRecord> emit_sft(const std::vector<HybridPositiveSet>& hybrids,
                                const std::vector<PromptRecord>& prompts);

enum class PairMode { MarsPo, Vanilla, DpoNll, Sft };

PairMode pair_mode_from_string(const std::string& s);
std::string to_string(PairMode m);

struct PairsStageOutput {
    std::vector<PreferencePair> pairs;  // empty in sft mode
    std::vector<SftRecord> sft;         // empty except in sft mode
    int prompts_without_positives = 0;  // unsolved by every agent; logged, no pairs
};

// Full pairing stage over a scored sample set: groups by (prompt, agent),
// dedups, partitions, distills (hybrid modes) and builds the mode's dataset.
// Output order is (prompt_id, agent index, pair ordinal).
PairsStageOutput build_pair_dataset(const std::vector<GradedSample>& scored_samples,
                                    const std::vector<PromptRecord>& prompts, PairMode mode, int budget,
                                    int capacity, std::uint64_t seed, bool dedup, bool shuffle);

// Referential integrity: every pair's chosen/rejected coordinates resolve in
// the sample store and the pair invariants hold. Raises on the first failure.
void verify_pair_references(const std::vector<PreferencePair>& pairs,
                            const std::vector<GradedSample>& samples);

}  // namespace marspo
