#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "marspo/config.hpp"
#include "marspo/pairs.hpp"
#include "marspo/policy.hpp"
#include "marspo/records.hpp"

namespace marspo {

// 0.1 / 0.2 / 0.4 for the first three iterations; doubling extrapolation past
// the published schedule.
double beta_schedule(int iteration, const RunConfig& cfg);

// One manifest line per completed iteration; the full config is echoed so an
// artifact can always be tied back to its exact settings.
struct IterationManifest {
    RunManifest base;
    std::string mode;
    double beta = 0.0;
    double temperature = 0.0;
    int n_samples = 0;
    std::string config_text;

    bool operator==(const IterationManifest&) const = default;
};

ordered_json to_json_line(const IterationManifest& m);
void from_json_line(const nlohmann::json& j, IterationManifest& m);

struct ReportRow {
    std::string mode;
    int iteration = 0;
    int agent_index = 0;
    std::string agent_name;
    std::string benchmark;
    double accuracy = 0.0;
    std::string note;

    bool operator==(const ReportRow&) const = default;
};

ordered_json to_json_line(const ReportRow& r);
void from_json_line(const nlohmann::json& j, ReportRow& r);

struct IterationState {
    int iteration = 0;  // 0 = freshly initialized policies
    std::map<int, std::filesystem::path> policy_paths;              // agent index -> file
    std::map<std::pair<int, std::string>, double> metrics;          // (agent, benchmark) -> accuracy
    double beta = 0.0;
};

// Runs sample -> grade -> score -> pairs -> train -> eval per iteration, with
// per-mode output directories under cfg.out_dir. Each iteration stages into a
// temp directory and renames on success, so an aborted iteration leaves no
// partial outputs behind.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    const std::vector<AgentSpec>& agents() const { return agents_; }

    IterationState init_state(PairMode mode);
    IterationState run_iteration(const IterationState& prev, PairMode mode);

    // init + cfg.iterations iterations; returns one report row per
    // (iteration incl. baseline 0, agent).
    std::vector<ReportRow> run(PairMode mode);

    std::filesystem::path mode_root(PairMode mode) const;

private:
    RunConfig cfg_;
    std::vector<PromptRecord> prompts_;
    std::vector<PromptRecord> eval_;
    std::vector<AgentSpec> agents_;
    TokenVocab vocab_;
    std::string created_at_;
};

// Runs marspo, vanilla, dpo_nll and sft on identical seeds and data, writes
// report.jsonl plus a readable summary, and returns all rows.
std::vector<ReportRow> compare_modes(const RunConfig& cfg);
std::string render_report_table(const std::vector<ReportRow>& rows);

// Synthetic modular-sum task. Train and eval prompts share operand pairs but
// use different phrasings, so eval measures recall across templates rather
// than memorization of prompt strings.
struct ToyOptions {
    int train_count = 60;
    int eval_count = 40;
    std::uint64_t seed = 7;
};

void write_mod97_dataset(const std::filesystem::path& prompts_out, const std::filesystem::path& eval_out,
                         const ToyOptions& options);

// Three mock agents with skills 0.9 / 0.6 / 0.3.
std::vector<AgentSpec> default_toy_agents();

}  // namespace marspo
