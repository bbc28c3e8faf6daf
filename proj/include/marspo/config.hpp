#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "marspo/grader.hpp"
#include "marspo/reward.hpp"
#include "marspo/sampler.hpp"
#include "marspo/vocab.hpp"

namespace marspo {

// Full run configuration. Defaults reproduce the reference hyperparameters:
// alpha 1, beta schedule 0.1/0.2/0.4, N 40 (gsm8k-style) / 30 (math-style),
// temperatures 0.8/1.2/1.2, 15 pairs per (prompt, agent), 3 epochs, batch 16.
// The desk-scale learning rate is deliberately larger than the documented
// full-scale 7e-7, which would not move a table policy.
struct RunConfig {
    // [run]
    std::uint64_t seed = 1;
    int iterations = 3;
    std::string mode = "marspo";
    std::string out_dir = "runs/out";
    std::string created_at;  // empty: resolved from SOURCE_DATE_EPOCH, else wall clock

    // [dataset]
    std::string prompts_path = "data/prompts.jsonl";
    std::string eval_path = "data/eval.jsonl";
    DatasetSource source = DatasetSource::Synthetic;
    std::string benchmark = "synthetic-mod97";

    // [agents]
    std::string agents_manifest = "data/agents.jsonl";

    // [answer_format]
    AnswerFormat answer_format;

    // [sampling]
    PlanDefaults sampling;
    std::string prompt_template = "{question}";
    int sampling_timeout_ms = 30000;
    int sampling_max_in_flight = 4;
    int sampling_retries = 2;

    // [reward]
    std::string reward_mode = "stub";  // stub | live
    StubWeights stub;
    int reward_timeout_ms = 30000;
    int reward_max_in_flight = 4;

    // [pairs]
    int pair_budget = 15;
    int hybrid_capacity = 5;
    bool dedup = true;
    bool shuffle_pairs = false;

    // [train]
    double alpha = 1.0;
    int epochs = 3;
    int batch_size = 16;
    double learning_rate = 0.01;
    double paper_learning_rate = 7e-7;  // documented full-scale value, not used by default
    std::string optimizer = "gd";  // gd | adamw

    // [schedule]
    double beta_iter1 = 0.1;
    double beta_iter2 = 0.2;
    double beta_iter3 = 0.4;

    // [policy]
    int policy_order = 2;
    std::string vocab_spec = "preset:mod97";  // preset:mod97 | file:<path>
    int max_decode_tokens = 24;
    double init_sigma = 0.02;
};

RunConfig default_config();

// Plain-text section/key-value format; '#' comments, backslash escapes for
// newlines inside values. Unknown sections or keys are errors. Omitted keys
// keep their defaults.
RunConfig parse_config_text(const std::string& text, RunConfig base = default_config());
RunConfig load_config(const std::filesystem::path& path);

// Canonical rendering: fixed section and key order, shortest round-trip
// number formatting. parse(serialize(c)) == c, and the digest is taken over
// exactly these bytes.
std::string serialize_config(const RunConfig& cfg);
std::string config_digest(const RunConfig& cfg);

// created_at precedence: explicit config value, SOURCE_DATE_EPOCH, wall clock.
std::string resolve_created_at(const RunConfig& cfg);

TokenVocab load_vocab(const RunConfig& cfg);

// Shortest round-trip decimal rendering shared by the config writer.
std::string format_double(double v);

}  // namespace marspo
