#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace marspo {

using ordered_json = nlohmann::ordered_json;

// Where a prompt came from; drives the per-iteration sampling plan.
enum class DatasetSource { Gsm8kStyle, MathStyle, Synthetic };

std::string to_string(DatasetSource s);
DatasetSource dataset_source_from_string(const std::string& s);

// One training item: question x_i with its gold chain-of-thought and answer.
struct PromptRecord {
    std::string id;
    std::string question;
    std::string gold_cot;      // may be empty
    std::string gold_answer;   // never empty
    DatasetSource source = DatasetSource::Synthetic;

    bool operator==(const PromptRecord&) const = default;
};

struct AgentId {
    int index = 1;  // 1-based, unique within a system manifest
    std::string name;

    bool operator==(const AgentId&) const = default;
};

// One sampled response, graded. `cot` holds the full response text (reasoning
// plus final-answer line); `answer` is the canonical extracted answer and
// `answer_raw` the span it was extracted from, kept for audit.
struct GradedSample {
    std::string prompt_id;
    AgentId agent;
    int sample_index = 1;  // 1-based, in [1, N]
    std::string cot;
    std::optional<std::string> answer_raw;
    std::optional<std::string> answer;
    bool correct = false;
    std::optional<double> reward;  // present only for correct samples
    std::int64_t token_count = 0;

    bool operator==(const GradedSample&) const = default;
};

// (prompt, chosen, rejected) training unit. The chosen side comes from the
// hybrid positive set and may originate from any agent; the rejected side is
// always a losing sample of the agent being trained. The question text is
// embedded so a pairs file is self-contained for training.
struct PreferencePair {
    std::string prompt_id;
    std::string question;
    AgentId agent;  // agent being trained; rejected.agent == agent
    GradedSample chosen;
    GradedSample rejected;
    AgentId origin_agent_of_chosen;

    bool operator==(const PreferencePair&) const = default;
};

// One supervised line for the positive-only SFT baseline.
struct SftRecord {
    std::string prompt_id;
    std::string question;
    AgentId origin_agent;
    int sample_index = 1;
    std::string text;
    double reward = 0.0;

    bool operator==(const SftRecord&) const = default;
};

struct RunManifest {
    int iteration = 1;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string created_at;

    bool operator==(const RunManifest&) const = default;
};

// How one agent in the system manifest is backed.
enum class AgentKind { Mock, Http };

struct AgentSpec {
    AgentId id;
    AgentKind kind = AgentKind::Mock;
    // mock backing
    double skill = 0.5;  // probability a sample carries the gold answer
    std::uint64_t style_seed = 0;
    std::optional<std::int64_t> wrong_answer_modulus;  // wrong = (gold+d) mod m, keeps answers in-vocab
    // http backing; may be overridden by MARSPO_AGENT_<INDEX>_ENDPOINT
    std::string endpoint;

    bool operator==(const AgentSpec&) const = default;
};

// Canonical JSONL encoding: fixed field order, absent optionals omitted,
// doubles in shortest round-trip form. Equal records produce byte-equal lines.
ordered_json to_json_line(const PromptRecord& r);
ordered_json to_json_line(const GradedSample& r);
ordered_json to_json_line(const PreferencePair& r);
ordered_json to_json_line(const SftRecord& r);
ordered_json to_json_line(const RunManifest& r);
ordered_json to_json_line(const AgentSpec& r);

void from_json_line(const nlohmann::json& j, PromptRecord& r);
void from_json_line(const nlohmann::json& j, GradedSample& r);
void from_json_line(const nlohmann::json& j, PreferencePair& r);
void from_json_line(const nlohmann::json& j, SftRecord& r);
void from_json_line(const nlohmann::json& j, RunManifest& r);
void from_json_line(const nlohmann::json& j, AgentSpec& r);

// Whitespace token count of a response text.
std::int64_t count_tokens(const std::string& text);

}  // namespace marspo
