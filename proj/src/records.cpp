#include "marspo/records.hpp"

#include <cctype>
#include <stdexcept>

namespace marspo {

std::string to_string(DatasetSource s) {
    switch (s) {
        case DatasetSource::Gsm8kStyle: return "gsm8k-style";
        case DatasetSource::MathStyle: return "math-style";
        case DatasetSource::Synthetic: return "synthetic";
    }
    throw std::logic_error("unknown dataset source");
}

DatasetSource dataset_source_from_string(const std::string& s) {
    if (s == "gsm8k-style") return DatasetSource::Gsm8kStyle;
    if (s == "math-style") return DatasetSource::MathStyle;
    if (s == "synthetic") return DatasetSource::Synthetic;
    throw std::runtime_error("unknown dataset source: " + s);
}

namespace {

std::string agent_kind_to_string(AgentKind k) {
    return k == AgentKind::Mock ? "mock" : "http";
}

AgentKind agent_kind_from_string(const std::string& s) {
    if (s == "mock") return AgentKind::Mock;
    if (s == "http") return AgentKind::Http;
    throw std::runtime_error("unknown agent kind: " + s);
}

// Flattened graded-sample fields shared by samples.jsonl and the chosen /
// rejected halves of pairs.jsonl.
void put_sample(ordered_json& j, const std::string& prefix, const GradedSample& s) {
    j[prefix + "agent_index"] = s.agent.index;
    j[prefix + "agent_name"] = s.agent.name;
    j[prefix + "sample_index"] = s.sample_index;
    j[prefix + "cot"] = s.cot;
    if (s.answer_raw) j[prefix + "answer_raw"] = *s.answer_raw;
    if (s.answer) j[prefix + "answer"] = *s.answer;
    j[prefix + "correct"] = s.correct;
    if (s.reward) j[prefix + "reward"] = *s.reward;
    j[prefix + "token_count"] = s.token_count;
}

void get_sample(const nlohmann::json& j, const std::string& prefix, GradedSample& s) {
    s.agent.index = j.at(prefix + "agent_index").get<int>();
    s.agent.name = j.at(prefix + "agent_name").get<std::string>();
    s.sample_index = j.at(prefix + "sample_index").get<int>();
    s.cot = j.at(prefix + "cot").get<std::string>();
    s.answer_raw.reset();
    s.answer.reset();
    s.reward.reset();
    if (j.contains(prefix + "answer_raw")) s.answer_raw = j.at(prefix + "answer_raw").get<std::string>();
    if (j.contains(prefix + "answer")) s.answer = j.at(prefix + "answer").get<std::string>();
    s.correct = j.at(prefix + "correct").get<bool>();
    if (j.contains(prefix + "reward")) s.reward = j.at(prefix + "reward").get<double>();
    s.token_count = j.at(prefix + "token_count").get<std::int64_t>();
}

}  // namespace

ordered_json to_json_line(const PromptRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["question"] = r.question;
    j["gold_cot"] = r.gold_cot;
    j["gold_answer"] = r.gold_answer;
    j["source"] = to_string(r.source);
    return j;
}

void from_json_line(const nlohmann::json& j, PromptRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.gold_cot = j.at("gold_cot").get<std::string>();
    r.gold_answer = j.at("gold_answer").get<std::string>();
    r.source = dataset_source_from_string(j.at("source").get<std::string>());
    if (r.gold_answer.empty()) throw std::runtime_error("gold_answer empty for id " + r.id);
}

ordered_json to_json_line(const GradedSample& r) {
    ordered_json j;
    j["prompt_id"] = r.prompt_id;
    put_sample(j, "", r);
    return j;
}

void from_json_line(const nlohmann::json& j, GradedSample& r) {
    r.prompt_id = j.at("prompt_id").get<std::string>();
    get_sample(j, "", r);
}

ordered_json to_json_line(const PreferencePair& r) {
    ordered_json j;
    j["prompt_id"] = r.prompt_id;
    j["question"] = r.question;
    j["agent_index"] = r.agent.index;
    j["agent_name"] = r.agent.name;
    put_sample(j, "chosen_", r.chosen);
    put_sample(j, "rejected_", r.rejected);
    j["origin_agent_of_chosen_index"] = r.origin_agent_of_chosen.index;
    j["origin_agent_of_chosen_name"] = r.origin_agent_of_chosen.name;
    return j;
}

void from_json_line(const nlohmann::json& j, PreferencePair& r) {
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.agent.index = j.at("agent_index").get<int>();
    r.agent.name = j.at("agent_name").get<std::string>();
    get_sample(j, "chosen_", r.chosen);
    get_sample(j, "rejected_", r.rejected);
    r.chosen.prompt_id = r.prompt_id;
    r.rejected.prompt_id = r.prompt_id;
    r.origin_agent_of_chosen.index = j.at("origin_agent_of_chosen_index").get<int>();
    r.origin_agent_of_chosen.name = j.at("origin_agent_of_chosen_name").get<std::string>();
}

ordered_json to_json_line(const SftRecord& r) {
    ordered_json j;
    j["prompt_id"] = r.prompt_id;
    j["question"] = r.question;
    j["origin_agent_index"] = r.origin_agent.index;
    j["origin_agent_name"] = r.origin_agent.name;
    j["sample_index"] = r.sample_index;
    j["text"] = r.text;
    j["reward"] = r.reward;
    return j;
}

void from_json_line(const nlohmann::json& j, SftRecord& r) {
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.origin_agent.index = j.at("origin_agent_index").get<int>();
    r.origin_agent.name = j.at("origin_agent_name").get<std::string>();
    r.sample_index = j.at("sample_index").get<int>();
    r.text = j.at("text").get<std::string>();
    r.reward = j.at("reward").get<double>();
}

ordered_json to_json_line(const RunManifest& r) {
    ordered_json j;
    j["iteration"] = r.iteration;
    j["seed"] = r.seed;
    j["config_digest"] = r.config_digest;
    j["created_at"] = r.created_at;
    return j;
}

void from_json_line(const nlohmann::json& j, RunManifest& r) {
    r.iteration = j.at("iteration").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
}

ordered_json to_json_line(const AgentSpec& r) {
    ordered_json j;
    j["index"] = r.id.index;
    j["name"] = r.id.name;
    j["kind"] = agent_kind_to_string(r.kind);
    if (r.kind == AgentKind::Mock) {
        j["skill"] = r.skill;
        j["style_seed"] = r.style_seed;
        if (r.wrong_answer_modulus) j["wrong_answer_modulus"] = *r.wrong_answer_modulus;
    } else {
        j["endpoint"] = r.endpoint;
    }
    return j;
}

void from_json_line(const nlohmann::json& j, AgentSpec& r) {
    r.id.index = j.at("index").get<int>();
    r.id.name = j.at("name").get<std::string>();
    r.kind = agent_kind_from_string(j.at("kind").get<std::string>());
    r.wrong_answer_modulus.reset();
    if (j.contains("skill")) r.skill = j.at("skill").get<double>();
    if (j.contains("style_seed")) r.style_seed = j.at("style_seed").get<std::uint64_t>();
    if (j.contains("wrong_answer_modulus")) r.wrong_answer_modulus = j.at("wrong_answer_modulus").get<std::int64_t>();
    if (j.contains("endpoint")) r.endpoint = j.at("endpoint").get<std::string>();
}

std::int64_t count_tokens(const std::string& text) {
    std::int64_t n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

}  // namespace marspo
