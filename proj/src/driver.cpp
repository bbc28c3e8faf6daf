#include "marspo/driver.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include "marspo/jsonl.hpp"
#include "marspo/reward.hpp"
#include "marspo/rng.hpp"
#include "marspo/trainer.hpp"

namespace marspo {

namespace fs = std::filesystem;

double beta_schedule(int iteration, const RunConfig& cfg) {
    if (iteration < 1) throw std::runtime_error("beta_schedule: iteration must be >= 1");
    if (iteration == 1) return cfg.beta_iter1;
    if (iteration == 2) return cfg.beta_iter2;
    if (iteration == 3) return cfg.beta_iter3;
    return cfg.beta_iter3 * std::pow(2.0, iteration - 3);
}

ordered_json to_json_line(const IterationManifest& m) {
    ordered_json j;
    j["iteration"] = m.base.iteration;
    j["seed"] = m.base.seed;
    j["config_digest"] = m.base.config_digest;
    j["created_at"] = m.base.created_at;
    j["mode"] = m.mode;
    j["beta"] = m.beta;
    j["temperature"] = m.temperature;
    j["n_samples"] = m.n_samples;
    j["config_text"] = m.config_text;
    return j;
}

void from_json_line(const nlohmann::json& j, IterationManifest& m) {
    m.base.iteration = j.at("iteration").get<int>();
    m.base.seed = j.at("seed").get<std::uint64_t>();
    m.base.config_digest = j.at("config_digest").get<std::string>();
    m.base.created_at = j.at("created_at").get<std::string>();
    m.mode = j.at("mode").get<std::string>();
    m.beta = j.at("beta").get<double>();
    m.temperature = j.at("temperature").get<double>();
    m.n_samples = j.at("n_samples").get<int>();
    m.config_text = j.at("config_text").get<std::string>();
}

ordered_json to_json_line(const ReportRow& r) {
    ordered_json j;
    j["mode"] = r.mode;
    j["iteration"] = r.iteration;
    j["agent_index"] = r.agent_index;
    j["agent_name"] = r.agent_name;
    j["benchmark"] = r.benchmark;
    j["accuracy"] = r.accuracy;
    j["note"] = r.note;
    return j;
}

void from_json_line(const nlohmann::json& j, ReportRow& r) {
    r.mode = j.at("mode").get<std::string>();
    r.iteration = j.at("iteration").get<int>();
    r.agent_index = j.at("agent_index").get<int>();
    r.agent_name = j.at("agent_name").get<std::string>();
    r.benchmark = j.at("benchmark").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.note = j.at("note").get<std::string>();
}

namespace {

std::string policy_filename(int agent_index) {
    return "policy_agent_" + std::to_string(agent_index) + ".bin";
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    prompts_ = read_dataset(cfg_.prompts_path);
    eval_ = read_dataset(cfg_.eval_path);
    agents_ = read_jsonl<AgentSpec>(cfg_.agents_manifest);
    if (agents_.empty()) throw std::runtime_error("agent manifest is empty");
    std::sort(agents_.begin(), agents_.end(),
              [](const AgentSpec& a, const AgentSpec& b) { return a.id.index < b.id.index; });
    std::set<int> indices;
    for (const auto& a : agents_) {
        if (!indices.insert(a.id.index).second) {
            throw std::runtime_error("duplicate agent index " + std::to_string(a.id.index));
        }
        if (a.id.index < 1) throw std::runtime_error("agent indices are 1-based");
    }
    vocab_ = load_vocab(cfg_);
    created_at_ = resolve_created_at(cfg_);
}

fs::path Pipeline::mode_root(PairMode mode) const { return fs::path(cfg_.out_dir) / to_string(mode); }

IterationState Pipeline::init_state(PairMode mode) {
    const fs::path root = mode_root(mode);
    const fs::path dir = root / "iter_0";
    fs::create_directories(dir);

    IterationState state;
    state.iteration = 0;
    for (const auto& agent : agents_) {
        PolicySnapshot policy = PolicySnapshot::random_init(
            vocab_, cfg_.policy_order, mix64(cfg_.seed, static_cast<std::uint64_t>(agent.id.index)),
            cfg_.init_sigma);
        const fs::path path = dir / policy_filename(agent.id.index);
        save_policy(path, policy);
        state.policy_paths[agent.id.index] = path;
        state.metrics[{agent.id.index, cfg_.benchmark}] =
            greedy_eval(policy, eval_, cfg_.answer_format, cfg_.prompt_template, cfg_.max_decode_tokens);
    }
    return state;
}

IterationState Pipeline::run_iteration(const IterationState& prev, PairMode mode) {
    const int t = prev.iteration + 1;
    const fs::path root = mode_root(mode);
    const fs::path tmp = root / ("tmp.iter_" + std::to_string(t));
    const fs::path final_dir = root / ("iter_" + std::to_string(t));
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    try {
        const double beta = beta_schedule(t, cfg_);
        const SamplingPlan plan = plan_for_iteration(t, cfg_.source, cfg_.sampling,
                                                     mix64(cfg_.seed, static_cast<std::uint64_t>(t)));

        CompletionClient client_defaults;
        client_defaults.timeout = std::chrono::milliseconds(cfg_.sampling_timeout_ms);
        client_defaults.max_in_flight = cfg_.sampling_max_in_flight;
        client_defaults.retries = cfg_.sampling_retries;

        auto samples = generate_graded_samples(agents_, prompts_, plan, cfg_.answer_format,
                                               cfg_.prompt_template, client_defaults);
        write_jsonl(tmp / "samples.jsonl", samples);

        if (cfg_.reward_mode == "stub") {
            score_samples_stub(samples, cfg_.stub, cfg_.answer_format);
        } else {
            RewardClient rc;
            rc.endpoint = reward_endpoint_from_env();
            rc.auth_token = reward_token_from_env();
            rc.timeout = std::chrono::milliseconds(cfg_.reward_timeout_ms);
            rc.max_in_flight = cfg_.reward_max_in_flight;
            HttpRewardService service(rc);
            score_samples_live(samples, prompts_, service, cfg_.reward_max_in_flight);
        }
        write_jsonl(tmp / "samples.scored.jsonl", samples);

        const std::uint64_t pair_seed = mix64(cfg_.seed, mix64(0x70a125, static_cast<std::uint64_t>(t)));
        PairsStageOutput stage = build_pair_dataset(samples, prompts_, mode, cfg_.pair_budget,
                                                    cfg_.hybrid_capacity, pair_seed, cfg_.dedup,
                                                    cfg_.shuffle_pairs);
        if (stage.prompts_without_positives > 0) {
            std::cerr << "iteration " << t << " (" << to_string(mode) << "): "
                      << stage.prompts_without_positives << " prompt(s) unsolved by every agent\n";
        }
        if (mode == PairMode::Sft) {
            write_jsonl(tmp / "sft.jsonl", stage.sft);
        } else {
            verify_pair_references(stage.pairs, samples);
            write_jsonl(tmp / "pairs.jsonl", stage.pairs);
        }

        IterationState next;
        next.iteration = t;
        next.beta = beta;
        for (const auto& agent : agents_) {
            PolicySnapshot policy = load_policy(prev.policy_paths.at(agent.id.index), vocab_);

            std::vector<TokenizedPair> data;
            if (mode == PairMode::Sft) {
                for (const auto& rec : stage.sft) data.push_back(tokenize_sft(vocab_, rec, cfg_.prompt_template));
            } else {
                for (const auto& p : stage.pairs) {
                    if (p.agent.index == agent.id.index) {
                        data.push_back(tokenize_pair(vocab_, p, cfg_.prompt_template));
                    }
                }
            }

            PolicySnapshot trained = std::move(policy);
            if (!data.empty()) {
                TrainConfig tc;
                tc.alpha = mode == PairMode::Vanilla ? 0.0 : cfg_.alpha;
                tc.beta = beta;
                tc.epochs = cfg_.epochs;
                tc.batch_size = cfg_.batch_size;
                tc.learning_rate = cfg_.learning_rate;
                tc.optimizer = cfg_.optimizer == "adamw" ? OptimizerKind::AdamW : OptimizerKind::GradientDescent;
                tc.use_dpo = mode != PairMode::Sft;
                tc.seed = mix64(cfg_.seed, mix64(static_cast<std::uint64_t>(t),
                                                 static_cast<std::uint64_t>(agent.id.index)));
                trained = train(trained, data, tc).policy;
            } else {
                std::cerr << "iteration " << t << " (" << to_string(mode) << "): no training data for agent "
                          << agent.id.name << "; policy carried forward\n";
            }

            const fs::path path = tmp / policy_filename(agent.id.index);
            save_policy(path, trained);
            next.policy_paths[agent.id.index] = path;
            next.metrics[{agent.id.index, cfg_.benchmark}] =
                greedy_eval(trained, eval_, cfg_.answer_format, cfg_.prompt_template, cfg_.max_decode_tokens);
        }

        IterationManifest manifest;
        manifest.base.iteration = t;
        manifest.base.seed = cfg_.seed;
        manifest.base.config_digest = config_digest(cfg_);
        manifest.base.created_at = created_at_;
        manifest.mode = to_string(mode);
        manifest.beta = beta;
        manifest.temperature = plan.temperature;
        manifest.n_samples = plan.n_samples;
        manifest.config_text = serialize_config(cfg_);
        write_jsonl(tmp / "manifest.jsonl", std::vector<IterationManifest>{manifest});

        std::vector<ReportRow> rows;
        for (const auto& agent : agents_) {
            ReportRow row;
            row.mode = to_string(mode);
            row.iteration = t;
            row.agent_index = agent.id.index;
            row.agent_name = agent.id.name;
            row.benchmark = cfg_.benchmark;
            row.accuracy = next.metrics.at({agent.id.index, cfg_.benchmark});
            row.note = mode == PairMode::Sft ? "no negatives used" : "";
            rows.push_back(std::move(row));
        }
        write_jsonl(tmp / "metrics.jsonl", rows);

        fs::remove_all(final_dir);
        fs::rename(tmp, final_dir);

        // Paths move with the rename.
        for (auto& [idx, p] : next.policy_paths) p = final_dir / policy_filename(idx);
        return next;
    } catch (...) {
        fs::remove_all(tmp);
        throw;
    }
}

std::vector<ReportRow> Pipeline::run(PairMode mode) {
    IterationState state = init_state(mode);
    std::vector<ReportRow> rows;
    for (const auto& agent : agents_) {
        ReportRow row;
        row.mode = to_string(mode);
        row.iteration = 0;
        row.agent_index = agent.id.index;
        row.agent_name = agent.id.name;
        row.benchmark = cfg_.benchmark;
        row.accuracy = state.metrics.at({agent.id.index, cfg_.benchmark});
        row.note = "untrained baseline";
        rows.push_back(std::move(row));
    }
    for (int t = 1; t <= cfg_.iterations; ++t) {
        state = run_iteration(state, mode);
        auto iteration_rows = read_jsonl<ReportRow>(mode_root(mode) / ("iter_" + std::to_string(t)) /
                                                    "metrics.jsonl");
        rows.insert(rows.end(), iteration_rows.begin(), iteration_rows.end());
    }
    write_jsonl(mode_root(mode) / "report.jsonl", rows);
    return rows;
}

std::vector<ReportRow> compare_modes(const RunConfig& cfg) {
    Pipeline pipeline(cfg);
    std::vector<ReportRow> all;
    for (PairMode mode : {PairMode::MarsPo, PairMode::Vanilla, PairMode::DpoNll, PairMode::Sft}) {
        auto rows = pipeline.run(mode);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    write_jsonl(fs::path(cfg.out_dir) / "report.jsonl", all);

    const std::string table = render_report_table(all);
    std::ofstream out(fs::path(cfg.out_dir) / "report.txt");
    out << table;
    std::cout << table;
    return all;
}

std::string render_report_table(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    out << "mode      iter  agent                 benchmark           accuracy  note\n";
    for (const auto& r : rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-9s %4d  %-2d %-18s %-18s  %8.4f  %s\n", r.mode.c_str(),
                      r.iteration, r.agent_index, r.agent_name.c_str(), r.benchmark.c_str(), r.accuracy,
                      r.note.c_str());
        out << line;
    }
    return out.str();
}

void write_mod97_dataset(const fs::path& prompts_out, const fs::path& eval_out, const ToyOptions& options) {
    if (options.eval_count > options.train_count) {
        throw std::runtime_error("eval_count must not exceed train_count (eval rephrases trained operand pairs)");
    }
    SplitMix64 rng(options.seed);
    std::set<std::pair<int, int>> used;
    std::vector<std::pair<int, int>> operands;
    while (static_cast<int>(operands.size()) < options.train_count) {
        const int a = static_cast<int>(rng.next_below(97));
        const int b = static_cast<int>(rng.next_below(97));
        if (used.insert({a, b}).second) operands.push_back({a, b});
    }

    std::vector<PromptRecord> train;
    for (int i = 0; i < options.train_count; ++i) {
        const auto [a, b] = operands[static_cast<std::size_t>(i)];
        PromptRecord r;
        char id[32];
        std::snprintf(id, sizeof(id), "train-%04d", i + 1);
        r.id = id;
        r.question = "compute the sum mod 97 : " + std::to_string(a) + " " + std::to_string(b);
        r.gold_answer = std::to_string((a + b) % 97);
        r.source = DatasetSource::Synthetic;
        train.push_back(std::move(r));
    }

    // Eval rephrases a seeded subset of the trained operand pairs.
    std::vector<std::size_t> pick(operands.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    deterministic_shuffle(pick, rng);
    std::vector<PromptRecord> eval;
    for (int i = 0; i < options.eval_count; ++i) {
        const auto [a, b] = operands[pick[static_cast<std::size_t>(i)]];
        PromptRecord r;
        char id[32];
        std::snprintf(id, sizeof(id), "eval-%04d", i + 1);
        r.id = id;
        r.question = "what is the sum mod 97 : " + std::to_string(a) + " " + std::to_string(b);
        r.gold_answer = std::to_string((a + b) % 97);
        r.source = DatasetSource::Synthetic;
        eval.push_back(std::move(r));
    }

    write_jsonl(prompts_out, train);
    write_jsonl(eval_out, eval);
}

std::vector<AgentSpec> default_toy_agents() {
    std::vector<AgentSpec> agents;
    const double skills[] = {0.9, 0.6, 0.3};
    const char* names[] = {"ace", "mid", "rook"};
    for (int i = 0; i < 3; ++i) {
        AgentSpec spec;
        spec.id.index = i + 1;
        spec.id.name = names[i];
        spec.kind = AgentKind::Mock;
        spec.skill = skills[i];
        spec.style_seed = 1000 + static_cast<std::uint64_t>(i);
        spec.wrong_answer_modulus = 97;
        agents.push_back(std::move(spec));
    }
    return agents;
}

}  // namespace marspo
