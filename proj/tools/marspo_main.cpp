// marspo: sample, grade, score and pair multi-agent responses, then train and
// evaluate the desk-scale policy, per stage or as full iterations.

#include <CLI11.hpp>

#include <iostream>

#include "marspo/config.hpp"
#include "marspo/driver.hpp"
#include "marspo/jsonl.hpp"
#include "marspo/pairs.hpp"
#include "marspo/reward.hpp"
#include "marspo/rng.hpp"
#include "marspo/sampler.hpp"
#include "marspo/trainer.hpp"

using namespace marspo;

namespace {

int run_synth(const std::string& prompts_out, const std::string& eval_out, const std::string& agents_out,
              int train_count, int eval_count, std::uint64_t seed) {
    ToyOptions opt;
    opt.train_count = train_count;
    opt.eval_count = eval_count;
    opt.seed = seed;
    write_mod97_dataset(prompts_out, eval_out, opt);
    if (!agents_out.empty()) write_jsonl(agents_out, default_toy_agents());
    std::cout << "wrote " << train_count << " train prompts, " << eval_count << " eval prompts\n";
    return 0;
}

int run_generate(const std::string& config_path, int iteration, const std::string& agents_path,
                 const std::string& prompts_path, const std::string& out_path) {
    const RunConfig cfg = load_config(config_path);
    const auto agents = read_jsonl<AgentSpec>(agents_path);
    const auto prompts = read_dataset(prompts_path);
    const SamplingPlan plan =
        plan_for_iteration(iteration, cfg.source, cfg.sampling, mix64(cfg.seed, static_cast<std::uint64_t>(iteration)));
    CompletionClient client;
    client.timeout = std::chrono::milliseconds(cfg.sampling_timeout_ms);
    client.max_in_flight = cfg.sampling_max_in_flight;
    client.retries = cfg.sampling_retries;
    const auto samples =
        generate_graded_samples(agents, prompts, plan, cfg.answer_format, cfg.prompt_template, client);
    write_jsonl(out_path, samples);
    std::cout << "wrote " << samples.size() << " graded samples (N=" << plan.n_samples
              << ", temperature=" << plan.temperature << ")\n";
    return 0;
}

int run_score(const std::string& config_path, const std::string& samples_path, const std::string& out_path,
              bool stub, const std::string& prompts_path) {
    const RunConfig cfg = load_config(config_path);
    auto samples = read_jsonl<GradedSample>(samples_path);
    if (stub) {
        score_samples_stub(samples, cfg.stub, cfg.answer_format);
    } else {
        if (prompts_path.empty()) {
            throw std::runtime_error("live scoring needs --prompts to resolve question texts");
        }
        const auto prompts = read_dataset(prompts_path);
        RewardClient rc;
        rc.endpoint = reward_endpoint_from_env();
        rc.auth_token = reward_token_from_env();
        rc.timeout = std::chrono::milliseconds(cfg.reward_timeout_ms);
        rc.max_in_flight = cfg.reward_max_in_flight;
        HttpRewardService service(rc);
        score_samples_live(samples, prompts, service, cfg.reward_max_in_flight);
    }
    write_jsonl(out_path, samples);
    std::cout << "scored " << samples.size() << " samples\n";
    return 0;
}

int run_pairs(const std::string& config_path, const std::string& samples_path, const std::string& prompts_path,
              const std::string& mode_str, int budget, int capacity, const std::string& out_path) {
    const RunConfig cfg = load_config(config_path);
    const auto samples = read_jsonl<GradedSample>(samples_path);
    const auto prompts = read_dataset(prompts_path);
    const PairMode mode = pair_mode_from_string(mode_str);
    const auto stage = build_pair_dataset(samples, prompts, mode, budget, capacity, cfg.seed, cfg.dedup,
                                          cfg.shuffle_pairs);
    if (mode == PairMode::Sft) {
        write_jsonl(out_path, stage.sft);
        std::cout << "wrote " << stage.sft.size() << " sft lines\n";
    } else {
        verify_pair_references(stage.pairs, samples);
        write_jsonl(out_path, stage.pairs);
        std::cout << "wrote " << stage.pairs.size() << " preference pairs\n";
    }
    if (stage.prompts_without_positives > 0) {
        std::cout << stage.prompts_without_positives << " prompt(s) had no positives and were skipped\n";
    }
    return 0;
}

int run_train(const std::string& config_path, const std::string& pairs_path, const std::string& policy_in,
              const std::string& policy_out, double alpha, double beta, int epochs, int batch, double lr,
              const std::string& objective, std::uint64_t seed) {
    const RunConfig cfg = load_config(config_path);
    const TokenVocab vocab = load_vocab(cfg);
    PolicySnapshot policy = load_policy(policy_in, vocab);

    std::vector<TokenizedPair> data;
    if (objective == "nll") {
        for (const auto& rec : read_jsonl<SftRecord>(pairs_path)) {
            data.push_back(tokenize_sft(vocab, rec, cfg.prompt_template));
        }
    } else {
        for (const auto& p : read_jsonl<PreferencePair>(pairs_path)) {
            data.push_back(tokenize_pair(vocab, p, cfg.prompt_template));
        }
    }

    TrainConfig tc;
    tc.alpha = alpha;
    tc.beta = beta;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.learning_rate = lr;
    tc.seed = seed;
    tc.use_dpo = objective != "nll";
    tc.optimizer = cfg.optimizer == "adamw" ? OptimizerKind::AdamW : OptimizerKind::GradientDescent;

    const TrainResult result = train(policy, data, tc);
    save_policy(policy_out, result.policy);
    std::cout << "trained on " << data.size() << " examples for " << result.step_losses.size() << " steps";
    if (!result.step_losses.empty()) {
        std::cout << "; loss " << result.step_losses.front() << " -> " << result.step_losses.back();
    }
    std::cout << "\n";
    return 0;
}

int run_eval(const std::string& config_path, const std::string& policy_path, const std::string& prompts_path) {
    const RunConfig cfg = load_config(config_path);
    const TokenVocab vocab = load_vocab(cfg);
    const PolicySnapshot policy = load_policy(policy_path, vocab);
    const auto prompts = read_dataset(prompts_path);
    const double acc = greedy_eval(policy, prompts, cfg.answer_format, cfg.prompt_template, cfg.max_decode_tokens);
    std::cout << "accuracy " << acc << " over " << prompts.size() << " prompts\n";
    return 0;
}

int run_iterate(const std::string& config_path, const std::string& mode_str, int iterations) {
    RunConfig cfg = load_config(config_path);
    if (!mode_str.empty()) cfg.mode = mode_str;
    if (iterations > 0) cfg.iterations = iterations;
    Pipeline pipeline(cfg);
    const auto rows = pipeline.run(pair_mode_from_string(cfg.mode));
    std::cout << render_report_table(rows);
    return 0;
}

int run_compare(const std::string& config_path) {
    const RunConfig cfg = load_config(config_path);
    compare_modes(cfg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-agent preference-optimization pipeline"};
    app.require_subcommand(1);

    // synth
    std::string sy_prompts = "data/prompts.jsonl", sy_eval = "data/eval.jsonl", sy_agents;
    int sy_train = 60, sy_eval_n = 40;
    std::uint64_t sy_seed = 7;
    auto* synth = app.add_subcommand("synth", "generate the synthetic modular-sum dataset");
    synth->add_option("--prompts", sy_prompts, "output path for train prompts");
    synth->add_option("--eval", sy_eval, "output path for eval prompts");
    synth->add_option("--agents", sy_agents, "optional output path for a default mock-agent manifest");
    synth->add_option("--train-count", sy_train);
    synth->add_option("--eval-count", sy_eval_n);
    synth->add_option("--seed", sy_seed);

    // generate
    std::string g_config, g_agents, g_prompts, g_out = "samples.jsonl";
    int g_iteration = 1;
    auto* generate = app.add_subcommand("generate", "sample and grade responses from every agent");
    generate->add_option("--config", g_config)->required();
    generate->add_option("--iteration", g_iteration)->required();
    generate->add_option("--agents", g_agents)->required();
    generate->add_option("--prompts", g_prompts)->required();
    generate->add_option("--out", g_out)->required();

    // score
    std::string s_config, s_samples, s_out = "samples.scored.jsonl", s_prompts;
    bool s_stub = false;
    auto* score = app.add_subcommand("score", "attach reward scores to correct samples");
    score->add_option("--config", s_config)->required();
    score->add_option("--samples", s_samples)->required();
    score->add_option("--out", s_out)->required();
    score->add_flag("--stub", s_stub, "use the deterministic stub scorer");
    score->add_option("--prompts", s_prompts, "prompt records (needed for live scoring)");

    // pairs
    std::string p_config, p_samples, p_prompts, p_mode = "marspo", p_out = "pairs.jsonl";
    int p_budget = 15, p_capacity = 5;
    auto* pairs = app.add_subcommand("pairs", "build the preference-pair (or sft) dataset");
    pairs->add_option("--config", p_config)->required();
    pairs->add_option("--samples", p_samples)->required();
    pairs->add_option("--prompts", p_prompts)->required();
    pairs->add_option("--mode", p_mode)->check(CLI::IsMember({"marspo", "vanilla", "dpo_nll", "sft"}));
    pairs->add_option("--budget", p_budget);
    pairs->add_option("--capacity", p_capacity);
    pairs->add_option("--out", p_out)->required();

    // train
    std::string t_config, t_pairs, t_in, t_out, t_objective = "dpo_nll";
    double t_alpha = 1.0, t_beta = 0.1, t_lr = 0.01;
    int t_epochs = 3, t_batch = 16;
    std::uint64_t t_seed = 1;
    auto* train_cmd = app.add_subcommand("train", "train a policy on a pairs (or sft) file");
    train_cmd->add_option("--config", t_config)->required();
    train_cmd->add_option("--pairs", t_pairs)->required();
    train_cmd->add_option("--policy-in", t_in)->required();
    train_cmd->add_option("--policy-out", t_out)->required();
    train_cmd->add_option("--alpha", t_alpha);
    train_cmd->add_option("--beta", t_beta);
    train_cmd->add_option("--epochs", t_epochs);
    train_cmd->add_option("--batch", t_batch);
    train_cmd->add_option("--lr", t_lr);
    train_cmd->add_option("--seed", t_seed);
    train_cmd->add_option("--objective", t_objective)->check(CLI::IsMember({"dpo_nll", "nll"}));

    // eval
    std::string e_config, e_policy, e_prompts;
    auto* eval_cmd = app.add_subcommand("eval", "greedy-decode a policy over an eval set");
    eval_cmd->add_option("--config", e_config)->required();
    eval_cmd->add_option("--policy", e_policy)->required();
    eval_cmd->add_option("--prompts", e_prompts)->required();

    // iterate
    std::string i_config, i_mode;
    int i_iterations = 0;
    auto* iterate = app.add_subcommand("iterate", "run full training iterations");
    iterate->add_option("--config", i_config)->required();
    iterate->add_option("--mode", i_mode)->check(CLI::IsMember({"marspo", "vanilla", "dpo_nll", "sft"}));
    iterate->add_option("--iterations", i_iterations);

    // compare
    std::string c_config;
    auto* compare = app.add_subcommand("compare", "run all four modes and tabulate accuracies");
    compare->add_option("--config", c_config)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(sy_prompts, sy_eval, sy_agents, sy_train, sy_eval_n, sy_seed);
        if (generate->parsed()) return run_generate(g_config, g_iteration, g_agents, g_prompts, g_out);
        if (score->parsed()) return run_score(s_config, s_samples, s_out, s_stub, s_prompts);
        if (pairs->parsed()) return run_pairs(p_config, p_samples, p_prompts, p_mode, p_budget, p_capacity, p_out);
        if (train_cmd->parsed())
            return run_train(t_config, t_pairs, t_in, t_out, t_alpha, t_beta, t_epochs, t_batch, t_lr,
                             t_objective, t_seed);
        if (eval_cmd->parsed()) return run_eval(e_config, e_policy, e_prompts);
        if (iterate->parsed()) return run_iterate(i_config, i_mode, i_iterations);
        if (compare->parsed()) return run_compare(c_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
