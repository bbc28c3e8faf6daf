#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marspo/grader.hpp"
#include "marspo/policy.hpp"
#include "marspo/records.hpp"

namespace marspo {

// One tokenized training unit. `chosen`/`rejected` carry the terminal end
// symbol; an empty `rejected` marks a positive-only (SFT) example.
struct TokenizedPair {
    std::vector<int> prompt;
    std::vector<int> chosen;
    std::vector<int> rejected;
};

enum class OptimizerKind { GradientDescent, AdamW };

struct TrainConfig {
    double alpha = 1.0;  // weight of the length-normalized NLL term
    double beta = 0.1;   // DPO temperature
    int epochs = 3;
    int batch_size = 16;
    double learning_rate = 1e-2;
    std::uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::GradientDescent;
    bool use_dpo = true;  // false: positive-only objective (mean NLL)
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
};

// Exact sequence log-probability of `response` given `prompt` under the
// categorical table policy; sum over response positions of log softmax. Empty
// response gives 0. Out-of-range token ids raise, naming the id.
double seq_logprob(const PolicySnapshot& model, std::span<const int> prompt_tokens,
                   std::span<const int> response_tokens);

// -log sigma(beta * (margin_chosen - margin_rejected)) with margins measured
// against the frozen reference. Strictly positive; exactly ln 2 when policy
// and reference coincide.
double dpo_loss(const PolicySnapshot& policy, const PolicySnapshot& reference, const TokenizedPair& pair,
                double beta);

// Length-normalized negative log-likelihood of the chosen response.
double nll_loss(const PolicySnapshot& policy, const TokenizedPair& pair);

// Batch mean of dpo + alpha * nll (or of nll alone when use_dpo is false).
double combined_loss(const PolicySnapshot& policy, const PolicySnapshot& reference,
                     std::span<const TokenizedPair> batch, const TrainConfig& config);

// Exact analytic gradient of combined_loss with respect to the policy
// parameters, shaped like params. The reference is frozen and receives none.
std::vector<double> grad(const PolicySnapshot& policy, const PolicySnapshot& reference,
                         std::span<const TokenizedPair> batch, const TrainConfig& config);

struct TrainResult {
    PolicySnapshot policy;
    std::vector<double> step_losses;  // one combined-loss value per step
};

// Freezes the input policy as the reference, then runs
// epochs * ceil(|data|/batch_size) first-order steps with a seeded shuffle per
// epoch. Deterministic under a fixed seed; aborts on non-finite loss.
TrainResult train(const PolicySnapshot& policy, const std::vector<TokenizedPair>& data, const TrainConfig& config);

// Argmax decoding (ties resolve to the lowest token index) until the end
// symbol or max_new_tokens.
std::vector<int> greedy_decode(const PolicySnapshot& policy, std::span<const int> prompt_tokens,
                               int max_new_tokens);

// Fraction of eval prompts whose greedy decode grades correct. An empty eval
// set is defined as 0.0 and warned about.
double greedy_eval(const PolicySnapshot& policy, const std::vector<PromptRecord>& eval_set,
                   const AnswerFormat& format, const std::string& prompt_template, int max_new_tokens);

TokenizedPair tokenize_pair(const TokenVocab& vocab, const PreferencePair& pair,
                            const std::string& prompt_template);
TokenizedPair tokenize_sft(const TokenVocab& vocab, const SftRecord& record, const std::string& prompt_template);

}  // namespace marspo
