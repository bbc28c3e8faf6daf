#include "marspo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "marspo/rng.hpp"

namespace marspo {

namespace {

double neg_log_sigmoid(double x) {
    if (x >= 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

double sigmoid_neg(double z) {
    // sigma(-z), stable for large |z|
    if (z >= 0.0) {
        const double t = std::exp(-z);
        return t / (1.0 + t);
    }
    return 1.0 / (1.0 + std::exp(z));
}

void check_tokens(const PolicySnapshot& model, std::span<const int> tokens) {
    for (int t : tokens) {
        if (t < 0 || t >= model.vsize()) {
            throw std::runtime_error("token id " + std::to_string(t) + " outside vocab of size " +
                                     std::to_string(model.vsize()));
        }
    }
}

double log_softmax_at(const PolicySnapshot& model, std::size_t row, int token) {
    const double* r = model.row(row);
    const int v = model.vsize();
    double m = r[0];
    for (int i = 1; i < v; ++i) m = std::max(m, r[i]);
    double s = 0.0;
    for (int i = 0; i < v; ++i) s += std::exp(r[i] - m);
    return r[token] - m - std::log(s);
}

void softmax_row(const PolicySnapshot& model, std::size_t row, std::vector<double>& out) {
    const double* r = model.row(row);
    const int v = model.vsize();
    out.resize(static_cast<std::size_t>(v));
    double m = r[0];
    for (int i = 1; i < v; ++i) m = std::max(m, r[i]);
    double s = 0.0;
    for (int i = 0; i < v; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(r[i] - m);
        s += out[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < v; ++i) out[static_cast<std::size_t>(i)] /= s;
}

void require_pair_shapes(const PolicySnapshot& policy, const PolicySnapshot& reference) {
    if (!policy.same_shape(reference)) {
        throw std::runtime_error("policy and reference must share vocab and order");
    }
}

// Adds weight * d(seq_logprob)/d(theta) for one response walk into g,
// tracking which rows were touched.
void accumulate_walk(const PolicySnapshot& policy, std::span<const int> prompt, std::span<const int> response,
                     double weight, std::vector<double>& g, std::vector<std::size_t>& touched,
                     std::vector<double>& scratch) {
    const int v = policy.vsize();
    ContextWindow ctx(v, policy.order);
    for (int t : prompt) ctx.push(t);
    for (int tok : response) {
        const std::size_t row = ctx.row();
        softmax_row(policy, row, scratch);
        double* grow = g.data() + row * static_cast<std::size_t>(v);
        for (int i = 0; i < v; ++i) grow[i] -= weight * scratch[static_cast<std::size_t>(i)];
        grow[tok] += weight;
        touched.push_back(row);
        ctx.push(tok);
    }
}

struct PairTerms {
    double loss = 0.0;
    double w_chosen = 0.0;    // multiplier on grad of chosen seq_logprob
    double w_rejected = 0.0;  // multiplier on grad of rejected seq_logprob
};

PairTerms pair_terms(const PolicySnapshot& policy, const PolicySnapshot& reference, const TokenizedPair& pair,
                     const TrainConfig& cfg) {
    PairTerms out;
    const double len = static_cast<double>(pair.chosen.size());
    if (pair.chosen.empty()) throw std::runtime_error("empty chosen response in training pair");
    if (cfg.use_dpo) {
        if (pair.rejected.empty()) throw std::runtime_error("DPO objective requires a rejected response");
        const double pw = seq_logprob(policy, pair.prompt, pair.chosen);
        const double rw = seq_logprob(reference, pair.prompt, pair.chosen);
        const double pl = seq_logprob(policy, pair.prompt, pair.rejected);
        const double rl = seq_logprob(reference, pair.prompt, pair.rejected);
        const double z = cfg.beta * ((pw - rw) - (pl - rl));
        out.loss = neg_log_sigmoid(z) + cfg.alpha * (-pw / len);
        const double s = sigmoid_neg(z);
        out.w_chosen = -s * cfg.beta - cfg.alpha / len;
        out.w_rejected = s * cfg.beta;
    } else {
        const double pw = seq_logprob(policy, pair.prompt, pair.chosen);
        out.loss = -pw / len;
        out.w_chosen = -1.0 / len;
        out.w_rejected = 0.0;
    }
    return out;
}

double batch_loss_and_grad(const PolicySnapshot& policy, const PolicySnapshot& reference,
                           std::span<const TokenizedPair> batch, const TrainConfig& cfg, std::vector<double>& g,
                           std::vector<std::size_t>& touched, std::vector<double>& scratch) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& pair : batch) {
        const PairTerms terms = pair_terms(policy, reference, pair, cfg);
        loss += terms.loss;
        accumulate_walk(policy, pair.prompt, pair.chosen, terms.w_chosen * inv_b, g, touched, scratch);
        if (cfg.use_dpo) {
            accumulate_walk(policy, pair.prompt, pair.rejected, terms.w_rejected * inv_b, g, touched, scratch);
        }
    }
    return loss * inv_b;
}

}  // namespace

double seq_logprob(const PolicySnapshot& model, std::span<const int> prompt_tokens,
                   std::span<const int> response_tokens) {
    check_tokens(model, prompt_tokens);
    check_tokens(model, response_tokens);
    ContextWindow ctx(model.vsize(), model.order);
    for (int t : prompt_tokens) ctx.push(t);
    double lp = 0.0;
    for (int t : response_tokens) {
        lp += log_softmax_at(model, ctx.row(), t);
        ctx.push(t);
    }
    return lp;
}

double dpo_loss(const PolicySnapshot& policy, const PolicySnapshot& reference, const TokenizedPair& pair,
                double beta) {
    require_pair_shapes(policy, reference);
    if (beta <= 0.0) throw std::runtime_error("beta must be positive");
    const double dw = seq_logprob(policy, pair.prompt, pair.chosen) -
                      seq_logprob(reference, pair.prompt, pair.chosen);
    const double dl = seq_logprob(policy, pair.prompt, pair.rejected) -
                      seq_logprob(reference, pair.prompt, pair.rejected);
    return neg_log_sigmoid(beta * (dw - dl));
}

double nll_loss(const PolicySnapshot& policy, const TokenizedPair& pair) {
    if (pair.chosen.empty()) throw std::runtime_error("nll_loss: empty chosen response");
    return -seq_logprob(policy, pair.prompt, pair.chosen) / static_cast<double>(pair.chosen.size());
}

double combined_loss(const PolicySnapshot& policy, const PolicySnapshot& reference,
                     std::span<const TokenizedPair> batch, const TrainConfig& config) {
    if (batch.empty()) throw std::runtime_error("combined_loss: empty batch");
    require_pair_shapes(policy, reference);
    double total = 0.0;
    for (const auto& pair : batch) {
        if (config.use_dpo) {
            total += dpo_loss(policy, reference, pair, config.beta) + config.alpha * nll_loss(policy, pair);
        } else {
            total += nll_loss(policy, pair);
        }
    }
    return total / static_cast<double>(batch.size());
}

std::vector<double> grad(const PolicySnapshot& policy, const PolicySnapshot& reference,
                         std::span<const TokenizedPair> batch, const TrainConfig& config) {
    if (batch.empty()) throw std::runtime_error("grad: empty batch");
    require_pair_shapes(policy, reference);
    std::vector<double> g(policy.params.size(), 0.0);
    std::vector<std::size_t> touched;
    std::vector<double> scratch;
    batch_loss_and_grad(policy, reference, batch, config, g, touched, scratch);
    return g;
}

TrainResult train(const PolicySnapshot& policy, const std::vector<TokenizedPair>& data, const TrainConfig& config) {
    if (data.empty()) throw std::runtime_error("train: empty dataset");
    if (config.batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
    if (config.epochs < 0) throw std::runtime_error("train: negative epochs");

    const PolicySnapshot reference = policy;  // frozen copy, taken once
    TrainResult result;
    result.policy = policy;

    const int v = result.policy.vsize();
    std::vector<double> g(result.policy.params.size(), 0.0);
    std::vector<std::size_t> touched;
    std::vector<double> scratch;
    std::vector<double> adam_m, adam_v;
    if (config.optimizer == OptimizerKind::AdamW) {
        adam_m.assign(result.policy.params.size(), 0.0);
        adam_v.assign(result.policy.params.size(), 0.0);
    }

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(config.seed);

    std::vector<TokenizedPair> batch;
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        deterministic_shuffle(order, rng);
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = at; i < end; ++i) batch.push_back(data[order[i]]);

            touched.clear();
            const double loss = batch_loss_and_grad(result.policy, reference, batch, config, g, touched, scratch);
            ++step;
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
            }
            result.step_losses.push_back(loss);

            if (config.optimizer == OptimizerKind::GradientDescent) {
                for (std::size_t row : touched) {
                    double* p = result.policy.row(row);
                    const double* gr = g.data() + row * static_cast<std::size_t>(v);
                    for (int i = 0; i < v; ++i) p[i] -= config.learning_rate * gr[i];
                }
            } else {
                const double b1 = config.adam_beta1, b2 = config.adam_beta2;
                const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
                const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
                for (std::size_t i = 0; i < result.policy.params.size(); ++i) {
                    adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * g[i];
                    adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * g[i] * g[i];
                    const double mhat = adam_m[i] / bc1;
                    const double vhat = adam_v[i] / bc2;
                    result.policy.params[i] -=
                        config.learning_rate * (mhat / (std::sqrt(vhat) + config.adam_eps) +
                                                config.weight_decay * result.policy.params[i]);
                }
            }

            // Clear only the touched gradient rows; the buffer is reused.
            for (std::size_t row : touched) {
                double* gr = g.data() + row * static_cast<std::size_t>(v);
                std::fill(gr, gr + v, 0.0);
            }
        }
    }
    return result;
}

std::vector<int> greedy_decode(const PolicySnapshot& policy, std::span<const int> prompt_tokens,
                               int max_new_tokens) {
    check_tokens(policy, prompt_tokens);
    ContextWindow ctx(policy.vsize(), policy.order);
    for (int t : prompt_tokens) ctx.push(t);
    std::vector<int> out;
    for (int n = 0; n < max_new_tokens; ++n) {
        const double* r = policy.row(ctx.row());
        int best = 0;
        for (int i = 1; i < policy.vsize(); ++i) {
            if (r[i] > r[best]) best = i;
        }
        if (best == TokenVocab::kEnd) break;
        out.push_back(best);
        ctx.push(best);
    }
    return out;
}

double greedy_eval(const PolicySnapshot& policy, const std::vector<PromptRecord>& eval_set,
                   const AnswerFormat& format, const std::string& prompt_template, int max_new_tokens) {
    if (eval_set.empty()) {
        std::cerr << "warning: greedy_eval called with an empty eval set; accuracy defined as 0.0\n";
        return 0.0;
    }
    int correct = 0;
    for (const auto& prompt : eval_set) {
        const std::string rendered = render_prompt(prompt_template, prompt.question);
        const std::vector<int> ids = tokenize(policy.vocab, rendered, /*allow_unknown=*/true);
        const std::vector<int> decoded = greedy_decode(policy, ids, max_new_tokens);
        const std::string text = detokenize(policy.vocab, decoded);
        if (grade(text, normalize(prompt.gold_answer), format).correct) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

TokenizedPair tokenize_pair(const TokenVocab& vocab, const PreferencePair& pair,
                            const std::string& prompt_template) {
    TokenizedPair out;
    out.prompt = tokenize(vocab, render_prompt(prompt_template, pair.question), /*allow_unknown=*/false);
    out.chosen = tokenize(vocab, pair.chosen.cot, /*allow_unknown=*/false);
    out.chosen.push_back(TokenVocab::kEnd);
    out.rejected = tokenize(vocab, pair.rejected.cot, /*allow_unknown=*/false);
    out.rejected.push_back(TokenVocab::kEnd);
    return out;
}

TokenizedPair tokenize_sft(const TokenVocab& vocab, const SftRecord& record, const std::string& prompt_template) {
    TokenizedPair out;
    out.prompt = tokenize(vocab, render_prompt(prompt_template, record.question), /*allow_unknown=*/false);
    out.chosen = tokenize(vocab, record.text, /*allow_unknown=*/false);
    out.chosen.push_back(TokenVocab::kEnd);
    return out;
}

}  // namespace marspo
