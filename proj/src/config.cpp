#include "marspo/config.hpp"

#include <charconv>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "marspo/digest.hpp"
#include "marspo/jsonl.hpp"

namespace marspo {

namespace {

std::string escape_value(const std::string& v) {
    std::string out;
    for (char c : v) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c == '\n') {
            out += "\\n";
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string unescape_value(const std::string& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] == '\\' && i + 1 < v.size()) {
            ++i;
            if (v[i] == 'n') {
                out.push_back('\n');
            } else {
                out.push_back(v[i]);
            }
        } else {
            out.push_back(v[i]);
        }
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("expected boolean, got '" + v + "'");
}

double parse_double(const std::string& v) {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::runtime_error("trailing characters in number '" + v + "'");
    return d;
}

// Field registry: one definition drives parsing and canonical serialization.
struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<Field> field_table() {
    auto s = [](auto getter, auto setter) { return std::make_pair(getter, setter); };
    (void)s;
    std::vector<Field> f;
    auto add = [&f](std::string section, std::string key, std::function<std::string(const RunConfig&)> get,
                    std::function<void(RunConfig&, const std::string&)> set) {
        f.push_back(Field{std::move(section), std::move(key), std::move(get), std::move(set)});
    };

    add("run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); });
    add("run", "iterations", [](const RunConfig& c) { return std::to_string(c.iterations); },
        [](RunConfig& c, const std::string& v) { c.iterations = std::stoi(v); });
    add("run", "mode", [](const RunConfig& c) { return c.mode; },
        [](RunConfig& c, const std::string& v) { c.mode = v; });
    add("run", "out_dir", [](const RunConfig& c) { return c.out_dir; },
        [](RunConfig& c, const std::string& v) { c.out_dir = v; });
    add("run", "created_at", [](const RunConfig& c) { return c.created_at; },
        [](RunConfig& c, const std::string& v) { c.created_at = v; });

    add("dataset", "prompts", [](const RunConfig& c) { return c.prompts_path; },
        [](RunConfig& c, const std::string& v) { c.prompts_path = v; });
    add("dataset", "eval", [](const RunConfig& c) { return c.eval_path; },
        [](RunConfig& c, const std::string& v) { c.eval_path = v; });
    add("dataset", "source", [](const RunConfig& c) { return to_string(c.source); },
        [](RunConfig& c, const std::string& v) { c.source = dataset_source_from_string(v); });
    add("dataset", "benchmark", [](const RunConfig& c) { return c.benchmark; },
        [](RunConfig& c, const std::string& v) { c.benchmark = v; });

    add("agents", "manifest", [](const RunConfig& c) { return c.agents_manifest; },
        [](RunConfig& c, const std::string& v) { c.agents_manifest = v; });

    add("answer_format", "kind", [](const RunConfig& c) { return to_string(c.answer_format.kind); },
        [](RunConfig& c, const std::string& v) { c.answer_format.kind = answer_format_kind_from_string(v); });
    add("answer_format", "pattern", [](const RunConfig& c) { return c.answer_format.pattern; },
        [](RunConfig& c, const std::string& v) {
            if (v.empty()) throw std::runtime_error("answer_format.pattern must not be empty");
            c.answer_format.pattern = v;
        });

    add("sampling", "n_gsm8k", [](const RunConfig& c) { return std::to_string(c.sampling.n_gsm8k); },
        [](RunConfig& c, const std::string& v) { c.sampling.n_gsm8k = std::stoi(v); });
    add("sampling", "n_math", [](const RunConfig& c) { return std::to_string(c.sampling.n_math); },
        [](RunConfig& c, const std::string& v) { c.sampling.n_math = std::stoi(v); });
    add("sampling", "n_synthetic", [](const RunConfig& c) { return std::to_string(c.sampling.n_synthetic); },
        [](RunConfig& c, const std::string& v) { c.sampling.n_synthetic = std::stoi(v); });
    add("sampling", "max_tokens", [](const RunConfig& c) { return std::to_string(c.sampling.max_tokens); },
        [](RunConfig& c, const std::string& v) { c.sampling.max_tokens = std::stoi(v); });
    add("sampling", "temperature_iter1",
        [](const RunConfig& c) { return format_double(c.sampling.temperature_iter1); },
        [](RunConfig& c, const std::string& v) { c.sampling.temperature_iter1 = parse_double(v); });
    add("sampling", "temperature_iter2",
        [](const RunConfig& c) { return format_double(c.sampling.temperature_iter2); },
        [](RunConfig& c, const std::string& v) { c.sampling.temperature_iter2 = parse_double(v); });
    add("sampling", "temperature_iter3",
        [](const RunConfig& c) { return format_double(c.sampling.temperature_iter3); },
        [](RunConfig& c, const std::string& v) { c.sampling.temperature_iter3 = parse_double(v); });
    add("sampling", "prompt_template", [](const RunConfig& c) { return c.prompt_template; },
        [](RunConfig& c, const std::string& v) { c.prompt_template = v; });
    add("sampling", "timeout_ms", [](const RunConfig& c) { return std::to_string(c.sampling_timeout_ms); },
        [](RunConfig& c, const std::string& v) { c.sampling_timeout_ms = std::stoi(v); });
    add("sampling", "max_in_flight", [](const RunConfig& c) { return std::to_string(c.sampling_max_in_flight); },
        [](RunConfig& c, const std::string& v) { c.sampling_max_in_flight = std::stoi(v); });
    add("sampling", "retries", [](const RunConfig& c) { return std::to_string(c.sampling_retries); },
        [](RunConfig& c, const std::string& v) { c.sampling_retries = std::stoi(v); });

    add("reward", "mode", [](const RunConfig& c) { return c.reward_mode; },
        [](RunConfig& c, const std::string& v) {
            if (v != "stub" && v != "live") throw std::runtime_error("reward mode must be stub or live");
            c.reward_mode = v;
        });
    add("reward", "w_length", [](const RunConfig& c) { return format_double(c.stub.w_length); },
        [](RunConfig& c, const std::string& v) { c.stub.w_length = parse_double(v); });
    add("reward", "w_format", [](const RunConfig& c) { return format_double(c.stub.w_format); },
        [](RunConfig& c, const std::string& v) { c.stub.w_format = parse_double(v); });
    add("reward", "w_jitter", [](const RunConfig& c) { return format_double(c.stub.w_jitter); },
        [](RunConfig& c, const std::string& v) { c.stub.w_jitter = parse_double(v); });
    add("reward", "jitter_seed", [](const RunConfig& c) { return std::to_string(c.stub.seed); },
        [](RunConfig& c, const std::string& v) { c.stub.seed = std::stoull(v); });
    add("reward", "timeout_ms", [](const RunConfig& c) { return std::to_string(c.reward_timeout_ms); },
        [](RunConfig& c, const std::string& v) { c.reward_timeout_ms = std::stoi(v); });
    add("reward", "max_in_flight", [](const RunConfig& c) { return std::to_string(c.reward_max_in_flight); },
        [](RunConfig& c, const std::string& v) { c.reward_max_in_flight = std::stoi(v); });

    add("pairs", "budget", [](const RunConfig& c) { return std::to_string(c.pair_budget); },
        [](RunConfig& c, const std::string& v) { c.pair_budget = std::stoi(v); });
    add("pairs", "capacity", [](const RunConfig& c) { return std::to_string(c.hybrid_capacity); },
        [](RunConfig& c, const std::string& v) { c.hybrid_capacity = std::stoi(v); });
    add("pairs", "dedup", [](const RunConfig& c) { return c.dedup ? "true" : "false"; },
        [](RunConfig& c, const std::string& v) { c.dedup = parse_bool(v); });
    add("pairs", "shuffle", [](const RunConfig& c) { return c.shuffle_pairs ? "true" : "false"; },
        [](RunConfig& c, const std::string& v) { c.shuffle_pairs = parse_bool(v); });

    add("train", "alpha", [](const RunConfig& c) { return format_double(c.alpha); },
        [](RunConfig& c, const std::string& v) { c.alpha = parse_double(v); });
    add("train", "epochs", [](const RunConfig& c) { return std::to_string(c.epochs); },
        [](RunConfig& c, const std::string& v) { c.epochs = std::stoi(v); });
    add("train", "batch_size", [](const RunConfig& c) { return std::to_string(c.batch_size); },
        [](RunConfig& c, const std::string& v) { c.batch_size = std::stoi(v); });
    add("train", "learning_rate", [](const RunConfig& c) { return format_double(c.learning_rate); },
        [](RunConfig& c, const std::string& v) { c.learning_rate = parse_double(v); });
    add("train", "paper_learning_rate", [](const RunConfig& c) { return format_double(c.paper_learning_rate); },
        [](RunConfig& c, const std::string& v) { c.paper_learning_rate = parse_double(v); });
    add("train", "optimizer", [](const RunConfig& c) { return c.optimizer; },
        [](RunConfig& c, const std::string& v) {
            if (v != "gd" && v != "adamw") throw std::runtime_error("optimizer must be gd or adamw");
            c.optimizer = v;
        });

    add("schedule", "beta_iter1", [](const RunConfig& c) { return format_double(c.beta_iter1); },
        [](RunConfig& c, const std::string& v) { c.beta_iter1 = parse_double(v); });
    add("schedule", "beta_iter2", [](const RunConfig& c) { return format_double(c.beta_iter2); },
        [](RunConfig& c, const std::string& v) { c.beta_iter2 = parse_double(v); });
    add("schedule", "beta_iter3", [](const RunConfig& c) { return format_double(c.beta_iter3); },
        [](RunConfig& c, const std::string& v) { c.beta_iter3 = parse_double(v); });

    add("policy", "order", [](const RunConfig& c) { return std::to_string(c.policy_order); },
        [](RunConfig& c, const std::string& v) { c.policy_order = std::stoi(v); });
    add("policy", "vocab", [](const RunConfig& c) { return c.vocab_spec; },
        [](RunConfig& c, const std::string& v) { c.vocab_spec = v; });
    add("policy", "max_decode_tokens", [](const RunConfig& c) { return std::to_string(c.max_decode_tokens); },
        [](RunConfig& c, const std::string& v) { c.max_decode_tokens = std::stoi(v); });
    add("policy", "init_sigma", [](const RunConfig& c) { return format_double(c.init_sigma); },
        [](RunConfig& c, const std::string& v) { c.init_sigma = parse_double(v); });

    return f;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    const auto fields = field_table();
    std::map<std::pair<std::string, std::string>, const Field*> lookup;
    std::map<std::string, bool> known_sections;
    for (const auto& f : fields) {
        lookup[{f.section, f.key}] = &f;
        known_sections[f.section] = true;
    }

    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (!known_sections.count(section)) {
                throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown section [" +
                                         section + "]");
            }
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = unescape_value(trim(t.substr(eq + 1)));
        auto it = lookup.find({section, key});
        if (it == lookup.end()) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key " + section +
                                     "." + key);
        }
        try {
            it->second->set(base, value);
        } catch (const std::exception& e) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    const auto fields = field_table();
    std::string out;
    std::string section;
    for (const auto& f : fields) {
        if (f.section != section) {
            if (!out.empty()) out += "\n";
            out += "[" + f.section + "]\n";
            section = f.section;
        }
        out += f.key + " = " + escape_value(f.get(cfg)) + "\n";
    }
    return out;
}

std::string config_digest(const RunConfig& cfg) { return sha256_hex(serialize_config(cfg)); }

std::string resolve_created_at(const RunConfig& cfg) {
    if (!cfg.created_at.empty()) return cfg.created_at;
    std::time_t t;
    if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
        t = static_cast<std::time_t>(std::stoll(sde));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

TokenVocab load_vocab(const RunConfig& cfg) {
    const std::string& spec = cfg.vocab_spec;
    if (spec == "preset:mod97") return mod97_vocab();
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open vocab file " + path);
        std::vector<std::string> words;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) words.push_back(line);
        }
        return TokenVocab::build(words);
    }
    throw std::runtime_error("unknown vocab spec: " + spec);
}

}  // namespace marspo
