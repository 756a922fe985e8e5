#include "dpin/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace dpin::harness {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

double parse_double(const std::string& where, const std::string& v) {
    double out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
        throw ConfigError(where + ": bad real number '" + v + "'");
    return out;
}

long long parse_ll(const std::string& where, const std::string& v) {
    long long out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(where + ": bad integer '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& where, const std::string& v) {
    std::uint64_t out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(where + ": bad unsigned integer '" + v + "'");
    return out;
}

bool parse_bool(const std::string& where, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(where + ": bad boolean '" + v + "' (use true/false)");
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct Field {
    std::string section, key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Ref>
Field make_field(const char* section, const char* key, Ref ref) {
    using T = std::remove_reference_t<decltype(ref(std::declval<ExperimentConfig&>()))>;
    Field f;
    f.section = section;
    f.key = key;
    const std::string where = std::string(section) + "." + key;
    if constexpr (std::is_same_v<T, int>) {
        f.set = [ref, where](ExperimentConfig& c, const std::string& v) {
            ref(c) = static_cast<int>(parse_ll(where, v));
        };
        f.get = [ref](const ExperimentConfig& c) {
            return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
        };
    } else if constexpr (std::is_same_v<T, double>) {
        f.set = [ref, where](ExperimentConfig& c, const std::string& v) {
            ref(c) = parse_double(where, v);
        };
        f.get = [ref](const ExperimentConfig& c) {
            return format_double(ref(const_cast<ExperimentConfig&>(c)));
        };
    } else if constexpr (std::is_same_v<T, bool>) {
        f.set = [ref, where](ExperimentConfig& c, const std::string& v) {
            ref(c) = parse_bool(where, v);
        };
        f.get = [ref](const ExperimentConfig& c) {
            return ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
        };
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        f.set = [ref, where](ExperimentConfig& c, const std::string& v) {
            ref(c) = parse_u64(where, v);
        };
        f.get = [ref](const ExperimentConfig& c) {
            return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
        };
    } else if constexpr (std::is_same_v<T, std::string>) {
        f.set = [ref](ExperimentConfig& c, const std::string& v) { ref(c) = v; };
        f.get = [ref](const ExperimentConfig& c) {
            return ref(const_cast<ExperimentConfig&>(c));
        };
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
        f.set = [ref, where](ExperimentConfig& c, const std::string& v) {
            std::vector<int> xs;
            for (const std::string& part : split_commas(v))
                xs.push_back(static_cast<int>(parse_ll(where, part)));
            ref(c) = std::move(xs);
        };
        f.get = [ref](const ExperimentConfig& c) {
            std::string out;
            for (int x : ref(const_cast<ExperimentConfig&>(c))) {
                if (!out.empty()) out += ",";
                out += std::to_string(x);
            }
            return out;
        };
    } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
        f.set = [ref, where](ExperimentConfig& c, const std::string& v) {
            std::vector<std::uint64_t> xs;
            for (const std::string& part : split_commas(v))
                xs.push_back(parse_u64(where, part));
            ref(c) = std::move(xs);
        };
        f.get = [ref](const ExperimentConfig& c) {
            std::string out;
            for (std::uint64_t x : ref(const_cast<ExperimentConfig&>(c))) {
                if (!out.empty()) out += ",";
                out += std::to_string(x);
            }
            return out;
        };
    }
    return f;
}

#define DPIN_FIELD(section, key, expr) \
    make_field(section, key, [](ExperimentConfig& c) -> decltype(auto) { return (expr); })

const std::vector<Field>& registry() {
    static const std::vector<Field> fields = {
        DPIN_FIELD("sim", "k", c.sim.k),
        DPIN_FIELD("sim", "max_pages", c.sim.max_pages),
        DPIN_FIELD("sim", "max_ads_per_page", c.sim.max_ads_per_page),
        DPIN_FIELD("sim", "user_population", c.sim.user_population),
        DPIN_FIELD("sim", "catalog_ads", c.sim.catalog_ads),
        DPIN_FIELD("sim", "catalog_organics", c.sim.catalog_organics),
        DPIN_FIELD("sim", "candidate_ads", c.sim.candidate_ads),
        DPIN_FIELD("sim", "candidate_organics", c.sim.candidate_organics),
        DPIN_FIELD("sim", "contexts", c.sim.contexts),
        DPIN_FIELD("sim", "interaction_strength", c.sim.interaction_strength),
        DPIN_FIELD("sim", "ad_fatigue", c.sim.ad_fatigue),
        DPIN_FIELD("sim", "pulldown_base", c.sim.pulldown_base),
        DPIN_FIELD("sim", "ad_pulldown_penalty", c.sim.ad_pulldown_penalty),
        DPIN_FIELD("sim", "affinity_bias", c.sim.affinity_bias),
        DPIN_FIELD("sim", "affinity_spread", c.sim.affinity_spread),
        DPIN_FIELD("sim", "bid_min", c.sim.bid_min),
        DPIN_FIELD("sim", "bid_max", c.sim.bid_max),
        DPIN_FIELD("sim", "price_min", c.sim.price_min),
        DPIN_FIELD("sim", "price_max", c.sim.price_max),
        DPIN_FIELD("sim", "fee_min", c.sim.fee_min),
        DPIN_FIELD("sim", "fee_max", c.sim.fee_max),
        DPIN_FIELD("sim", "order_rate_min", c.sim.order_rate_min),
        DPIN_FIELD("sim", "order_rate_max", c.sim.order_rate_max),
        DPIN_FIELD("sim", "history_window", c.sim.history_window),
        DPIN_FIELD("sim", "warmup_requests", c.sim.warmup_requests),
        DPIN_FIELD("sim", "log_requests", c.sim.log_requests),
        DPIN_FIELD("sim", "seed", c.sim.seed),
        DPIN_FIELD("model", "channels", c.model.channels),
        DPIN_FIELD("model", "seq_len", c.model.seq_len),
        DPIN_FIELD("model", "n_kernels", c.model.n_kernels),
        DPIN_FIELD("model", "heads", c.model.heads),
        DPIN_FIELD("model", "mlp1", c.model.mlp1),
        DPIN_FIELD("model", "mlp2", c.model.mlp2),
        DPIN_FIELD("model", "mlp3", c.model.mlp3),
        DPIN_FIELD("model", "d_item", c.model.dims.d_item),
        DPIN_FIELD("model", "d_pos", c.model.dims.d_pos),
        DPIN_FIELD("model", "d_fb", c.model.dims.d_fb),
        DPIN_FIELD("model", "d_user", c.model.dims.d_user),
        DPIN_FIELD("model", "d_ctx", c.model.dims.d_ctx),
        DPIN_FIELD("model", "no_cl", c.model.ablation.no_cl),
        DPIN_FIELD("model", "no_ipau", c.model.ablation.no_ipau),
        DPIN_FIELD("model", "no_ipiu", c.model.ablation.no_ipiu),
        DPIN_FIELD("model", "no_mcim", c.model.ablation.no_mcim),
        DPIN_FIELD("model", "drop_pulldown_leave", c.model.ablation.drop_pulldown_leave),
        DPIN_FIELD("model", "drop_click", c.model.ablation.drop_click),
        DPIN_FIELD("training", "learning_rate", c.training.hyper.learning_rate),
        DPIN_FIELD("training", "batch_size", c.training.hyper.batch_size),
        DPIN_FIELD("training", "gamma", c.training.hyper.gamma),
        DPIN_FIELD("training", "tau", c.training.hyper.tau),
        DPIN_FIELD("training", "seed", c.training.hyper.seed),
        DPIN_FIELD("training", "epochs", c.training.epochs),
        DPIN_FIELD("training", "target_update", c.training.target_update),
        DPIN_FIELD("training", "hard_sync_every", c.training.hard_sync_every),
        DPIN_FIELD("training", "eval_every", c.training.eval_every),
        DPIN_FIELD("eval", "episodes", c.eval.episodes),
        DPIN_FIELD("eval", "seed", c.eval.seed),
        DPIN_FIELD("eval", "output_dir", c.eval.output_dir),
        DPIN_FIELD("eval", "ablation_name", c.eval.ablation_name),
        DPIN_FIELD("eval", "ablation_seeds", c.eval.ablation_seeds),
    };
    return fields;
}

#undef DPIN_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
    for (const Field& f : registry())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header '" + t + "'");
            section = trim(t.substr(1, t.size() - 2));
            if (section != "sim" && section != "model" && section != "training" &&
                section != "eval")
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + t + "'");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key outside any section");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const Field* f = find_field(section, key);
        if (!f)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": unknown key '" + section + "." + key + "'");
        f->set(cfg, value);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return from_string(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void ExperimentConfig::apply_override(const std::string& key_eq_value) {
    const std::size_t eq = key_eq_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + key_eq_value + "' is not key=value");
    const std::string key = trim(key_eq_value.substr(0, eq));
    const std::string value = trim(key_eq_value.substr(eq + 1));
    const std::size_t dot = key.find('.');
    if (dot == std::string::npos)
        throw ConfigError("override key '" + key + "' must be section.key");
    const Field* f = find_field(key.substr(0, dot), key.substr(dot + 1));
    if (!f) throw ConfigError("override: unknown key '" + key + "'");
    f->set(*this, value);
}

std::string ExperimentConfig::serialize() const {
    std::string out;
    std::string section;
    for (const Field& f : registry()) {
        if (f.section != section) {
            if (!out.empty()) out += "\n";
            out += "[" + f.section + "]\n";
            section = f.section;
        }
        out += f.key + " = " + f.get(*this) + "\n";
    }
    return out;
}

std::uint64_t ExperimentConfig::hash() const {
    const std::string s = serialize();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void ExperimentConfig::validate() const {
    sim.validate();
    model.validate(sim.k);
    if (training.hyper.learning_rate < 0)
        throw ConfigError("training: learning_rate must be >= 0");
    if (training.hyper.batch_size < 1)
        throw ConfigError("training: batch_size must be >= 1");
    if (training.hyper.gamma < 0 || training.hyper.gamma > 1)
        throw ConfigError("training: gamma must be in [0,1]");
    if (training.hyper.tau < 0 || training.hyper.tau > 1)
        throw ConfigError("training: tau must be in [0,1]");
    if (training.epochs < 1) throw ConfigError("training: epochs must be >= 1");
    if (training.target_update != "soft" && training.target_update != "hard")
        throw ConfigError("training: target_update must be 'soft' or 'hard'");
    if (training.hard_sync_every < 1)
        throw ConfigError("training: hard_sync_every must be >= 1");
    if (training.eval_every < 0)
        throw ConfigError("training: eval_every must be >= 0");
    if (eval.episodes < 1) throw ConfigError("eval: episodes must be >= 1");
    if (eval.ablation_seeds.empty())
        throw ConfigError("eval: ablation_seeds must not be empty");
    if (model.seq_len > 32)
        throw ConfigError(
            "model: seq_len above the stored history cap of 32 pages");
}

}  // namespace dpin::harness
