#include "loramix/config.hpp"

#include <fstream>
#include <sstream>

namespace loramix {

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string role_suffix(const std::string& role) {
    if (role == "attn.q") return "attn.wq";
    if (role == "attn.k") return "attn.wk";
    if (role == "attn.v") return "attn.wv";
    if (role == "attn.o") return "attn.wo";
    throw ConfigError("unknown lora target role '" + role + "' (expected attn.q/k/v/o)");
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' has non-integer value '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' has non-numeric value '" + value + "'");
    }
}

}  // namespace

void RunConfig::finalize() {
    if (lora_roles.empty()) throw ConfigError("lora_targets must name at least one role");
    model.lora_targets.clear();
    for (int l = 0; l < model.n_layers; ++l)
        for (const std::string& role : lora_roles)
            model.lora_targets.push_back("blk" + std::to_string(l) + "." + role_suffix(role));
    model.validate();
    router.validate();
    train.validate();
    train.targets = model.lora_targets;
    pretrain.seed = derive_seed(seed, "pretrain");
}

std::uint64_t RunConfig::domain_seed(Domain d, const std::string& purpose) const {
    return derive_seed(seed, purpose + "/" + domain_name(d));
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.finalize();
    return cfg;
}

RunConfig parse_run_config(const std::vector<std::pair<std::string, std::string>>& kvs) {
    RunConfig cfg;
    for (const auto& [key, value] : kvs) {
        if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "vocab_size") cfg.model.vocab_size = static_cast<int>(parse_int(key, value));
        else if (key == "d_model") cfg.model.d_model = static_cast<int>(parse_int(key, value));
        else if (key == "n_layers") cfg.model.n_layers = static_cast<int>(parse_int(key, value));
        else if (key == "n_heads") cfg.model.n_heads = static_cast<int>(parse_int(key, value));
        else if (key == "d_ff") cfg.model.d_ff = static_cast<int>(parse_int(key, value));
        else if (key == "max_seq_len") cfg.model.max_seq_len = static_cast<int>(parse_int(key, value));
        else if (key == "lora_targets") cfg.lora_roles = split_list(value);
        else if (key == "lora_rank") cfg.train.rank = static_cast<int>(parse_int(key, value));
        else if (key == "lora_alpha") cfg.train.alpha = parse_double(key, value);
        else if (key == "learning_rate") cfg.train.learning_rate = parse_double(key, value);
        else if (key == "train_steps") cfg.train.steps = static_cast<int>(parse_int(key, value));
        else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "pretrain_learning_rate") cfg.pretrain.learning_rate = parse_double(key, value);
        else if (key == "pretrain_steps") cfg.pretrain.steps = static_cast<int>(parse_int(key, value));
        else if (key == "pretrain_batch_size") cfg.pretrain.batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "base_temperature") cfg.router.base_temperature = parse_double(key, value);
        else if (key == "boost_temperature") cfg.router.boost_temperature = parse_double(key, value);
        else if (key == "stride") cfg.router.stride = static_cast<int>(parse_int(key, value));
        else if (key == "routing_context") {
            if (value == "full") cfg.router.routing_context = RouterConfig::Context::FullContext;
            else if (value == "prompt") cfg.router.routing_context = RouterConfig::Context::PromptOnly;
            else throw ConfigError("config key 'routing_context' must be 'full' or 'prompt', got '" + value + "'");
        }
        else if (key == "train_corpus_size") cfg.train_corpus_size = static_cast<int>(parse_int(key, value));
        else if (key == "centroid_corpus_size") cfg.centroid_corpus_size = static_cast<int>(parse_int(key, value));
        else if (key == "eval_questions") cfg.eval_questions = static_cast<int>(parse_int(key, value));
        else if (key == "eval_max_new_tokens") cfg.eval_max_new_tokens = static_cast<int>(parse_int(key, value));
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.train.seed = cfg.seed;
    cfg.finalize();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::vector<std::pair<std::string, std::string>> kvs;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::size_t b = line.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            std::size_t e = line.find_last_not_of(" \t\r");
            line = line.substr(b, e - b + 1);
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
            kvs.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        }
    }
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + ov + "' is not key=value");
        kvs.emplace_back(ov.substr(0, eq), ov.substr(eq + 1));
    }
    return parse_run_config(kvs);
}

std::string canonical_config_string(const RunConfig& cfg) {
    std::ostringstream out;
    out << "seed=" << cfg.seed << "\n"
        << "vocab_size=" << cfg.model.vocab_size << "\n"
        << "d_model=" << cfg.model.d_model << "\n"
        << "n_layers=" << cfg.model.n_layers << "\n"
        << "n_heads=" << cfg.model.n_heads << "\n"
        << "d_ff=" << cfg.model.d_ff << "\n"
        << "max_seq_len=" << cfg.model.max_seq_len << "\n";
    out << "lora_targets=";
    for (std::size_t i = 0; i < cfg.lora_roles.size(); ++i) out << (i ? "," : "") << cfg.lora_roles[i];
    out << "\n"
        << "lora_rank=" << cfg.train.rank << "\n"
        << "lora_alpha=" << cfg.train.alpha << "\n"
        << "learning_rate=" << cfg.train.learning_rate << "\n"
        << "train_steps=" << cfg.train.steps << "\n"
        << "batch_size=" << cfg.train.batch_size << "\n"
        << "pretrain_learning_rate=" << cfg.pretrain.learning_rate << "\n"
        << "pretrain_steps=" << cfg.pretrain.steps << "\n"
        << "pretrain_batch_size=" << cfg.pretrain.batch_size << "\n"
        << "base_temperature=" << cfg.router.base_temperature << "\n"
        << "boost_temperature=" << cfg.router.boost_temperature << "\n"
        << "stride=" << cfg.router.stride << "\n"
        << "routing_context="
        << (cfg.router.routing_context == RouterConfig::Context::FullContext ? "full" : "prompt") << "\n"
        << "train_corpus_size=" << cfg.train_corpus_size << "\n"
        << "centroid_corpus_size=" << cfg.centroid_corpus_size << "\n"
        << "eval_questions=" << cfg.eval_questions << "\n"
        << "eval_max_new_tokens=" << cfg.eval_max_new_tokens << "\n";
    return out.str();
}

std::string config_hash(const RunConfig& cfg) {
    const std::uint64_t h = fnv1a64(canonical_config_string(cfg));
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

}  // namespace loramix
