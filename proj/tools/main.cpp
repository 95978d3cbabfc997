// Command-line entry point wiring training, centroid building, generation,
// tracing, and evaluation into reproducible seeded runs.

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loramix/config.hpp"
#include "loramix/serialize.hpp"
#include "loramix/tasks.hpp"
#include "loramix/tokenizer.hpp"
#include "loramix/workflows.hpp"

namespace {

using namespace loramix;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDivergence = 4;

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;

    RunConfig resolve() const { return load_run_config(config_path, overrides); }
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides, "config override, key=value (repeatable)");
}

std::vector<LoraAdapter> load_adapters(const std::vector<std::string>& paths) {
    std::vector<LoraAdapter> out;
    for (const auto& p : paths) out.push_back(load_adapter(p));
    return out;
}

std::vector<Centroid> load_centroids(const std::vector<std::string>& paths) {
    std::vector<Centroid> out;
    for (const auto& p : paths) out.push_back(load_centroid(p));
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    return out;
}

int cmd_init(const ConfigArgs& cargs, const std::string& out_path, bool quiet) {
    const RunConfig cfg = cargs.resolve();
    if (!quiet) std::cerr << "pretraining base model (" << cfg.pretrain.steps << " steps)\n";
    Model model = build_base_model(cfg, quiet ? nullptr : &std::cerr);
    save_model(model, out_path);
    if (!quiet) std::cerr << "wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_train(const ConfigArgs& cargs, const std::string& base_path, const std::string& domain,
              const std::string& out_path, const std::string& loss_log_path) {
    const RunConfig cfg = cargs.resolve();
    const Model model = load_model(base_path);
    const Domain d = domain_from_name(domain);
    std::ofstream log;
    std::ostream* logp = nullptr;
    if (!loss_log_path.empty()) {
        log = open_out(loss_log_path);
        logp = &log;
    }
    const LoraAdapter adapter = train_domain_adapter(model, cfg, d, logp);
    save_adapter(adapter, out_path);
    return kExitOk;
}

int cmd_centroid(const std::string& base_path, const std::string& corpus_path, const std::string& name,
                 const std::string& out_path) {
    const Model model = load_model(base_path);
    std::ifstream in(corpus_path);
    if (!in) throw FormatError("cannot open corpus file '" + corpus_path + "'");
    std::vector<TokenSeq> corpus;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) corpus.push_back(tok::encode(line));
    if (corpus.empty()) throw EmptyCorpusError("corpus file '" + corpus_path + "' has no documents");
    const Centroid c = compute_centroid(model, corpus, name);
    save_centroid(c, out_path);
    return kExitOk;
}

int cmd_generate(const ConfigArgs& cargs, const std::string& base_path, const std::vector<std::string>& adapter_paths,
                 const std::vector<std::string>& centroid_paths, const std::string& prompt, int max_tokens,
                 const std::string& trace_path) {
    const RunConfig cfg = cargs.resolve();
    const Model model = load_model(base_path);
    const std::vector<LoraAdapter> adapters = load_adapters(adapter_paths);
    const std::vector<Centroid> centroids = load_centroids(centroid_paths);

    GenerateOptions opts;
    opts.max_new_tokens = max_tokens;
    const GenerateResult res = generate(model, adapters, centroids, tok::encode(prompt), cfg.router, opts);
    std::cout << tok::decode(res.generated);
    if (!res.generated.empty() && res.generated.back() != tok::kEos) std::cout << "\n";
    if (!trace_path.empty()) {
        std::ofstream out = open_out(trace_path);
        write_trace_jsonl(res.trace, out);
    }
    return kExitOk;
}

int cmd_evaluate(const ConfigArgs& cargs, const std::string& base_path, const std::vector<std::string>& adapter_paths,
                 const std::vector<std::string>& centroid_paths, const std::vector<std::string>& testset_paths,
                 const std::string& modes_csv, const std::string& strides_csv, const std::string& out_prefix,
                 int jobs) {
    const RunConfig cfg = cargs.resolve();
    const Model model = load_model(base_path);
    const std::vector<LoraAdapter> adapters = load_adapters(adapter_paths);
    const std::vector<Centroid> centroids = load_centroids(centroid_paths);

    std::map<Domain, std::vector<Sample>> testsets;
    for (const std::string& path : testset_paths) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open test-set file '" + path + "'");
        for (auto& [d, samples] : read_testset(in)) {
            auto& dst = testsets[d];
            dst.insert(dst.end(), samples.begin(), samples.end());
        }
    }

    std::set<std::string> modes;
    {
        std::stringstream ss(modes_csv);
        std::string item;
        while (std::getline(ss, item, ',')) modes.insert(item);
        for (const std::string& m : modes)
            if (m != "base" && m != "specialized" && m != "routed")
                throw ConfigError("unknown evaluation mode '" + m + "'");
    }
    std::vector<int> strides;
    {
        std::stringstream ss(strides_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                strides.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw ConfigError("bad stride '" + item + "'");
            }
        }
    }

    std::vector<EvalReport> reports;
    auto run = [&](EvalMode mode, int stride) {
        RouterConfig rc = cfg.router;
        if (stride > 0) rc.stride = stride;
        EvalReport r = evaluate(model, adapters, centroids, testsets, mode, rc, cfg.eval_max_new_tokens, jobs);
        r.seed = cfg.seed;
        r.config_hash = config_hash(cfg);
        reports.push_back(std::move(r));
    };
    if (modes.count("base")) run(EvalMode::Base, 0);
    if (modes.count("specialized")) run(EvalMode::Specialized, 0);
    if (modes.count("routed"))
        for (int k : strides) run(EvalMode::Routed, k);

    const std::string table = format_report_table(reports);
    std::cout << table;
    if (!out_prefix.empty()) {
        std::ofstream txt = open_out(out_prefix + ".txt");
        txt << "# seed=" << cfg.seed << " config_hash=" << config_hash(cfg) << "\n" << table;
        std::ofstream js = open_out(out_prefix + ".json");
        write_report_json(reports, js);
    }
    return kExitOk;
}

int cmd_trace(const std::string& in_path) {
    std::ifstream in(in_path);
    if (!in) throw FormatError("cannot open trace file '" + in_path + "'");
    const RoutingTrace trace = read_trace_jsonl(in);
    std::map<std::string, int> argmax_counts;
    std::map<std::string, double> weight_sums;
    int merges = 0;
    for (const TraceStep& s : trace.steps) {
        if (s.merged) ++merges;
        argmax_counts[s.argmax_name]++;
        for (std::size_t i = 0; i < s.weights.size(); ++i) weight_sums["adapter " + std::to_string(i)] += s.weights[i];
    }
    std::cout << "steps: " << trace.steps.size() << "\n";
    std::cout << "merge events: " << merges << "\n";
    for (const auto& [name, count] : argmax_counts) std::cout << "argmax " << name << ": " << count << "\n";
    if (!trace.steps.empty())
        for (const auto& [name, sum] : weight_sums)
            std::cout << "mean weight " << name << ": " << sum / static_cast<double>(trace.steps.size()) << "\n";
    return kExitOk;
}

int cmd_make_data(const ConfigArgs& cargs, const std::string& domain, int n, const std::string& purpose,
                  const std::string& what, const std::string& out_path) {
    const RunConfig cfg = cargs.resolve();
    std::vector<Domain> ds;
    if (domain == "all")
        ds.assign(kAllDomains.begin(), kAllDomains.end());
    else
        ds.push_back(domain_from_name(domain));

    std::ofstream out = open_out(out_path);
    if (what == "testset") {
        std::map<Domain, std::vector<Sample>> sets;
        for (Domain d : ds) sets[d] = domain_samples(cfg, d, purpose, n);
        write_testset(sets, out);
    } else if (what == "prompts" || what == "corpus") {
        for (Domain d : ds)
            for (const Sample& s : domain_samples(cfg, d, purpose, n))
                out << (what == "prompts" ? s.prompt : s.prompt + s.answer) << "\n";
    } else {
        throw ConfigError("unknown data kind '" + what + "' (expected testset, prompts, or corpus)");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-level LoRA adapter routing engine"};
    app.require_subcommand(1);

    ConfigArgs init_cfg, train_cfg, gen_cfg, eval_cfg, data_cfg;
    std::string out_path, base_path, domain, loss_log, prompt, trace_path, corpus_path, name, in_path;
    std::vector<std::string> adapter_paths, centroid_paths, testset_paths;
    std::string modes = "base,specialized,routed";
    std::string strides = "1,2,3,4";
    std::string purpose = "train", what = "testset";
    int max_tokens = 16, jobs = 1, n = 60, gen_stride = 0;
    bool quiet = false;

    CLI::App* c_init = app.add_subcommand("init", "create and pretrain a base model");
    add_config_flags(c_init, init_cfg);
    c_init->add_option("--out", out_path, "output model file")->required();
    c_init->add_flag("--quiet", quiet, "suppress progress output");

    CLI::App* c_train = app.add_subcommand("train", "fine-tune a domain adapter");
    add_config_flags(c_train, train_cfg);
    c_train->add_option("--base", base_path, "base model file")->required()->check(CLI::ExistingFile);
    c_train->add_option("--domain", domain, "arith, reverse, copy, or sort")->required();
    c_train->add_option("--out", out_path, "output adapter file")->required();
    c_train->add_option("--loss-log", loss_log, "per-step loss log file");

    CLI::App* c_centroid = app.add_subcommand("centroid", "build a dataset centroid");
    c_centroid->add_option("--base", base_path, "base model file")->required()->check(CLI::ExistingFile);
    c_centroid->add_option("--corpus", corpus_path, "text corpus, one document per line")
        ->required()
        ->check(CLI::ExistingFile);
    c_centroid->add_option("--name", name, "adapter name the centroid belongs to")->required();
    c_centroid->add_option("--out", out_path, "output centroid file")->required();

    CLI::App* c_gen = app.add_subcommand("generate", "generate with token-level routing");
    add_config_flags(c_gen, gen_cfg);
    c_gen->add_option("--base", base_path, "base model file")->required()->check(CLI::ExistingFile);
    c_gen->add_option("--adapter", adapter_paths, "adapter file (repeatable)");
    c_gen->add_option("--centroid", centroid_paths, "centroid file (repeatable)");
    c_gen->add_option("--prompt", prompt, "prompt text")->required();
    c_gen->add_option("--stride", gen_stride, "re-adaptation stride (overrides config)");
    c_gen->add_option("--max-tokens", max_tokens, "maximum new tokens");
    c_gen->add_option("--trace", trace_path, "write a routing trace (JSON lines)");

    CLI::App* c_eval = app.add_subcommand("evaluate", "run the evaluation sweep");
    add_config_flags(c_eval, eval_cfg);
    c_eval->add_option("--base", base_path, "base model file")->required()->check(CLI::ExistingFile);
    c_eval->add_option("--adapter", adapter_paths, "adapter file (repeatable)");
    c_eval->add_option("--centroid", centroid_paths, "centroid file (repeatable)");
    c_eval->add_option("--testset", testset_paths, "test-set file (repeatable)")->required();
    c_eval->add_option("--modes", modes, "comma list of base,specialized,routed");
    c_eval->add_option("--strides", strides, "comma list of routed strides");
    c_eval->add_option("--out", out_path, "report file prefix (.txt/.json)");
    c_eval->add_option("--jobs", jobs, "parallel question workers");

    CLI::App* c_trace = app.add_subcommand("trace", "summarize a routing trace");
    c_trace->add_option("--in", in_path, "trace file")->required()->check(CLI::ExistingFile);

    CLI::App* c_data = app.add_subcommand("make-data", "emit synthetic task data");
    add_config_flags(c_data, data_cfg);
    c_data->add_option("--domain", domain, "domain name or 'all'")->required();
    c_data->add_option("--n", n, "samples per domain");
    c_data->add_option("--purpose", purpose, "seed stream: train, eval, or route");
    c_data->add_option("--what", what, "testset, prompts, or corpus");
    c_data->add_option("--out", out_path, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (c_init->parsed()) return cmd_init(init_cfg, out_path, quiet);
        if (c_train->parsed()) return cmd_train(train_cfg, base_path, domain, out_path, loss_log);
        if (c_centroid->parsed()) return cmd_centroid(base_path, corpus_path, name, out_path);
        if (c_gen->parsed()) {
            if (gen_stride > 0) gen_cfg.overrides.push_back("stride=" + std::to_string(gen_stride));
            return cmd_generate(gen_cfg, base_path, adapter_paths, centroid_paths, prompt, max_tokens, trace_path);
        }
        if (c_eval->parsed())
            return cmd_evaluate(eval_cfg, base_path, adapter_paths, centroid_paths, testset_paths, modes, strides,
                                out_path, jobs);
        if (c_trace->parsed()) return cmd_trace(in_path);
        if (c_data->parsed()) return cmd_make_data(data_cfg, domain, n, purpose, what, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const EncodingError& e) {
        std::cerr << "encoding error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitConfig;
}
