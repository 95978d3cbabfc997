#include "loramix/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "loramix/tokenizer.hpp"

namespace loramix {

std::string domain_name(Domain d) {
    switch (d) {
        case Domain::Arith: return "arith";
        case Domain::Reverse: return "reverse";
        case Domain::Copy: return "copy";
        case Domain::Sort: return "sort";
    }
    throw ConfigError("unknown domain");
}

Domain domain_from_name(const std::string& name) {
    for (Domain d : kAllDomains)
        if (domain_name(d) == name) return d;
    throw ConfigError("unknown domain '" + name + "'");
}

std::string domain_prefix(Domain d) {
    switch (d) {
        case Domain::Arith: return "calc: ";
        case Domain::Reverse: return "rev: ";
        case Domain::Copy: return "copy: ";
        case Domain::Sort: return "sort: ";
    }
    throw ConfigError("unknown domain");
}

namespace {

std::string random_word(std::mt19937_64& rng, int min_len, int max_len) {
    std::uniform_int_distribution<int> len_dist(min_len, max_len);
    std::uniform_int_distribution<int> ch_dist(0, 5);  // a..f
    const int len = len_dist(rng);
    std::string s(static_cast<std::size_t>(len), 'a');
    for (char& c : s) c = static_cast<char>('a' + ch_dist(rng));
    return s;
}

std::string two_digits(int v) {
    std::string s = std::to_string(v);
    return s.size() < 2 ? "0" + s : s;
}

}  // namespace

std::vector<Sample> generate_corpus(const DomainSpec& spec, int n) {
    if (n < 1) throw ConfigError("corpus size must be >= 1");
    std::mt19937_64 rng(spec.seed);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    const std::string prefix = domain_prefix(spec.domain);
    for (int i = 0; i < n; ++i) {
        Sample s;
        switch (spec.domain) {
            case Domain::Arith: {
                std::uniform_int_distribution<int> op(0, spec.max_operand);
                const int a = op(rng), b = op(rng);
                s.prompt = prefix + two_digits(a) + "+" + two_digits(b) + "=";
                s.answer = std::to_string(a + b);
                break;
            }
            case Domain::Reverse: {
                std::string w = random_word(rng, spec.min_len, spec.max_len);
                s.prompt = prefix + w + "=";
                std::reverse(w.begin(), w.end());
                s.answer = w;
                break;
            }
            case Domain::Copy: {
                const std::string w = random_word(rng, spec.min_len, spec.max_len);
                s.prompt = prefix + w + "=";
                s.answer = w;
                break;
            }
            case Domain::Sort: {
                std::string w = random_word(rng, spec.min_len, spec.max_len);
                s.prompt = prefix + w + "=";
                std::sort(w.begin(), w.end());
                s.answer = w;
                break;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(' ');
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(' ');
    return s.substr(b, e - b + 1);
}

}  // namespace

bool grade(const std::string& produced, const std::string& expected) {
    std::string p = produced;
    if (std::size_t nl = p.find('\n'); nl != std::string::npos) p.resize(nl);
    std::string e = expected;
    if (std::size_t nl = e.find('\n'); nl != std::string::npos) e.resize(nl);
    return trim(p) == trim(e);
}

bool grade_tokens(const TokenSeq& produced, const TokenSeq& expected) {
    return grade(tok::decode(produced), tok::decode(expected));
}

std::vector<TokenSeq> corpus_sequences(const std::vector<Sample>& samples) {
    std::vector<TokenSeq> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(tok::encode(s.prompt + s.answer + "\n"));
    return out;
}

std::vector<TokenSeq> prompt_sequences(const std::vector<Sample>& samples) {
    std::vector<TokenSeq> out;
    out.reserve(samples.size());
    for (const Sample& s : samples) out.push_back(tok::encode(s.prompt));
    return out;
}

std::string eval_mode_name(EvalMode mode, int stride) {
    switch (mode) {
        case EvalMode::Base: return "base";
        case EvalMode::Specialized: return "specialized";
        case EvalMode::Routed: return "routed(" + std::to_string(stride) + ")";
    }
    throw ConfigError("unknown eval mode");
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

namespace {

void run_questions(const Model& model, const std::vector<LoraAdapter>& adapters,
                   const std::vector<Centroid>& centroids, const std::vector<Sample>& questions, EvalMode mode,
                   Domain domain, const RouterConfig& router, int max_new_tokens, int jobs,
                   std::vector<QuestionRecord>& records) {
    records.assign(questions.size(), QuestionRecord{});

    const MergedDelta* specialized = nullptr;
    MergedDelta specialized_storage;
    if (mode == EvalMode::Specialized) {
        const std::string want = domain_name(domain);
        auto it = std::find_if(adapters.begin(), adapters.end(),
                               [&](const LoraAdapter& a) { return a.name == want; });
        if (it == adapters.end()) throw RegistryError("no adapter named '" + want + "' for specialized mode");
        specialized_storage = single_adapter_delta(*it);
        specialized = &specialized_storage;
    }

    auto worker = [&](std::size_t begin, std::size_t end) {
        GenerateOptions opts;
        opts.max_new_tokens = max_new_tokens;
        for (std::size_t i = begin; i < end; ++i) {
            const Sample& q = questions[i];
            QuestionRecord rec;
            rec.prompt = q.prompt;
            rec.expected = q.answer;
            const TokenSeq prompt_ids = tok::encode(q.prompt);
            TokenSeq produced;
            switch (mode) {
                case EvalMode::Base: produced = generate_static(model, nullptr, prompt_ids, opts); break;
                case EvalMode::Specialized: produced = generate_static(model, specialized, prompt_ids, opts); break;
                case EvalMode::Routed:
                    produced = generate(model, adapters, centroids, prompt_ids, router, opts).generated;
                    break;
            }
            rec.produced = tok::decode(produced);
            rec.correct = grade(rec.produced, rec.expected);
            records[i] = std::move(rec);
        }
    };

    if (jobs <= 1 || questions.size() < 2) {
        worker(0, questions.size());
        return;
    }
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), questions.size());
    std::vector<std::thread> threads;
    const std::size_t chunk = (questions.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(questions.size(), b + chunk);
        if (b < e) threads.emplace_back(worker, b, e);
    }
    for (std::thread& th : threads) th.join();
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<LoraAdapter>& adapters,
                    const std::vector<Centroid>& centroids, const std::map<Domain, std::vector<Sample>>& testsets,
                    EvalMode mode, const RouterConfig& router, int max_new_tokens, int jobs) {
    if (testsets.empty()) throw EmptyCorpusError("no test sets supplied");
    for (const auto& [d, qs] : testsets)
        if (qs.empty()) throw EmptyCorpusError("empty test set for domain '" + domain_name(d) + "'");

    EvalReport report;
    report.mode = mode;
    report.stride = mode == EvalMode::Routed ? router.stride : 0;
    report.model_label = eval_mode_name(mode, router.stride);

    double sum = 0.0;
    for (const auto& [d, qs] : testsets) {
        DomainResult dr;
        dr.domain = d;
        run_questions(model, adapters, centroids, qs, mode, d, router, max_new_tokens, jobs, dr.records);
        int correct = 0;
        for (const QuestionRecord& r : dr.records) correct += r.correct ? 1 : 0;
        dr.score = 100.0 * static_cast<double>(correct) / static_cast<double>(dr.records.size());
        sum += dr.score;
        report.domains.push_back(std::move(dr));
    }
    report.average = sum / static_cast<double>(report.domains.size());
    return report;
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "model";
    std::vector<Domain> cols;
    if (!reports.empty())
        for (const DomainResult& dr : reports.front().domains) cols.push_back(dr.domain);
    out << "\tavg";
    for (Domain d : cols) out << "\t" << domain_name(d);
    out << "\n";
    out.setf(std::ios::fixed);
    out.precision(1);
    for (const EvalReport& r : reports) {
        out << r.model_label << "\t" << round1(r.average);
        for (const DomainResult& dr : r.domains) out << "\t" << round1(dr.score);
        out << "\n";
    }
    return out.str();
}

void write_report_json(const std::vector<EvalReport>& reports, std::ostream& out) {
    nlohmann::json root = nlohmann::json::array();
    for (const EvalReport& r : reports) {
        nlohmann::json j;
        j["model"] = r.model_label;
        j["mode"] = eval_mode_name(r.mode, r.stride);
        j["stride"] = r.stride;
        j["seed"] = r.seed;
        j["config_hash"] = r.config_hash;
        j["average"] = round1(r.average);
        nlohmann::json domains = nlohmann::json::object();
        for (const DomainResult& dr : r.domains) {
            nlohmann::json dj;
            dj["score"] = round1(dr.score);
            nlohmann::json recs = nlohmann::json::array();
            for (const QuestionRecord& rec : dr.records)
                recs.push_back({{"prompt", rec.prompt},
                                {"expected", rec.expected},
                                {"produced", rec.produced},
                                {"correct", rec.correct}});
            dj["records"] = recs;
            domains[domain_name(dr.domain)] = dj;
        }
        j["domains"] = domains;
        root.push_back(j);
    }
    out << root.dump(2) << "\n";
}

void write_testset(const std::map<Domain, std::vector<Sample>>& sets, std::ostream& out) {
    for (const auto& [d, samples] : sets)
        for (const Sample& s : samples) out << domain_name(d) << "\t" << s.prompt << "\t" << s.answer << "\n";
}

std::map<Domain, std::vector<Sample>> read_testset(std::istream& in) {
    std::map<Domain, std::vector<Sample>> sets;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw FormatError("malformed test-set record at line " + std::to_string(lineno));
        Domain d = domain_from_name(line.substr(0, t1));
        sets[d].push_back(Sample{line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    if (sets.empty()) throw EmptyCorpusError("test-set file is empty");
    return sets;
}

}  // namespace loramix
