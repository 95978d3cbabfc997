#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "loramix/model.hpp"
#include "loramix/router.hpp"

namespace loramix {

/// Four synthetic domains with exact answer rules and distinct instruction
/// prefixes so that corpus centroids separate.
enum class Domain { Arith, Reverse, Copy, Sort };

inline constexpr std::array<Domain, 4> kAllDomains{Domain::Arith, Domain::Reverse, Domain::Copy, Domain::Sort};

std::string domain_name(Domain d);
Domain domain_from_name(const std::string& name);
std::string domain_prefix(Domain d);

struct DomainSpec {
    Domain domain = Domain::Arith;
    std::uint64_t seed = 0;
    int min_len = 3;       // string domains
    int max_len = 4;       // string domains
    int max_operand = 49;  // arith
};

struct Sample {
    std::string prompt;
    std::string answer;
};

/// Deterministic given (spec, n). Answers follow the domain's exact rule.
std::vector<Sample> generate_corpus(const DomainSpec& spec, int n);

/// Exact-match grading: truncate at the first answer delimiter (newline),
/// strip surrounding spaces, compare.
bool grade(const std::string& produced, const std::string& expected);
bool grade_tokens(const TokenSeq& produced, const TokenSeq& expected);

/// Full training sequence "prompt + answer + \n" for each sample.
std::vector<TokenSeq> corpus_sequences(const std::vector<Sample>& samples);
/// Prompt-only sequences, used for centroids and routing checks.
std::vector<TokenSeq> prompt_sequences(const std::vector<Sample>& samples);

enum class EvalMode { Base, Specialized, Routed };

std::string eval_mode_name(EvalMode mode, int stride);

struct QuestionRecord {
    std::string prompt;
    std::string expected;
    std::string produced;
    bool correct = false;
};

struct DomainResult {
    Domain domain = Domain::Arith;
    double score = 0.0;  // percentage
    std::vector<QuestionRecord> records;
};

struct EvalReport {
    std::string model_label;
    EvalMode mode = EvalMode::Base;
    int stride = 0;  // routed mode only
    std::uint64_t seed = 0;
    std::string config_hash;
    double average = 0.0;  // arithmetic mean of the per-domain scores
    std::vector<DomainResult> domains;
};

/// Runs one evaluation mode over per-domain test sets. Base mode uses the
/// unadapted model, specialized mode applies each domain's own adapter
/// statically, routed mode generates with stride-k re-adaptation.
EvalReport evaluate(const Model& model, const std::vector<LoraAdapter>& adapters,
                    const std::vector<Centroid>& centroids, const std::map<Domain, std::vector<Sample>>& testsets,
                    EvalMode mode, const RouterConfig& router, int max_new_tokens, int jobs = 1);

double round1(double v);

std::string format_report_table(const std::vector<EvalReport>& reports);
void write_report_json(const std::vector<EvalReport>& reports, std::ostream& out);

/// Test-set file: one line per question, "domain \t prompt \t answer".
void write_testset(const std::map<Domain, std::vector<Sample>>& sets, std::ostream& out);
std::map<Domain, std::vector<Sample>> read_testset(std::istream& in);

}  // namespace loramix
