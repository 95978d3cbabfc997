#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loramix/model.hpp"
#include "loramix/router.hpp"
#include "loramix/tasks.hpp"
#include "loramix/trainer.hpp"

namespace loramix {

/// One plain-text key=value file drives model, router, trainer, and
/// evaluation settings; command-line overrides use the same syntax.
struct RunConfig {
    std::uint64_t seed = 42;
    ModelConfig model;
    RouterConfig router;
    TrainConfig train;
    PretrainConfig pretrain;
    std::vector<std::string> lora_roles = {"attn.q", "attn.v"};  // expanded per layer
    int train_corpus_size = 256;
    int centroid_corpus_size = 128;
    int eval_questions = 60;
    int eval_max_new_tokens = 8;

    /// Resolves derived fields (expanded LoRA targets, per-stream seeds).
    void finalize();

    std::uint64_t domain_seed(Domain d, const std::string& purpose) const;
};

RunConfig parse_run_config(const std::vector<std::pair<std::string, std::string>>& kvs);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
RunConfig default_run_config();

std::string canonical_config_string(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

}  // namespace loramix
