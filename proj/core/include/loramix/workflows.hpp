#pragma once

#include <map>
#include <ostream>
#include <vector>

#include "loramix/config.hpp"
#include "loramix/tasks.hpp"

namespace loramix {

/// Deterministic per-domain sample streams, all derived from the run seed.
std::vector<Sample> domain_samples(const RunConfig& cfg, Domain d, const std::string& purpose, int n);
std::vector<Sample> domain_train_samples(const RunConfig& cfg, Domain d);
std::map<Domain, std::vector<Sample>> heldout_testsets(const RunConfig& cfg, const std::string& purpose, int n);

/// Random init plus full-parameter pretraining on the mixed four-domain
/// corpus. Produces the frozen base the adapters attach to.
Model build_base_model(const RunConfig& cfg, std::ostream* loss_log = nullptr);

/// Fine-tunes one domain adapter on that domain's training corpus.
LoraAdapter train_domain_adapter(const Model& model, const RunConfig& cfg, Domain d,
                                 std::ostream* loss_log = nullptr);

/// Centroid of the domain's training prompts.
Centroid domain_centroid(const Model& model, const RunConfig& cfg, Domain d);

}  // namespace loramix
