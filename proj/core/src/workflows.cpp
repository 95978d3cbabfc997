#include "loramix/workflows.hpp"

#include <algorithm>

namespace loramix {

std::vector<Sample> domain_samples(const RunConfig& cfg, Domain d, const std::string& purpose, int n) {
    DomainSpec spec;
    spec.domain = d;
    spec.seed = cfg.domain_seed(d, purpose);
    return generate_corpus(spec, n);
}

std::vector<Sample> domain_train_samples(const RunConfig& cfg, Domain d) {
    return domain_samples(cfg, d, "train", cfg.train_corpus_size);
}

std::map<Domain, std::vector<Sample>> heldout_testsets(const RunConfig& cfg, const std::string& purpose, int n) {
    std::map<Domain, std::vector<Sample>> sets;
    for (Domain d : kAllDomains) sets[d] = domain_samples(cfg, d, purpose, n);
    return sets;
}

Model build_base_model(const RunConfig& cfg, std::ostream* loss_log) {
    Model model = make_model<float>(cfg.model, derive_seed(cfg.seed, "base-init"));
    std::vector<TokenSeq> mixture;
    for (Domain d : kAllDomains) {
        std::vector<TokenSeq> seqs = corpus_sequences(domain_train_samples(cfg, d));
        mixture.insert(mixture.end(), seqs.begin(), seqs.end());
    }
    pretrain_base(model, mixture, cfg.pretrain, loss_log);
    return model;
}

LoraAdapter train_domain_adapter(const Model& model, const RunConfig& cfg, Domain d, std::ostream* loss_log) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "adapter/" + domain_name(d));
    const std::vector<TokenSeq> corpus = corpus_sequences(domain_train_samples(cfg, d));
    return train_adapter(model, corpus, tc, domain_name(d), loss_log);
}

Centroid domain_centroid(const Model& model, const RunConfig& cfg, Domain d) {
    std::vector<Sample> samples = domain_train_samples(cfg, d);
    const int n = std::min<int>(cfg.centroid_corpus_size, static_cast<int>(samples.size()));
    samples.resize(static_cast<std::size_t>(n));
    return compute_centroid(model, prompt_sequences(samples), domain_name(d));
}

}  // namespace loramix
