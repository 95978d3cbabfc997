#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "loramix/router.hpp"
#include "loramix/serialize.hpp"
#include "loramix/tokenizer.hpp"

using namespace loramix;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = tok::kVocabSize;
    c.d_model = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_seq_len = 64;
    c.lora_targets = default_lora_targets(c.n_layers);
    return c;
}

LoraAdapter named_adapter(const Model& model, const std::string& name, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(-0.05f, 0.05f);
    LoraAdapter a;
    a.name = name;
    a.rank = 2;
    a.alpha = 4.0;
    for (const std::string& role : model.config.lora_targets) {
        const MatF& w = model.param(role);
        LoraFactors<float> f;
        f.a = MatF(a.rank, w.cols);
        f.b = MatF(w.rows, a.rank);
        for (float& x : f.a.data) x = uni(rng);
        for (float& x : f.b.data) x = uni(rng);
        a.targets.emplace(role, std::move(f));
    }
    return a;
}

}  // namespace

TEST_SUITE_BEGIN("router");

TEST_CASE("compute_weights symmetric case with boost disabled") {
    RouterConfig cfg;
    cfg.base_temperature = 1.0;
    cfg.boost_temperature = 1.0;
    const std::vector<double> w = compute_weights({0.5, 0.5, 0.5, 0.5}, cfg);
    for (double x : w) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("compute_weights matches direct 64-bit evaluation") {
    RouterConfig cfg;  // defaults: base 1, boost 4
    const std::vector<double> s{0.9, 0.1, 0.2, 0.3};
    const std::vector<double> w = compute_weights(s, cfg);
    const double z = std::exp(0.9 * 4.0) + std::exp(0.1) + std::exp(0.2) + std::exp(0.3);
    CHECK(w[0] == doctest::Approx(std::exp(3.6) / z).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(std::exp(0.1) / z).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(std::exp(0.2) / z).epsilon(1e-12));
    CHECK(w[3] == doctest::Approx(std::exp(0.3) / z).epsilon(1e-12));
}

TEST_CASE("compute_weights closed-form boosted case") {
    RouterConfig cfg;
    const std::vector<double> w = compute_weights({1.0, 0.0, 0.0, 0.0}, cfg);
    CHECK(w[0] == doctest::Approx(std::exp(4.0) / (std::exp(4.0) + 3.0)).epsilon(1e-10));
    CHECK(w[0] == doctest::Approx(0.9479).epsilon(1e-4));
}

TEST_CASE("compute_weights rejects empty input") {
    CHECK_THROWS_AS(compute_weights({}, RouterConfig{}), ShapeError);
}

TEST_CASE("weight normalization and positivity over random vectors") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    RouterConfig cfg;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> s(4);
        for (double& x : s) x = uni(rng);
        const std::vector<double> w = compute_weights(s, cfg);
        double sum = 0.0;
        for (double x : w) {
            CHECK(x > 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("boost preserves the similarity argmax for nonnegative maxima") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::uniform_real_distribution<double> boost_dist(1.0, 10.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> s(4);
        for (double& x : s) x = uni(rng);
        std::size_t best = 0;
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s[i] > s[best]) best = i;
        if (s[best] < 0.0) s[best] = -s[best];  // ensure nonnegative unique max
        RouterConfig cfg;
        cfg.boost_temperature = boost_dist(rng);
        const std::vector<double> w = compute_weights(s, cfg);
        std::size_t wbest = 0;
        for (std::size_t i = 1; i < w.size(); ++i)
            if (w[i] > w[wbest]) wbest = i;
        CHECK(wbest == best);
    }
}

TEST_CASE("boost monotonically increases the argmax weight") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(4);
        for (double& x : s) x = uni(rng);
        std::size_t best = 0;
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s[i] > s[best]) best = i;
        s[best] += 0.05;  // unique positive max
        double prev = -1.0;
        for (double boost = 1.0; boost <= 8.0; boost += 0.5) {
            RouterConfig cfg;
            cfg.boost_temperature = boost;
            const double w = compute_weights(s, cfg)[best];
            CHECK(w > prev);
            prev = w;
        }
    }
}

TEST_CASE("compute_centroid mean semantics") {
    const Model m = make_model<float>(tiny_config(), 5);
    const TokenSeq doc = tok::encode("copy: abc=");

    Centroid single = compute_centroid(m, {doc}, "a");
    VecF direct = embed_context(m, doc);
    for (std::size_t j = 0; j < direct.size(); ++j)
        CHECK(single.vector[j] == doctest::Approx(direct[j]).epsilon(1e-6));
    CHECK(single.sample_count == 1);

    Centroid dup = compute_centroid(m, {doc, doc}, "a");
    for (std::size_t j = 0; j < direct.size(); ++j)
        CHECK(dup.vector[j] == doctest::Approx(single.vector[j]).epsilon(1e-6));

    std::mt19937_64 rng(6);
    std::vector<TokenSeq> docs;
    for (int i = 0; i < 10; ++i) {
        TokenSeq d(5 + (rng() % 5));
        for (int& id : d) id = 1 + static_cast<int>(rng() % (tok::kVocabSize - 1));
        docs.push_back(std::move(d));
    }
    Centroid ten = compute_centroid(m, docs, "a");
    VecD acc(m.config.d_model, 0.0);
    for (const TokenSeq& d : docs) {
        VecF e = embed_context(m, d);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += e[j];
    }
    for (std::size_t j = 0; j < acc.size(); ++j)
        CHECK(ten.vector[j] == doctest::Approx(acc[j] / 10.0).epsilon(1e-6));

    CHECK_THROWS_AS(compute_centroid(m, {}, "a"), EmptyCorpusError);
}

TEST_CASE("route_step singleton and self-similarity") {
    const Model m = make_model<float>(tiny_config(), 7);
    std::vector<LoraAdapter> adapters{named_adapter(m, "only", 1)};
    const TokenSeq doc = tok::encode("sort: fed=");
    std::vector<Centroid> centroids{compute_centroid(m, {doc}, "only")};

    RouteStepResult rs = route_step(m, adapters, centroids, doc, RouterConfig{});
    REQUIRE(rs.step.weights.size() == 1);
    CHECK(rs.step.weights[0] == doctest::Approx(1.0));
    MergedDelta want = single_adapter_delta(adapters[0]);
    for (const auto& [role, dw] : rs.delta.targets) {
        const MatF& wd = want.targets.at(role);
        for (std::size_t i = 0; i < dw.data.size(); ++i)
            CHECK(dw.data[i] == doctest::Approx(wd.data[i]).epsilon(1e-6));
    }

    // Two distinct centroids: a context equal to one centroid's document wins.
    std::vector<LoraAdapter> two{named_adapter(m, "a", 2), named_adapter(m, "b", 3)};
    const TokenSeq doc_b = tok::encode("calc: 12+07=");
    std::vector<Centroid> cents{compute_centroid(m, {doc}, "a"), compute_centroid(m, {doc_b}, "b")};
    RouteStepResult rb = route_step(m, two, cents, doc_b, RouterConfig{});
    CHECK(rb.step.argmax == 1);
    CHECK(rb.step.argmax_name == "b");
    CHECK(rb.step.similarities[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("route_step rejects misaligned registries") {
    const Model m = make_model<float>(tiny_config(), 7);
    std::vector<LoraAdapter> adapters{named_adapter(m, "a", 1)};
    const TokenSeq doc = tok::encode("x");
    std::vector<Centroid> wrong{compute_centroid(m, {doc}, "zzz")};
    CHECK_THROWS_AS(route_step(m, adapters, wrong, doc, RouterConfig{}), RegistryError);
    CHECK_THROWS_AS(route_step(m, {}, {}, doc, RouterConfig{}), RegistryError);
}

TEST_CASE("generate merge schedule follows the stride") {
    const Model m = make_model<float>(tiny_config(), 8);
    std::vector<LoraAdapter> adapters{named_adapter(m, "a", 1), named_adapter(m, "b", 2)};
    std::vector<Centroid> cents{compute_centroid(m, {tok::encode("copy: ab=")}, "a"),
                                compute_centroid(m, {tok::encode("calc: 1+1=")}, "b")};
    const TokenSeq prompt = tok::encode("copy: ab=");
    GenerateOptions opts;
    opts.max_new_tokens = 6;
    opts.eos_token.reset();

    RouterConfig every;
    every.stride = 1;
    GenerateResult r1 = generate(m, adapters, cents, prompt, every, opts);
    CHECK(r1.trace.steps.size() == 6);
    for (const TraceStep& s : r1.trace.steps) CHECK(s.merged);

    RouterConfig two;
    two.stride = 2;
    GenerateResult r2 = generate(m, adapters, cents, prompt, two, opts);
    std::vector<int> merge_positions;
    for (const TraceStep& s : r2.trace.steps)
        if (s.merged) merge_positions.push_back(s.position);
    CHECK(merge_positions == std::vector<int>{0, 2, 4});

    RouterConfig wide;
    wide.stride = 100;
    GenerateResult rw = generate(m, adapters, cents, prompt, wide, opts);
    int merges = 0;
    for (const TraceStep& s : rw.trace.steps) merges += s.merged ? 1 : 0;
    CHECK(merges == 1);
}

TEST_CASE("generate is deterministic") {
    const Model m = make_model<float>(tiny_config(), 9);
    std::vector<LoraAdapter> adapters{named_adapter(m, "a", 1), named_adapter(m, "b", 2)};
    std::vector<Centroid> cents{compute_centroid(m, {tok::encode("rev: ab=")}, "a"),
                                compute_centroid(m, {tok::encode("sort: ba=")}, "b")};
    const TokenSeq prompt = tok::encode("rev: ab=");
    GenerateOptions opts;
    opts.max_new_tokens = 8;
    GenerateResult r1 = generate(m, adapters, cents, prompt, RouterConfig{}, opts);
    GenerateResult r2 = generate(m, adapters, cents, prompt, RouterConfig{}, opts);
    CHECK(r1.generated == r2.generated);
    REQUIRE(r1.trace.steps.size() == r2.trace.steps.size());
    for (std::size_t i = 0; i < r1.trace.steps.size(); ++i) {
        CHECK(r1.trace.steps[i].weights == r2.trace.steps[i].weights);
        CHECK(r1.trace.steps[i].similarities == r2.trace.steps[i].similarities);
    }
}

TEST_CASE("trace weights are normalized and merge positions match the stride") {
    const Model m = make_model<float>(tiny_config(), 10);
    std::vector<LoraAdapter> adapters{named_adapter(m, "a", 1), named_adapter(m, "b", 2)};
    std::vector<Centroid> cents{compute_centroid(m, {tok::encode("copy: aa=")}, "a"),
                                compute_centroid(m, {tok::encode("calc: 2+2=")}, "b")};
    GenerateOptions opts;
    opts.max_new_tokens = 9;
    opts.eos_token.reset();
    RouterConfig cfg;
    cfg.stride = 3;
    GenerateResult r = generate(m, adapters, cents, tok::encode("copy: aa="), cfg, opts);
    for (const TraceStep& s : r.trace.steps) {
        double sum = 0.0;
        for (double w : s.weights) sum += w;
        CHECK(std::abs(sum - 1.0) < 1e-6);
        CHECK(s.merged == (s.position % cfg.stride == 0));
    }
}

TEST_CASE("trace jsonl round trip") {
    RoutingTrace trace;
    for (int i = 0; i < 3; ++i) {
        TraceStep s;
        s.position = i;
        s.similarities = {0.1 * i, 0.2};
        s.weights = {0.4, 0.6};
        s.argmax = 1;
        s.argmax_name = "b";
        s.merged = i % 2 == 0;
        trace.steps.push_back(s);
    }
    std::stringstream ss;
    write_trace_jsonl(trace, ss);
    RoutingTrace back = read_trace_jsonl(ss);
    REQUIRE(back.steps.size() == trace.steps.size());
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        CHECK(back.steps[i].position == trace.steps[i].position);
        CHECK(back.steps[i].similarities == trace.steps[i].similarities);
        CHECK(back.steps[i].weights == trace.steps[i].weights);
        CHECK(back.steps[i].argmax_name == trace.steps[i].argmax_name);
        CHECK(back.steps[i].merged == trace.steps[i].merged);
    }
}

TEST_CASE("centroid file round trip is bitwise") {
    const Model m = make_model<float>(tiny_config(), 11);
    Centroid c = compute_centroid(m, {tok::encode("rev: abc=")}, "a");
    const auto path = std::filesystem::temp_directory_path() / "loramix_centroid_test.ltle";
    save_centroid(c, path);
    Centroid back = load_centroid(path);
    CHECK(back.adapter_name == c.adapter_name);
    CHECK(back.sample_count == c.sample_count);
    REQUIRE(back.vector.size() == c.vector.size());
    for (std::size_t i = 0; i < c.vector.size(); ++i) CHECK(back.vector[i] == c.vector[i]);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
