#include <benchmark/benchmark.h>

#include "decfd/adam.hpp"
#include "decfd/corpus.hpp"
#include "decfd/encoder.hpp"
#include "decfd/graph.hpp"
#include "decfd/ntm.hpp"
#include "decfd/rng.hpp"

using namespace decfd;

namespace {

corpus::BowVector random_bow(std::size_t vocab, std::size_t words, Rng& rng) {
    std::map<std::size_t, std::uint32_t> acc;
    for (std::size_t i = 0; i < words; ++i) {
        acc[rng.uniform_int(vocab)] += 1;
    }
    corpus::BowVector bow;
    bow.vocab_size = vocab;
    bow.counts.assign(acc.begin(), acc.end());
    return bow;
}

}  // namespace

static void BM_Tokenize(benchmark::State& state) {
    const std::string text =
        "Who would have thought a pillow could make such a difference. "
        "I wish I knew earlier; it doesn't work as well as I was hoping it would!";
    for (auto _ : state) {
        benchmark::DoNotOptimize(corpus::tokenize(text));
    }
}
BENCHMARK(BM_Tokenize);

static void BM_NtmForwardBackward(benchmark::State& state) {
    const std::size_t v = static_cast<std::size_t>(state.range(0));
    ntm::Config cfg;
    cfg.vocab_size = v;
    cfg.topics = 15;
    cfg.hidden = 256;
    ntm::Params p;
    Rng rng(1);
    p.init(cfg, rng);
    const auto bow = random_bow(v, 14, rng);
    nn::Tensor eps({cfg.topics});
    for (std::size_t k = 0; k < cfg.topics; ++k) eps[k] = rng.normal();
    for (auto _ : state) {
        for (nn::Param* q : p.params()) q->zero_grad();
        nn::Graph g;
        const auto lo = ntm::loss(g, p, bow, eps, 0.25);
        g.backward(lo.loss);
        benchmark::DoNotOptimize(g.value(lo.loss).item());
    }
}
BENCHMARK(BM_NtmForwardBackward)->Arg(500);

static void BM_EncoderForward(benchmark::State& state) {
    encoder::Config cfg;
    cfg.d_model = 64;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.max_len = 128;
    cfg.vocab_size = 502;
    encoder::Params p;
    Rng rng(2);
    p.init(cfg, rng);
    std::vector<std::size_t> ids(static_cast<std::size_t>(state.range(0)));
    for (auto& id : ids) id = rng.uniform_int(cfg.vocab_size - 1);
    for (auto _ : state) {
        nn::Graph g;
        const auto fwd = encoder::forward(g, p, ids);
        benchmark::DoNotOptimize(g.value(fwd.hidden).data());
    }
}
BENCHMARK(BM_EncoderForward)->Arg(16)->Arg(48);

static void BM_AdamStep(benchmark::State& state) {
    Rng rng(3);
    nn::Tensor w({256, 500});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1, 1);
    nn::Param p("w", std::move(w));
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = rng.uniform(-1, 1);
    nn::Adam adam({&p}, {1e-3, 0.9, 0.999, 1e-8, 1e-6});
    for (auto _ : state) {
        adam.step();
        benchmark::DoNotOptimize(p.value.data());
    }
}
BENCHMARK(BM_AdamStep);

BENCHMARK_MAIN();
