#include <benchmark/benchmark.h>

#include <memory>
#include <numeric>

#include "corelation/model.hpp"
#include "corelation/relation_graph.hpp"

using namespace corelation;

namespace {

struct Bench {
    SyntheticCorpus raw;
    std::unique_ptr<CodeSpace> space;
    std::unique_ptr<CoRelationModel> model;
};

std::unique_ptr<Bench> make_bench(std::size_t codes, std::size_t top_k) {
    auto b = std::make_unique<Bench>();
    SyntheticSpec s;
    s.num_codes = codes;
    s.num_majors = codes / 5;
    s.num_notes = 8;
    s.min_note_tokens = 200;
    s.max_note_tokens = 200;
    b->raw = generate_synthetic(s);
    CodeSpace::Options o;
    o.synonyms_per_code = s.synonyms_per_code;
    b->space = std::make_unique<CodeSpace>(
        CodeSpace::build(b->raw.codes, parse_descriptions(b->raw.descriptions_text), b->raw.hierarchy_text, o));
    ModelConfig m;
    m.embed_dim = 32;
    m.hidden_dim = 32;
    m.output_dim = 64;
    m.attention_dim = 32;
    m.edge_dim = 16;
    m.ffn_dim = 128;
    m.top_k = top_k;
    b->model = std::make_unique<CoRelationModel>(m, *b->space, build_vocabulary(*b->space, b->raw.notes), 1);
    return b;
}

}  // namespace

static void BM_TopK(benchmark::State& state) {
    Rng rng(1);
    std::vector<double> scores(static_cast<std::size_t>(state.range(0)));
    for (auto& v : scores) v = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(select_top_k(scores, 300));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(8922);

static void BM_BuildGraph(benchmark::State& state) {
    auto b = make_bench(600, 50);
    std::vector<std::size_t> lowers(static_cast<std::size_t>(state.range(0)));
    std::iota(lowers.begin(), lowers.end(), 0);
    for (auto _ : state) benchmark::DoNotOptimize(build_relation_graph(lowers, *b->space));
    state.counters["edges"] = static_cast<double>(b->space->majors().count() * lowers.size());
}
BENCHMARK(BM_BuildGraph)->Arg(50)->Arg(300);

static void BM_EncodeNote(benchmark::State& state) {
    auto b = make_bench(100, 20);
    const auto ids = b->model->token_ids(b->raw.notes[0].tokens);
    for (auto _ : state) {
        Tape tape(false);
        benchmark::DoNotOptimize(b->model->encoder().encode_note(tape, ids, ForwardMode::eval()));
    }
}
BENCHMARK(BM_EncodeNote);

static void BM_Forward(benchmark::State& state) {
    auto b = make_bench(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    Tape shared(false);
    const CodeContext ctx = b->model->full_context(shared, ForwardMode::eval());
    const auto ids = b->model->token_ids(b->raw.notes[0].tokens);
    for (auto _ : state) {
        Tape tape(false);
        const CodeContext local = ctx.copy_to(tape);
        benchmark::DoNotOptimize(b->model->forward(tape, local, ids, ForwardMode::eval()));
    }
}
BENCHMARK(BM_Forward)->Args({200, 20})->Args({200, 100})->Args({1000, 50});
BENCHMARK_MAIN();
