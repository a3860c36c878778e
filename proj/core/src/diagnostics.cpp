#include "corelation/diagnostics.hpp"

#include <algorithm>
#include <numeric>

#include "corelation/layers.hpp"
#include "corelation/training.hpp"

namespace corelation {

SyntheticSpec micro_pipeline_spec() {
    SyntheticSpec s;
    s.num_codes = 12;
    s.num_majors = 4;
    s.majors_per_chapter = 2;
    s.synonyms_per_code = 2;
    s.codes_per_note = 3.0;
    s.min_note_tokens = 6;
    s.max_note_tokens = 9;
    s.noise_vocab = 20;
    s.num_notes = 2;
    s.seed = 7;
    s.implications = {{0, 5, 1.0}, {3, 9, 1.0}};
    return s;
}

ModelConfig micro_pipeline_config() {
    ModelConfig m;
    m.embed_dim = 8;
    m.hidden_dim = 8;
    m.output_dim = 16;
    m.attention_dim = 8;
    m.edge_dim = 4;
    m.ffn_dim = 16;
    m.top_k = 6;
    m.dropout = 0.1;
    return m;
}

namespace {

constexpr std::uint64_t kMaskSeed = 99;

// Smallest gap at the top-K boundary over every forward pass the loss makes,
// replaying the loss's dropout masks.
double selection_margin(const CoRelationModel& model, std::span<const NoteRecord> notes, const TrainConfig& tc) {
    Tape tape(false);
    Rng masks(kMaskSeed);
    const ForwardMode mode = ForwardMode::train(model.config().dropout, masks);
    const CodeContext ctx = model.full_context(tape, mode);
    const std::size_t k = model.config().top_k;
    const int passes = tc.rdrop > 0.0 && model.config().dropout > 0.0 ? 2 : 1;
    double margin = 1.0;
    for (const auto& note : notes) {
        const auto ids = model.token_ids(note.tokens);
        for (int pass = 0; pass < passes; ++pass) {
            ForwardTrace t = model.forward(tape, ctx, ids, mode);
            std::vector<double> p(t.direct.value().data().begin(), t.direct.value().data().end());
            if (k >= p.size()) continue;
            std::sort(p.rbegin(), p.rend());
            margin = std::min(margin, p[k - 1] - p[k]);
        }
    }
    return margin;
}

}  // namespace

PipelineCheckResult check_micro_pipeline(const PipelineCheckOptions& options) {
    const SyntheticCorpus corpus = generate_synthetic(micro_pipeline_spec());
    CodeSpace::Options so;
    so.synonyms_per_code = 2;
    const CodeSpace space =
        CodeSpace::build(corpus.codes, parse_descriptions(corpus.descriptions_text), corpus.hierarchy_text, so);
    ModelConfig mc = micro_pipeline_config();
    mc.dropout = options.dropout;
    CoRelationModel model(mc, space, build_vocabulary(space, corpus.notes), options.seed);

    TrainConfig tc;
    tc.lambda = 0.5;
    tc.rdrop = 2.0;
    tc.base_lr = 1e-2;
    tc.seed = options.seed;

    PipelineCheckResult result;
    Trainer warmup(model, tc, 0);
    result.margin = selection_margin(model, corpus.notes, tc);
    while (result.margin < options.warmup_margin && result.warmup_steps < options.max_warmup_steps) {
        warmup.step(corpus.notes);
        ++result.warmup_steps;
        result.margin = selection_margin(model, corpus.notes, tc);
    }
    result.margin_reached = result.margin >= options.warmup_margin;

    std::vector<std::size_t> all(space.size());
    std::iota(all.begin(), all.end(), 0);
    LossBuilder loss = [&](Tape& tape) {
        Rng masks(kMaskSeed);
        return batch_loss(tape, model, corpus.notes, all, tc, ForwardMode::train(mc.dropout, masks)).total;
    };
    std::vector<Parameter*> params;
    for (auto& p : model.parameters().all()) params.push_back(&p);
    Rng pick(options.seed);
    result.check = finite_difference_check(loss, params, options.h, pick, options.coordinates);
    return result;
}

GradCheckResult check_linear(std::uint64_t seed, double h) {
    Rng rng(seed);
    ParameterStore store;
    Linear layer(5, 3, store, "linear", rng);
    const Array x = uniform_array(4, 5, 1.0, rng);
    const Array target = uniform_array(4, 3, 1.0, rng);
    LossBuilder loss = [&](Tape& tape) {
        Var diff = ad::sub(layer(tape, tape.constant(x)), tape.constant(target));
        return ad::sum(ad::mul(diff, diff));
    };
    std::vector<Parameter*> params;
    for (auto& p : store.all()) params.push_back(&p);
    Rng pick(seed + 1);
    return finite_difference_check(loss, params, h, pick, 1000);
}

}  // namespace corelation
