#pragma once

#include <memory>
#include <vector>

#include "corelation/data.hpp"
#include "corelation/diagnostics.hpp"
#include "corelation/model.hpp"
#include "corelation/training.hpp"

namespace corelation::testing {

/// A synthetic corpus together with the code space built from it.
struct Corpus {
    SyntheticCorpus raw;
    std::unique_ptr<CodeSpace> space;
};

inline Corpus make_corpus(const SyntheticSpec& spec, std::size_t distance_cap = 6) {
    Corpus c;
    c.raw = generate_synthetic(spec);
    CodeSpace::Options opts;
    opts.synonyms_per_code = spec.synonyms_per_code;
    opts.distance_cap = distance_cap;
    c.space = std::make_unique<CodeSpace>(
        CodeSpace::build(c.raw.codes, parse_descriptions(c.raw.descriptions_text), c.raw.hierarchy_text, opts));
    return c;
}

inline SyntheticSpec micro_spec() { return micro_pipeline_spec(); }
inline ModelConfig micro_model_config() { return micro_pipeline_config(); }

inline std::unique_ptr<CoRelationModel> make_model(const Corpus& corpus, const ModelConfig& config,
                                                   std::uint64_t seed) {
    return std::make_unique<CoRelationModel>(config, *corpus.space, build_vocabulary(*corpus.space, corpus.raw.notes),
                                             seed);
}

inline std::vector<Parameter*> all_parameters(CoRelationModel& model) {
    std::vector<Parameter*> out;
    for (auto& p : model.parameters().all()) out.push_back(&p);
    return out;
}

}  // namespace corelation::testing
