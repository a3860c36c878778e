#pragma once

#include <cstddef>
#include <cstdint>

#include "corelation/data.hpp"
#include "corelation/gradcheck.hpp"
#include "corelation/model.hpp"

namespace corelation {

/// 12 codes under 4 majors, M = 2, two notes, two certain implications.
SyntheticSpec micro_pipeline_spec();
/// e = 16, K = 6, every other width tiny.
ModelConfig micro_pipeline_config();

struct PipelineCheckOptions {
    std::uint64_t seed = 1;
    double h = 1e-3;
    std::size_t coordinates = 512;
    double dropout = 0.1;
    /// Train until the gap between the K-th and (K+1)-th direct probability is
    /// at least this large in every pass, so +-h cannot flip the selection.
    double warmup_margin = 1e-2;
    std::size_t max_warmup_steps = 50;
};

struct PipelineCheckResult {
    GradCheckResult check;
    std::size_t warmup_steps = 0;
    double margin = 0.0;
    bool margin_reached = false;
};

/// Finite-difference check of the full training loss (cross-entropy, gate
/// penalty and R-Drop over two notes) with respect to every parameter.
PipelineCheckResult check_micro_pipeline(const PipelineCheckOptions& options);

/// Same check on a single linear layer under a squared loss.
GradCheckResult check_linear(std::uint64_t seed, double h);

}  // namespace corelation
