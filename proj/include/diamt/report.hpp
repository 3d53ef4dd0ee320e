#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diamt/geometry.hpp"
#include "diamt/metrics_log.hpp"
#include "diamt/svgplot.hpp"
#include "diamt/trainer.hpp"

namespace diamt {

/// Each writer emits one figure analogue (SVG) plus its backing CSV into
/// out_dir. File names are fixed per figure.

/// Variety dendrogram from surface distances (dendrogram.svg, newick.txt,
/// distance_matrix.csv).
void report_dendrogram(const ParallelCorpus& corpus, const std::string& out_dir);

/// Layer-wise anchored L2/cosine curves (anchored_l2.svg, anchored_cosine.svg,
/// anchored_distances.csv). per_layer[l] holds the distances at layer l.
void report_anchored(const std::vector<std::vector<AnchoredDistance>>& per_layer,
                     const std::string& anchor, const std::string& out_dir);

/// Layer-wise correlation between representation distance and generation
/// quality (layer_correlation.svg/.csv).
void report_layer_correlation(const std::vector<double>& layer_r,
                              const std::string& out_dir);

/// Per-variety generation chrF++ (generation_chrf.svg/.csv).
void report_generation_scores(const GenerationEval& eval,
                              const std::string& out_dir);

/// Per-variety tokenizer fertility (fertility.svg/.csv).
void report_fertility(
    const std::vector<std::pair<std::string, double>>& fertility_by_variety,
    const std::string& out_dir);

/// Code-length evolution across checkpoints (code_length.svg/.csv).
void report_code_length(const AnalysisResult& analysis,
                        const std::string& standard_id,
                        const std::string& out_dir);

/// SSA evolution and SSA-vs-chrF++ relation (ssa.svg, ssa_vs_chrf.svg,
/// ssa.csv).
void report_ssa(const AnalysisResult& analysis, const std::string& standard_id,
                const std::string& out_dir);

/// LM/decoupling/validation loss curves from a training log
/// (<prefix>_losses.svg).
void report_training_curves(const MetricsLog& log, const std::string& out_dir,
                            const std::string& prefix);

/// Baseline-vs-decouple generation comparison (comparison.svg) and the
/// per-variety delta table (summary_deltas.csv, delta = decouple - sft).
/// Errors when the two evals cover different variety sets.
void report_comparison(const GenerationEval& sft, const GenerationEval& decouple,
                       const std::string& standard_id,
                       const std::string& out_dir);

}  // namespace diamt
