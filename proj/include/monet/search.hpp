#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "monet/network.hpp"
#include "monet/pyramid.hpp"

namespace monet {

/// Every top-scale patch of image 1 against every top-scale patch of image 2.
CandidateSet top_scale_candidates(const ScaleConfig& cfg);

/// Children-of-argmax expansion to scale - 1: for every image-1 patch and its
/// argmax partner, all 4 x 4 child pairs; then the same for every image-2
/// patch. Pairs selected from both sides are kept twice.
CandidateSet propagate(const ScaleConfig& cfg, const OverlapScoreMap& map);

/// Scores one scale's candidate set into a score map.
using ScaleScorer = std::function<OverlapScoreMap(const CandidateSet&)>;

/// Top-down search from the top scale to min_scale; returns the map per scale.
std::map<int, OverlapScoreMap> hierarchical_search(const ScaleConfig& cfg,
                                                   const ScaleScorer& scorer);

/// Forward intermediates needed for backprop.
struct PipelineTrace {
  Encoder::Cache enc1, enc2;
  FeatureMaps f1, f2;
  std::map<int, CandidateSet> candidates;
  Decoder::Cache decoder;
};

struct PipelineOutput {
  std::map<int, OverlapScoreMap> score_maps;
  Tensor mask1, mask2;  // [N, N, 1] probabilities
  ComparisonLedger ledger;
};

struct PipelineOptions {
  PipelineTrace* trace = nullptr;
  /// Reuse the candidate sets and max routing of a previous run; used to
  /// finite-difference the pipeline without argmax switches.
  const PipelineOutput* frozen = nullptr;
};

PipelineOutput run_pipeline(const Model& model, const Tensor& image1, const Tensor& image2,
                            const PipelineOptions& options = {});

/// Backpropagates mask gradients (and optional extra feature gradients, e.g.
/// from a ranking loss on the same features) into the model's grad buffers.
/// Gradients reach the detector only through each patch's argmax pair.
void backward_pipeline(Model& model, const PipelineTrace& trace, const PipelineOutput& out,
                       const Tensor& dmask1, const Tensor& dmask2,
                       FeatureMaps extra_df1 = {}, FeatureMaps extra_df2 = {});

struct BudgetRow {
  int scale = 0;
  int patch_dim = 0;
  std::uint64_t naive = 0;
  std::uint64_t ours = 0;
  std::uint64_t executed = 0;
  bool ok = true;
};

struct BudgetReport {
  std::vector<BudgetRow> rows;  // top scale first
  bool has_executed = false;

  bool passed() const;
  std::string failures() const;
  std::string to_csv() const;
  std::string to_text() const;
};

/// Formula-only table (naive vs hierarchical) for a config.
BudgetReport budget_table(const ScaleConfig& cfg);
/// Compares executed counts with the hierarchical budget at every scale.
BudgetReport verify_budget(const ComparisonLedger& ledger, const ScaleConfig& cfg);
/// Parses the CSV written by BudgetReport::to_csv.
BudgetReport parse_budget_csv(const std::string& csv);

}  // namespace monet
