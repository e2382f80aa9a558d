#include "monet/search.hpp"

#include <sstream>
#include <stdexcept>

namespace monet {

CandidateSet top_scale_candidates(const ScaleConfig& cfg) {
  cfg.validate();
  const int g = cfg.grid_size(cfg.top_scale);
  const int cells = g * g;
  CandidateSet set{cfg.top_scale, g, {}};
  set.pairs.reserve(static_cast<std::size_t>(cells) * static_cast<std::size_t>(cells));
  for (int p1 = 0; p1 < cells; ++p1)
    for (int p2 = 0; p2 < cells; ++p2) set.pairs.push_back({p1, p2});
  return set;
}

CandidateSet propagate(const ScaleConfig& cfg, const OverlapScoreMap& map) {
  if (map.scale <= cfg.min_scale)
    throw std::invalid_argument("propagate: no finer scale below " + std::to_string(map.scale));
  const int g = map.grid;
  const int cg = 2 * g;
  CandidateSet set{map.scale - 1, cg, {}};
  set.pairs.reserve(static_cast<std::size_t>(2 * g * g * 16));

  auto kids = [&](int p) {
    const int r = p / g;
    const int c = p % g;
    return std::array<int, 4>{(2 * r) * cg + 2 * c, (2 * r) * cg + 2 * c + 1,
                              (2 * r + 1) * cg + 2 * c, (2 * r + 1) * cg + 2 * c + 1};
  };
  auto expand = [&](int p1, int p2) {
    for (int a : kids(p1))
      for (int b : kids(p2)) set.pairs.push_back({a, b});
  };
  auto check = [&](const std::vector<int>& best, const std::vector<int>& partner, int p) {
    if (best[static_cast<std::size_t>(p)] >= 0 && partner[static_cast<std::size_t>(p)] < 0)
      throw std::invalid_argument("propagate: compared patch " + std::to_string(p) +
                                  " at scale " + std::to_string(map.scale) + " has no argmax");
  };
  for (int p = 0; p < g * g; ++p) {
    check(map.best1, map.partner1, p);
    if (const int q = map.partner1[static_cast<std::size_t>(p)]; q >= 0) expand(p, q);
  }
  for (int q = 0; q < g * g; ++q) {
    check(map.best2, map.partner2, q);
    if (const int p = map.partner2[static_cast<std::size_t>(q)]; p >= 0) expand(p, q);
  }
  return set;
}

std::map<int, OverlapScoreMap> hierarchical_search(const ScaleConfig& cfg,
                                                   const ScaleScorer& scorer) {
  std::map<int, OverlapScoreMap> maps;
  CandidateSet candidates = top_scale_candidates(cfg);
  for (int s = cfg.top_scale;; --s) {
    auto& map = maps[s] = scorer(candidates);
    if (s == cfg.min_scale) break;
    candidates = propagate(cfg, map);
  }
  return maps;
}

PipelineOutput run_pipeline(const Model& model, const Tensor& image1, const Tensor& image2,
                            const PipelineOptions& options) {
  const auto& cfg = model.scales();
  PipelineTrace local;
  PipelineTrace& trace = options.trace ? *options.trace : local;
  trace = PipelineTrace{};
  trace.f1 = model.encoder().forward(image1, &trace.enc1);
  trace.f2 = model.encoder().forward(image2, &trace.enc2);

  PipelineOutput out;
  out.score_maps = hierarchical_search(cfg, [&](const CandidateSet& cands) {
    const int s = cands.scale;
    const OverlapScoreMap* frozen = nullptr;
    if (options.frozen) frozen = &options.frozen->score_maps.at(s);
    trace.candidates[s] = cands;
    return build_score_maps(model.detector(s), trace.f1.at(s), trace.f2.at(s), cands,
                            &out.ledger, frozen);
  });

  std::map<int, Tensor> maps;
  for (const auto& [s, m] : out.score_maps) maps[s] = m.as_tensor();
  std::tie(out.mask1, out.mask2) = model.decoder().forward(maps, &trace.decoder);
  return out;
}

void backward_pipeline(Model& model, const PipelineTrace& trace, const PipelineOutput& out,
                       const Tensor& dmask1, const Tensor& dmask2, FeatureMaps extra_df1,
                       FeatureMaps extra_df2) {
  const auto& cfg = model.scales();
  FeatureMaps df1 = std::move(extra_df1);
  FeatureMaps df2 = std::move(extra_df2);
  for (const auto& [s, f] : trace.f1) {
    if (!df1.count(s)) df1[s] = Tensor(f.shape());
    if (!df2.count(s)) df2[s] = Tensor(trace.f2.at(s).shape());
  }

  const auto dmaps = model.decoder().backward(trace.decoder, dmask1, dmask2);
  for (int s = cfg.min_scale; s <= cfg.top_scale; ++s) {
    const auto& map = out.score_maps.at(s);
    const auto& cands = trace.candidates.at(s);
    const auto& dmap = dmaps.at(s);
    std::vector<double> pair_grad(cands.pairs.size(), 0.0);
    const auto cells = map.o1.size();
    for (std::size_t p = 0; p < cells; ++p) {
      if (map.best1[p] >= 0) pair_grad[static_cast<std::size_t>(map.best1[p])] += dmap[2 * p];
      if (map.best2[p] >= 0) pair_grad[static_cast<std::size_t>(map.best2[p])] += dmap[2 * p + 1];
    }
    auto& det = model.detector(s);
    const auto c = static_cast<std::size_t>(det.channels());
    const auto& f1 = trace.f1.at(s);
    const auto& f2 = trace.f2.at(s);
    for (std::size_t k = 0; k < pair_grad.size(); ++k) {
      if (pair_grad[k] == 0.0) continue;
      const auto u1 = static_cast<std::size_t>(cands.pairs[k].p1);
      const auto u2 = static_cast<std::size_t>(cands.pairs[k].p2);
      det.backward(f1.data().subspan(u1 * c, c), f2.data().subspan(u2 * c, c), pair_grad[k],
                   df1[s].data().subspan(u1 * c, c), df2[s].data().subspan(u2 * c, c));
    }
  }
  model.encoder().backward(trace.enc1, df1);
  model.encoder().backward(trace.enc2, df2);
}

// ---------------------------------------------------------------------------
// Budget reports

bool BudgetReport::passed() const {
  for (const auto& r : rows)
    if (!r.ok) return false;
  return true;
}

std::string BudgetReport::failures() const {
  std::ostringstream os;
  for (const auto& r : rows)
    if (!r.ok)
      os << "scale " << r.scale << ": executed " << r.executed << ", expected " << r.ours << "\n";
  return os.str();
}

std::string BudgetReport::to_csv() const {
  std::ostringstream os;
  os << "scale,patch_dim,naive,ours";
  if (has_executed) os << ",executed,status";
  os << "\n";
  for (const auto& r : rows) {
    os << r.scale << ',' << r.patch_dim << ',' << r.naive << ',' << r.ours;
    if (has_executed) os << ',' << r.executed << ',' << (r.ok ? "ok" : "FAIL");
    os << "\n";
  }
  return os.str();
}

std::string BudgetReport::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-10s %16s %12s", "Scale", "Patch", "Naive", "Ours");
  os << line;
  if (has_executed) os << "     Executed  Status";
  os << "\n";
  for (const auto& r : rows) {
    const std::string patch = std::to_string(r.patch_dim) + "x" + std::to_string(r.patch_dim);
    std::snprintf(line, sizeof line, "%-6d %-10s %16llu %12llu", r.scale, patch.c_str(),
                  static_cast<unsigned long long>(r.naive),
                  static_cast<unsigned long long>(r.ours));
    os << line;
    if (has_executed) {
      std::snprintf(line, sizeof line, " %12llu  %s", static_cast<unsigned long long>(r.executed),
                    r.ok ? "ok" : "FAIL");
      os << line;
    }
    os << "\n";
  }
  return os.str();
}

BudgetReport budget_table(const ScaleConfig& cfg) {
  cfg.validate();
  BudgetReport report;
  for (int s = cfg.top_scale; s >= cfg.min_scale; --s)
    report.rows.push_back({s, cfg.patch_dim(s), naive_budget(cfg, s), ours_budget(cfg, s), 0, true});
  return report;
}

BudgetReport verify_budget(const ComparisonLedger& ledger, const ScaleConfig& cfg) {
  BudgetReport report = budget_table(cfg);
  report.has_executed = true;
  for (auto& r : report.rows) {
    r.executed = ledger.count(r.scale);
    r.ok = r.executed == r.ours && r.executed <= r.naive;
  }
  for (const auto& [s, n] : ledger.counts())
    if (!cfg.has_scale(s) && n > 0)
      report.rows.push_back({s, 0, 0, 0, n, false});
  return report;
}

BudgetReport parse_budget_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("budget csv: empty input");
  BudgetReport report;
  report.has_executed = line.find("executed") != std::string::npos;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) throw std::invalid_argument("budget csv: short row '" + line + "'");
    BudgetRow r;
    r.scale = std::stoi(cells[0]);
    r.patch_dim = std::stoi(cells[1]);
    r.naive = std::stoull(cells[2]);
    r.ours = std::stoull(cells[3]);
    if (report.has_executed && cells.size() >= 6) {
      r.executed = std::stoull(cells[4]);
      r.ok = cells[5] == "ok";
    }
    report.rows.push_back(r);
  }
  return report;
}

}  // namespace monet
