#include "segref/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>

#include "segref/core/parallel.hpp"

namespace segref {

std::string_view filter_kind_name(FilterKind k) noexcept {
  switch (k) {
    case FilterKind::kGlobalCrossModal: return "global-cross-modal";
    case FilterKind::kGroupCrossModal: return "group-cross-modal";
    case FilterKind::kGroupIntraModal: return "group-intra-modal";
    case FilterKind::kGroupIntraModalWeighted: return "group-intra-modal-weighted";
  }
  return "unknown";
}

FilterKind parse_filter_kind(std::string_view name) {
  if (name == "a" || name == "global-cross-modal") return FilterKind::kGlobalCrossModal;
  if (name == "b" || name == "group-cross-modal") return FilterKind::kGroupCrossModal;
  if (name == "c" || name == "group-intra-modal") return FilterKind::kGroupIntraModal;
  if (name == "d" || name == "group-intra-modal-weighted") {
    return FilterKind::kGroupIntraModalWeighted;
  }
  fail(ErrorCode::kInvalidArgument, "unknown filter strategy '" + std::string(name) + "'");
}

std::vector<std::string> SynonymTable::synonyms_of(const std::string& root) const {
  std::vector<std::string> out;
  for (const auto& [a, b] : pairs) {
    if (a == root) out.push_back(b);
    if (b == root) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::size_t drop_count(double ratio_percent, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio_percent * static_cast<double>(n) / 100.0));
}

void check_delta(double delta) {
  if (!(delta >= 0.0 && delta <= 100.0)) {
    fail(ErrorCode::kInvalidArgument, "delta_filter must lie in [0, 100]");
  }
}

}  // namespace

GlobalCutoff global_cross_modal_cutoff(std::span<const PairRecord> pairs, double delta_filter) {
  check_delta(delta_filter);
  for (const auto& p : pairs) {
    if (std::isnan(p.cross_modal_score)) {
      fail(ErrorCode::kMissingCrossModalScores, "pair without a cross-modal score");
    }
  }
  GlobalCutoff cut;
  cut.count = drop_count(delta_filter, pairs.size());
  if (cut.count == 0) return cut;
  if (cut.count >= pairs.size()) {
    cut.drops_all = true;
    return cut;
  }
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::nth_element(order.begin(), order.begin() + cut.count, order.end(),
                   [&](std::size_t x, std::size_t y) {
                     return std::tie(pairs[x].cross_modal_score, x) <
                            std::tie(pairs[y].cross_modal_score, y);
                   });
  cut.score = pairs[order[cut.count]].cross_modal_score;
  cut.index = order[cut.count];
  return cut;
}

std::vector<LabelGroup> group_by_root(std::span<const PairRecord> pairs,
                                      std::span<const std::size_t> segment_rows,
                                      const EmbeddingMatrix& segments, CenterStrategy center) {
  if (segment_rows.size() != pairs.size()) {
    fail(ErrorCode::kShapeMismatch, "segment_rows length differs from pair count");
  }
  if (!segments.normalized()) {
    fail(ErrorCode::kNotNormalized, "group_by_root needs normalized segment embeddings");
  }
  std::map<std::string, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_root[pairs[i].root].push_back(i);

  std::vector<LabelGroup> groups;
  groups.reserve(by_root.size());
  for (auto& [root, members] : by_root) groups.push_back({root, std::move(members), {}, {}});

  parallel::for_each_chunk(groups.size(), 8, [&](std::size_t g0, std::size_t g1) {
    for (std::size_t g = g0; g < g1; ++g) {
      LabelGroup& group = groups[g];
      std::vector<std::size_t> rows;
      rows.reserve(group.members.size());
      for (std::size_t m : group.members) rows.push_back(segment_rows[m]);
      const EmbeddingMatrix member_rows = segments.select_rows(rows);
      group.center = group_center(member_rows, center);
      group.intra_scores.resize(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        group.intra_scores[i] = static_cast<float>(dot(member_rows.row(i), group.center));
      }
    }
  });
  return groups;
}

std::optional<std::size_t> chord_distance_knee(std::span<const double> ys) {
  const std::size_t n = ys.size();
  if (n < 3) return std::nullopt;
  const double x1 = static_cast<double>(n - 1);
  const double dy = ys[n - 1] - ys[0];
  const double length = std::hypot(x1, dy);
  std::size_t best = 0;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    // distance from (x, y_i) to the line through (0, y_0) and (x1, y_{n-1})
    const double dist = std::abs(dy * x - x1 * (ys[i] - ys[0])) / length;
    if (dist > best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  if (best_dist <= 1e-12) return std::nullopt;
  return best;
}

PruneResult prune_ambiguous_labels(std::vector<LabelGroup> groups, const KneeDetector& knee) {
  if (groups.size() < 3) {
    fail(ErrorCode::kTooFewGroups,
         "knee detection needs at least 3 groups, got " + std::to_string(groups.size()));
  }
  std::sort(groups.begin(), groups.end(), [](const LabelGroup& a, const LabelGroup& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.root < b.root;
  });
  std::vector<double> ys(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    ys[i] = std::log(static_cast<double>(groups[i].members.size()));
  }

  PruneResult result;
  const std::optional<std::size_t> at = knee(ys);
  if (at) result.knee_size = groups[*at].members.size();
  for (auto& g : groups) {
    if (result.knee_size && g.members.size() > *result.knee_size) {
      result.dropped_roots.push_back(g.root);
    } else {
      result.kept.push_back(std::move(g));
    }
  }
  std::sort(result.kept.begin(), result.kept.end(),
            [](const LabelGroup& a, const LabelGroup& b) { return a.root < b.root; });
  return result;
}

double group_drop_ratio(const LabelGroup& group, const FilterStrategy& strategy) {
  check_delta(strategy.delta_filter);
  if (strategy.kind != FilterKind::kGroupIntraModalWeighted) return strategy.delta_filter;
  if (group.intra_scores.empty()) return 0.0;
  double w = 0.0;
  for (float s : group.intra_scores) w += 1.0 - static_cast<double>(s);
  w /= static_cast<double>(group.intra_scores.size());
  return std::clamp(2.0 * strategy.delta_filter * w, 0.0, 50.0);
}

FilterResult filter_group(const LabelGroup& group, std::span<const PairRecord> pairs,
                          const FilterStrategy& strategy,
                          const std::optional<GlobalCutoff>& global) {
  check_delta(strategy.delta_filter);
  const bool cross_modal = strategy.kind == FilterKind::kGlobalCrossModal ||
                           strategy.kind == FilterKind::kGroupCrossModal;
  if (cross_modal) {
    for (std::size_t m : group.members) {
      if (m >= pairs.size()) fail(ErrorCode::kInvalidArgument, "group member out of range");
      if (std::isnan(pairs[m].cross_modal_score)) {
        fail(ErrorCode::kMissingCrossModalScores,
             "group '" + group.root + "' has a pair without a cross-modal score");
      }
    }
  }

  FilterResult out;
  if (strategy.kind == FilterKind::kGlobalCrossModal) {
    if (!global) fail(ErrorCode::kInvalidArgument, "global strategy needs a dataset cutoff");
    for (std::size_t m : group.members) {
      (global->drops(pairs[m].cross_modal_score, m) ? out.dropped : out.kept).push_back(m);
    }
    return out;
  }

  const std::size_t n = group.members.size();
  if (!cross_modal && group.intra_scores.size() != n) {
    fail(ErrorCode::kShapeMismatch, "intra_scores length differs from members");
  }
  const std::size_t count = n <= 1 ? 0 : drop_count(group_drop_ratio(group, strategy), n);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto score = [&](std::size_t pos) {
    return cross_modal ? pairs[group.members[pos]].cross_modal_score : group.intra_scores[pos];
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const float sx = score(x), sy = score(y);
    if (sx != sy) return sx < sy;
    return group.members[x] < group.members[y];
  });
  std::vector<bool> drop(n, false);
  for (std::size_t i = 0; i < count; ++i) drop[order[i]] = true;
  for (std::size_t i = 0; i < n; ++i) {
    (drop[i] ? out.dropped : out.kept).push_back(group.members[i]);
  }
  std::sort(out.kept.begin(), out.kept.end());
  std::sort(out.dropped.begin(), out.dropped.end());
  return out;
}

SynonymTable build_synonym_table(const EmbeddingMatrix& root_embeddings,
                                 std::span<const std::string> roots, std::size_t k_sim) {
  if (root_embeddings.rows() != roots.size()) {
    fail(ErrorCode::kShapeMismatch, "one embedding per root required");
  }
  {
    std::set<std::string_view> unique(roots.begin(), roots.end());
    if (unique.size() != roots.size()) fail(ErrorCode::kInvalidArgument, "duplicate roots");
  }
  SynonymTable table;
  table.k_sim = k_sim;
  if (k_sim == 0 || roots.size() < 2) return table;

  struct Candidate {
    float score;
    std::string_view first;
    std::string_view second;
  };
  // true when a ranks ahead of b
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.first, a.second) < std::tie(b.first, b.second);
  };
  // heap top is the weakest kept candidate
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> heap(better);

  constexpr std::size_t kBlock = 256;
  std::vector<std::size_t> block;
  for (std::size_t i0 = 0; i0 < roots.size(); i0 += kBlock) {
    const std::size_t i1 = std::min(roots.size(), i0 + kBlock);
    block.clear();
    for (std::size_t i = i0; i < i1; ++i) block.push_back(i);
    const SimilarityMatrix sim = cosine_sim(root_embeddings.select_rows(block), root_embeddings);
    for (std::size_t i = i0; i < i1; ++i) {
      for (std::size_t j = i + 1; j < roots.size(); ++j) {
        std::string_view a = roots[i], b = roots[j];
        if (b < a) std::swap(a, b);
        Candidate c{sim(i - i0, j), a, b};
        if (heap.size() < k_sim) {
          heap.push(c);
        } else if (better(c, heap.top())) {
          heap.pop();
          heap.push(c);
        }
      }
    }
  }
  std::vector<Candidate> kept;
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::sort(kept.begin(), kept.end(), better);
  for (const auto& c : kept) table.pairs.emplace_back(std::string(c.first), std::string(c.second));
  return table;
}

std::string substitute_root(std::string_view phrase, std::string_view replacement) {
  const TokenSpan span = root_token_span(phrase);
  std::string out(phrase.substr(0, span.begin));
  out += replacement;
  out += phrase.substr(span.end);
  return out;
}

std::vector<PairRecord> enrich_labels(std::span<const PairRecord> pairs,
                                      const SynonymTable& table) {
  std::vector<PairRecord> out(pairs.begin(), pairs.end());
  if (table.pairs.empty()) return out;

  std::unordered_map<std::string, std::vector<std::string>> synonyms;
  for (const auto& [a, b] : table.pairs) {
    synonyms[a].push_back(b);
    synonyms[b].push_back(a);
  }
  for (auto& [_, list] : synonyms) std::sort(list.begin(), list.end());

  std::set<std::tuple<std::string, std::size_t, std::string>> present;
  for (const auto& p : pairs) present.emplace(p.image_id, p.segment_index, p.phrase);

  for (const auto& p : pairs) {
    if (p.source != LabelSource::kPaired) continue;
    const auto it = synonyms.find(p.root);
    if (it == synonyms.end()) continue;
    for (const auto& syn : it->second) {
      PairRecord added = p;
      added.phrase = substitute_root(p.phrase, syn);
      added.root = syn;
      added.source = LabelSource::kSynonym;
      if (present.emplace(added.image_id, added.segment_index, added.phrase).second) {
        out.push_back(std::move(added));
      }
    }
  }
  return out;
}

EnhanceResult enhance_pairs(std::span<const PairRecord> pairs,
                            std::span<const std::size_t> segment_rows,
                            const EmbeddingMatrix& segments,
                            const RootEmbeddings& root_embeddings,
                            const EnhanceConfig& config) {
  EnhanceResult result;
  EnhanceReport& report = result.report;
  report.input_pairs = pairs.size();

  std::vector<PairRecord> current(pairs.begin(), pairs.end());
  std::vector<std::size_t> rows(segment_rows.begin(), segment_rows.end());
  if (rows.size() != current.size()) {
    fail(ErrorCode::kShapeMismatch, "segment_rows length differs from pair count");
  }

  auto keep_only = [&](const std::vector<bool>& keep) {
    std::vector<PairRecord> next_pairs;
    std::vector<std::size_t> next_rows;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (!keep[i]) continue;
      next_pairs.push_back(std::move(current[i]));
      next_rows.push_back(rows[i]);
    }
    current = std::move(next_pairs);
    rows = std::move(next_rows);
  };

  std::vector<LabelGroup> groups = group_by_root(current, rows, segments, config.center);
  report.input_groups = groups.size();

  if (config.prune_ambiguous) {
    if (groups.size() < 3) {
      report.prune_skipped = true;
    } else {
      PruneResult pruned = prune_ambiguous_labels(std::move(groups));
      report.ambiguous_roots = pruned.dropped_roots;
      const std::set<std::string> dropped(pruned.dropped_roots.begin(),
                                          pruned.dropped_roots.end());
      std::vector<bool> keep(current.size(), true);
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (dropped.contains(current[i].root)) {
          keep[i] = false;
          ++report.ambiguous_pairs_dropped;
        }
      }
      keep_only(keep);
      groups = group_by_root(current, rows, segments, config.center);
    }
  }

  if (config.apply_filter && !current.empty()) {
    std::optional<GlobalCutoff> global;
    if (config.filter.kind == FilterKind::kGlobalCrossModal) {
      global = global_cross_modal_cutoff(current, config.filter.delta_filter);
    }
    std::vector<FilterResult> per_group(groups.size());
    parallel::for_each_chunk(groups.size(), 8, [&](std::size_t g0, std::size_t g1) {
      for (std::size_t g = g0; g < g1; ++g) {
        per_group[g] = filter_group(groups[g], current, config.filter, global);
      }
    });
    std::vector<bool> keep(current.size(), true);
    for (const auto& fr : per_group) {
      for (std::size_t m : fr.dropped) keep[m] = false;
      report.filtered_pairs_dropped += fr.dropped.size();
    }
    keep_only(keep);
  }

  if (config.apply_enrich && config.k_sim > 0 && !current.empty()) {
    std::set<std::string> present_roots;
    for (const auto& p : current) present_roots.insert(p.root);
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < root_embeddings.roots.size(); ++i) {
      lookup.emplace(root_embeddings.roots[i], i);
    }
    std::vector<std::string> roots(present_roots.begin(), present_roots.end());
    std::vector<std::size_t> emb_rows;
    for (const auto& r : roots) {
      const auto it = lookup.find(r);
      if (it == lookup.end()) {
        fail(ErrorCode::kMissingEmbedding, "no text embedding for root '" + r + "'");
      }
      emb_rows.push_back(it->second);
    }
    const EmbeddingMatrix selected = root_embeddings.embeddings.select_rows(emb_rows);
    const SynonymTable table = build_synonym_table(selected, roots, config.k_sim);
    report.synonym_pairs = table.pairs;
    const std::size_t before = current.size();
    current = enrich_labels(current, table);
    report.enriched_pairs_added = current.size() - before;
  }

  std::set<std::pair<std::string, std::size_t>> seg_keys;
  std::set<std::string> phrases;
  for (const auto& p : current) {
    seg_keys.emplace(p.image_id, p.segment_index);
    phrases.insert(p.phrase);
  }
  report.output_pairs = current.size();
  report.output_segments = seg_keys.size();
  report.output_labels = phrases.size();
  result.pairs = std::move(current);
  return result;
}

}  // namespace segref
