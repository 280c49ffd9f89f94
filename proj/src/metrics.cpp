#include "dromql/metrics.hpp"

#include <functional>

namespace dromql {

namespace {

// got subsumes ref: documents may carry extra fields, arrays compare
// elementwise, numerics use the fuzzy tolerance.
bool subsumes(const Value& got, const Value& ref) {
  if (ref.is_document() && got.is_document()) {
    for (const auto& e : ref.as_document()) {
      const Value* g = got.find(e.key);
      if (g == nullptr || !subsumes(*g, e.value)) return false;
    }
    return true;
  }
  if (ref.is_array() && got.is_array()) {
    const auto& r = ref.as_array();
    const auto& g = got.as_array();
    if (r.size() != g.size()) return false;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!subsumes(g[i], r[i])) return false;
    }
    return true;
  }
  return fuzzy_equals(got, ref);
}

// Kuhn's augmenting-path matching on the ref side.
bool bipartite_assign(const std::vector<std::vector<std::size_t>>& adj, std::size_t got_size) {
  std::vector<int> match_got(got_size, -1);
  std::function<bool(std::size_t, std::vector<bool>&)> try_ref =
      [&](std::size_t r, std::vector<bool>& used) -> bool {
    for (std::size_t g : adj[r]) {
      if (used[g]) continue;
      used[g] = true;
      if (match_got[g] < 0 || try_ref(static_cast<std::size_t>(match_got[g]), used)) {
        match_got[g] = static_cast<int>(r);
        return true;
      }
    }
    return false;
  };
  for (std::size_t r = 0; r < adj.size(); ++r) {
    std::vector<bool> used(got_size, false);
    if (!try_ref(r, used)) return false;
  }
  return true;
}

}  // namespace

bool fuzzy_match(const std::vector<Document>& got, const std::vector<Document>& ref,
                 bool ordered) {
  if (got.size() < ref.size()) return false;
  if (ref.empty()) return true;

  if (ordered) {
    // Greedy earliest match preserves subsequence feasibility.
    std::size_t g = 0;
    for (const auto& r : ref) {
      while (g < got.size() && !subsumes(got[g], r)) ++g;
      if (g == got.size()) return false;
      ++g;
    }
    return true;
  }

  std::vector<std::vector<std::size_t>> adj(ref.size());
  for (std::size_t r = 0; r < ref.size(); ++r) {
    for (std::size_t g = 0; g < got.size(); ++g) {
      if (subsumes(got[g], ref[r])) adj[r].push_back(g);
    }
    if (adj[r].empty()) return false;
  }
  return bipartite_assign(adj, got.size());
}

namespace {

bool value_has_empty_leaf(const Value& v) {
  switch (v.kind()) {
    case Kind::Null: return true;
    case Kind::String: return v.as_string().empty();
    case Kind::Array:
      for (const auto& e : v.as_array()) {
        if (value_has_empty_leaf(e)) return true;
      }
      return false;
    case Kind::Document:
      for (const auto& e : v.as_document()) {
        if (value_has_empty_leaf(e.value)) return true;
      }
      return false;
    default: return false;
  }
}

}  // namespace

bool rows_non_empty(const std::vector<Document>& rows) {
  for (const auto& row : rows) {
    if (row.is_document() && !row.as_document().empty()) return true;
  }
  return false;
}

bool rows_reasonable(const std::vector<Document>& rows) {
  if (!rows_non_empty(rows)) return false;
  for (const auto& row : rows) {
    if (value_has_empty_leaf(row)) return false;
  }
  return true;
}

MetricRow score_instance(const ExecOutcome& outcome, const ExecOutcome& ref, bool ordered) {
  MetricRow row;
  row.se = outcome.ok();
  if (!row.se) return row;
  row.neo = rows_non_empty(outcome.rows);
  row.ro = row.neo && rows_reasonable(outcome.rows);
  row.cof = fuzzy_match(outcome.rows, ref.rows, ordered);
  return row;
}

double ops_score(double se, double neo, double ro, double cof) {
  return 0.6 * cof + 0.2 * se + 0.1 * neo + 0.1 * ro;
}

}  // namespace dromql
