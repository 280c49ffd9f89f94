#pragma once

#include <vector>

#include "dromql/database.hpp"
#include "dromql/executor.hpp"

namespace dromql {

// Per-instance execution metrics. Invariants: cof => se, neo => se, ro => neo.
struct MetricRow {
  bool se = false;
  bool neo = false;
  bool ro = false;
  bool cof = false;
};

// True when a one-to-one assignment of ref rows to got rows exists
// (order-respecting iff ordered) where every ref row is subsumed by its
// match: all ref leaf fields present with equal values, numerics within
// relative 1e-6 / absolute 1e-9; got rows may carry extra fields.
// Requires |got| >= |ref|; surplus got rows never fail the match.
bool fuzzy_match(const std::vector<Document>& got, const std::vector<Document>& ref,
                 bool ordered);

MetricRow score_instance(const ExecOutcome& outcome, const ExecOutcome& ref, bool ordered);

// At least one row that is not an empty document.
bool rows_non_empty(const std::vector<Document>& rows);

// Non-empty and free of null leaves and empty strings.
bool rows_reasonable(const std::vector<Document>& rows);

// 0.6*COF + 0.2*SE + 0.1*NEO + 0.1*RO over rates in [0,1].
double ops_score(double se, double neo, double ro, double cof);

struct MetricAggregate {
  double se = 0, neo = 0, ro = 0, cof = 0;
  std::size_t count = 0;

  void add(const MetricRow& row) {
    se += row.se;
    neo += row.neo;
    ro += row.ro;
    cof += row.cof;
    ++count;
  }
  double se_rate() const { return count ? se / count : 0; }
  double neo_rate() const { return count ? neo / count : 0; }
  double ro_rate() const { return count ? ro / count : 0; }
  double cof_rate() const { return count ? cof / count : 0; }
  double ops() const { return ops_score(se_rate(), neo_rate(), ro_rate(), cof_rate()); }
};

}  // namespace dromql
