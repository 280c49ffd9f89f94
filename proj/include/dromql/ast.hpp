#pragma once

#include <set>
#include <string>
#include <vector>

#include "dromql/field_path.hpp"
#include "dromql/value.hpp"

namespace dromql {

// One aggregation stage: a "$"-operator plus its body. Stages outside the
// engine's stage set still parse, flagged unsupported, so that field and
// value extraction keep working on imperfect drafts.
struct Stage {
  std::string op;
  Value body;
  bool supported = true;

  friend bool operator==(const Stage& a, const Stage& b) {
    return a.op == b.op && a.body == b.body;
  }
};

struct Pipeline {
  std::string collection;
  std::vector<Stage> stages;

  friend bool operator==(const Pipeline& a, const Pipeline& b) {
    return a.collection == b.collection && a.stages == b.stages;
  }
};

enum class PredOp { Eq, Ne, Gt, Gte, Lt, Lte, In, Nin, Regex, Exists, ElemMatch };

std::string_view pred_op_name(PredOp op);

// A (path, op, value) triple lifted from a $match stage.
struct ValuePredicate {
  FieldPath path;
  PredOp op = PredOp::Eq;
  Value value;

  friend bool operator<(const ValuePredicate& a, const ValuePredicate& b);
  friend bool operator==(const ValuePredicate& a, const ValuePredicate& b);
};

// Canonical text form: db.<collection>.aggregate([...]) in strict JSON.
std::string render_pipeline(const Pipeline& p);

// True when the operator is in the executable stage set.
bool stage_is_supported(std::string_view op);

// All field paths referenced by the pipeline (match keys, sort keys,
// projections, "$path" expression references, lookup keys). Synthetic
// output keys ($group accumulators, $count name, $lookup "as") are not
// field references and are excluded.
std::set<FieldPath> extract_fields(const Pipeline& p);

// All value predicates from $match stages, including those nested under
// logical operators and inside $lookup sub-pipelines.
std::set<ValuePredicate> extract_value_predicates(const Pipeline& p);

}  // namespace dromql
