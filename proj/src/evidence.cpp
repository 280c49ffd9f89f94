#include "dromql/evidence.hpp"

#include <algorithm>

namespace dromql {

LinkResult link_schema(const Pipeline& draft, const SchemaTree& schema, const FieldIndex& index,
                       int k, const Embedder& embedder) {
  LinkResult out;
  const std::set<FieldPath> f0 = extract_fields(draft);
  out.fields = f0;
  if (!index.empty()) {
    for (const auto& f : f0) {
      for (const auto& hit : index.topk(f, k, embedder)) out.fields.insert(hit.path);
    }
  }
  out.pruned = prune(schema, out.fields);
  return out;
}

std::vector<ValueEvidence> ground_values(const Pipeline& draft, const Database& db,
                                         const std::string& collection, const FieldIndex& index,
                                         int k, const Embedder& embedder) {
  std::vector<ValueEvidence> out;
  if (!db.has_collection(collection)) return out;

  // (field, value) mentions: eq directly, each $in element separately.
  std::vector<std::pair<FieldPath, Value>> mentions;
  auto add_mention = [&](const FieldPath& f, const Value& v) {
    for (const auto& [mf, mv] : mentions) {
      if (mf == f && mv == v) return;
    }
    mentions.emplace_back(f, v);
  };
  for (const auto& pred : extract_value_predicates(draft)) {
    if (pred.op == PredOp::Eq) {
      add_mention(pred.path, pred.value);
    } else if (pred.op == PredOp::In && pred.value.is_array()) {
      for (const auto& elem : pred.value.as_array()) add_mention(pred.path, elem);
    }
  }

  for (const auto& [field, value] : mentions) {
    ValueEvidence ev;
    ev.mention_field = field;
    ev.mention_value = value;

    std::vector<FieldPath> candidates{field};
    if (!index.empty()) {
      for (const auto& hit : index.topk(field, k, embedder)) {
        if (std::find(candidates.begin(), candidates.end(), hit.path) == candidates.end()) {
          candidates.push_back(hit.path);
        }
      }
    }
    for (const auto& g : candidates) {
      ProbeEvidence probe = probe_match(db, collection, g, value);
      if (probe.matched) ev.verified.push_back(std::move(probe));
    }
    out.push_back(std::move(ev));
  }
  return out;
}

EvidenceContext assemble_context(const std::string& question, const SchemaTree& schema,
                                 const std::optional<Pipeline>& draft, ContextFlags flags,
                                 const Database& db, const FieldIndex& index, int k,
                                 const Embedder& embedder) {
  EvidenceContext ctx;
  ctx.question = question;
  ctx.flags = flags;
  ctx.draft = draft;

  const SchemaTree* tree = &schema;
  SchemaTree pruned;
  if (flags.use_link && draft.has_value()) {
    LinkResult link = link_schema(*draft, schema, index, k, embedder);
    if (link.pruned.fields.empty()) {
      ctx.link_fallback = true;  // empty schema prompts are strictly harmful
    } else {
      pruned = std::move(link.pruned);
      tree = &pruned;
    }
  } else if (flags.use_link) {
    ctx.link_fallback = true;
  }
  ctx.schema_text = flags.use_mschema ? render_mschema(*tree) : render_ts(*tree);

  if (flags.use_ground && draft.has_value()) {
    ctx.value_evidence =
        ground_values(*draft, db, schema.collection, index, k, embedder);
  }
  return ctx;
}

}  // namespace dromql
