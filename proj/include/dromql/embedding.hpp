#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dromql/errors.hpp"
#include "dromql/field_path.hpp"
#include "dromql/schema.hpp"

namespace dromql {

// Unit-normalized embedding vector.
using Vector = std::vector<double>;

double cosine(const Vector& a, const Vector& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) const = 0;
  virtual int dim() const = 0;
};

// Deterministic default: hashed character-trigram term frequencies,
// unit-normalized. Empty text maps to a reserved basis vector.
class TrigramEmbedder : public Embedder {
 public:
  explicit TrigramEmbedder(int dim = 256) : dim_(dim) {}
  Vector embed(std::string_view text) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
};

struct FieldIndexEntry {
  FieldPath path;
  Vector vector;
};

// A vector index over the flattened schema paths. Embedding text is the
// dot-path, plus the field description when one is available.
class FieldIndex {
 public:
  FieldIndex() = default;
  static FieldIndex build(const SchemaTree& schema, const Embedder& embedder);

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<FieldIndexEntry>& entries() const { return entries_; }

  struct Hit {
    FieldPath path;
    double similarity;
  };

  // Top-k by cosine similarity, ties broken by lexicographic path order;
  // a verbatim hit ranks first with similarity 1.0. Throws EmptyIndexError.
  std::vector<Hit> topk(const FieldPath& query, int k, const Embedder& embedder) const;

 private:
  std::vector<FieldIndexEntry> entries_;
};

}  // namespace dromql
