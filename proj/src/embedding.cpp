#include "dromql/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "dromql/rng.hpp"

namespace dromql {

double cosine(const Vector& a, const Vector& b) {
  double dot = 0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
  return dot;  // inputs are unit vectors
}

Vector TrigramEmbedder::embed(std::string_view text) const {
  Vector v(static_cast<std::size_t>(dim_), 0.0);
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (lowered.empty()) {
    v[0] = 1.0;  // reserved basis vector for empty text
    return v;
  }
  if (lowered.size() < 3) {
    v[hash_text(lowered) % static_cast<std::uint64_t>(dim_)] = 1.0;
    return v;
  }
  for (std::size_t i = 0; i + 3 <= lowered.size(); ++i) {
    const std::uint64_t h = hash_text(std::string_view(lowered).substr(i, 3));
    v[h % static_cast<std::uint64_t>(dim_)] += 1.0;
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

FieldIndex FieldIndex::build(const SchemaTree& schema, const Embedder& embedder) {
  FieldIndex idx;
  for (const auto& path : flatten(schema)) {
    std::string text = path.dotted();
    if (const SchemaField* f = find_field(schema, path)) {
      if (!f->description.empty()) text += " - " + f->description;
    }
    idx.entries_.push_back(FieldIndexEntry{path, embedder.embed(text)});
  }
  return idx;
}

std::vector<FieldIndex::Hit> FieldIndex::topk(const FieldPath& query, int k,
                                              const Embedder& embedder) const {
  if (entries_.empty()) throw EmptyIndexError("field index is empty");
  const Vector q = embedder.embed(query.dotted());
  std::vector<Hit> hits;
  hits.reserve(entries_.size());
  for (const auto& e : entries_) {
    const double sim = (e.path == query) ? 1.0 : cosine(q, e.vector);
    hits.push_back(Hit{e.path, sim});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.path < b.path;
  });
  if (k >= 0 && hits.size() > static_cast<std::size_t>(k)) {
    hits.resize(static_cast<std::size_t>(k));
  }
  return hits;
}

}  // namespace dromql
