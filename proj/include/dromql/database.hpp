#pragma once

#include <map>
#include <string>
#include <vector>

#include "dromql/errors.hpp"
#include "dromql/value.hpp"

namespace dromql {

using Document = Value;  // root values of kind document

// An in-memory document store. Immutable once loaded; collections keep
// their load order.
class Database {
 public:
  Database() = default;

  bool has_collection(const std::string& name) const {
    return collections_.count(name) != 0;
  }

  const std::vector<Document>& collection(const std::string& name) const {
    auto it = collections_.find(name);
    if (it == collections_.end()) {
      throw UnknownCollectionError("unknown collection: " + name);
    }
    return it->second;
  }

  std::vector<std::string> collection_names() const {
    std::vector<std::string> names;
    for (const auto& [k, v] : collections_) names.push_back(k);
    return names;
  }

  friend Database load_collection(const Database& db, const std::string& name,
                                  std::vector<Document> rows);

 private:
  std::map<std::string, std::vector<Document>> collections_;
};

// Returns a copy of db with the collection added; throws DuplicateCollectionError.
Database load_collection(const Database& db, const std::string& name,
                         std::vector<Document> rows);

// One document per line, extended-JSON wrappers for dates/objectids.
std::vector<Document> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<Document>& rows);

// Loads every <collection>.jsonl in the directory.
Database load_database_dir(const std::string& dir);

}  // namespace dromql
