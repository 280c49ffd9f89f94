#include "dromql/database.hpp"

#include <filesystem>
#include <fstream>

#include "dromql/parser.hpp"

namespace dromql {

Database load_collection(const Database& db, const std::string& name,
                         std::vector<Document> rows) {
  if (db.has_collection(name)) {
    throw DuplicateCollectionError("collection already loaded: " + name);
  }
  Database out = db;
  out.collections_.emplace(name, std::move(rows));
  return out;
}

std::vector<Document> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Document> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    Value v;
    try {
      v = parse_value_text(line);
    } catch (const SyntaxError& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!v.is_document()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": row is not a document");
    }
    rows.push_back(std::move(v));
  }
  return rows;
}

void write_jsonl(const std::string& path, const std::vector<Document>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& row : rows) out << render_value(row) << '\n';
}

Database load_database_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  Database db;
  for (const auto& f : files) {
    db = load_collection(db, f.stem().string(), read_jsonl(f.string()));
  }
  return db;
}

}  // namespace dromql
