#include "dromql/parser.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dromql {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool is_hex(char c) {
  return std::isxdigit(static_cast<unsigned char>(c)) != 0;
}

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Value parse_single_value() {
    Value v = parse_value();
    skip_ws();
    if (!eof()) fail("trailing characters after value");
    return v;
  }

  Pipeline parse_pipeline_text(const std::string* default_collection) {
    skip_ws();
    Pipeline p;
    if (!eof() && peek() == '[') {
      if (default_collection == nullptr) {
        fail("bare stage array requires a collection name");
      }
      p.collection = *default_collection;
      p.stages = parse_stage_array();
    } else {
      expect_ident("db");
      skip_ws();
      expect('.');
      p.collection = parse_collection_name();
      skip_ws();
      expect('.');
      skip_ws();
      expect_ident("aggregate");
      skip_ws();
      expect('(');
      skip_ws();
      if (eof() || peek() != '[') fail("expected stage array");
      p.stages = parse_stage_array();
      skip_ws();
      expect(')');
    }
    skip_ws();
    if (!eof() && peek() == ';') {
      ++pos_;
      skip_ws();
    }
    if (!eof()) fail("trailing characters after pipeline");
    return p;
  }

 private:
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }

  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < at && i < s_.size(); ++i) {
      if (s_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw SyntaxError("syntax error at " + std::to_string(line) + ":" + std::to_string(col) +
                          ": " + msg,
                      at);
  }

  void skip_ws() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '/' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '/') {
        while (!eof() && peek() != '\n') ++pos_;
      } else if (c == '/' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '*') {
        pos_ += 2;
        while (pos_ + 1 < s_.size() && !(s_[pos_] == '*' && s_[pos_ + 1] == '/')) ++pos_;
        if (pos_ + 1 >= s_.size()) fail("unterminated comment");
        pos_ += 2;
      } else {
        break;
      }
    }
  }

  void expect(char c) {
    if (eof() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void expect_ident(std::string_view word) {
    skip_ws();
    const std::string id = parse_ident();
    if (id != word) fail_at("expected '" + std::string(word) + "'", pos_ - id.size());
  }

  std::string parse_ident() {
    if (eof() || !is_ident_start(peek())) fail("expected identifier");
    const std::size_t start = pos_;
    while (!eof() && is_ident_char(peek())) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string parse_collection_name() {
    skip_ws();
    if (!eof() && (peek() == '"' || peek() == '\'')) return parse_string();
    std::string name = parse_ident();
    if (name == "getCollection") {
      skip_ws();
      expect('(');
      skip_ws();
      if (eof() || (peek() != '"' && peek() != '\'')) fail("expected collection name string");
      name = parse_string();
      skip_ws();
      expect(')');
    }
    return name;
  }

  std::vector<Stage> parse_stage_array() {
    expect('[');
    std::vector<Stage> stages;
    skip_ws();
    if (!eof() && peek() == ']') {
      ++pos_;
      return stages;
    }
    while (true) {
      skip_ws();
      stages.push_back(parse_stage());
      skip_ws();
      if (eof()) fail("unterminated stage array");
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (!eof() && peek() == ']') {  // trailing comma
          ++pos_;
          return stages;
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return stages;
      }
      fail("expected ',' or ']' in stage array");
    }
  }

  Stage parse_stage() {
    const std::size_t at = pos_;
    Value v = parse_value();
    if (!v.is_document()) fail_at("each stage must be a document", at);
    const auto& doc = v.as_document();
    if (doc.size() != 1) fail_at("each stage takes exactly one operator", at);
    if (doc[0].key.empty() || doc[0].key[0] != '$') {
      fail_at("stage operator must start with '$'", at);
    }
    Stage st;
    st.op = doc[0].key;
    st.body = doc[0].value;
    st.supported = stage_is_supported(st.op);
    return st;
  }

  Value parse_value() {
    skip_ws();
    if (eof()) fail("unexpected end of input");
    const char c = peek();
    if (c == '{') return parse_document();
    if (c == '[') return parse_array();
    if (c == '"' || c == '\'') return Value(parse_string());
    if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c))) {
      return parse_number();
    }
    if (is_ident_start(c)) return parse_word();
    fail("unexpected character");
  }

  Value parse_document() {
    expect('{');
    Value::Document doc;
    skip_ws();
    if (!eof() && peek() == '}') {
      ++pos_;
      return finish_document(std::move(doc));
    }
    while (true) {
      skip_ws();
      std::string key;
      if (!eof() && (peek() == '"' || peek() == '\'')) {
        key = parse_string();
      } else {
        key = parse_ident();
      }
      skip_ws();
      expect(':');
      Value val = parse_value();
      bool replaced = false;
      for (auto& e : doc) {
        if (e.key == key) {  // later duplicate wins, position kept
          e.value = std::move(val);
          replaced = true;
          break;
        }
      }
      if (!replaced) doc.push_back(Value::Entry{std::move(key), std::move(val)});
      skip_ws();
      if (eof()) fail("unterminated document");
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (!eof() && peek() == '}') {
          ++pos_;
          return finish_document(std::move(doc));
        }
        continue;
      }
      if (peek() == '}') {
        ++pos_;
        return finish_document(std::move(doc));
      }
      fail("expected ',' or '}' in document");
    }
  }

  // Recognizes extended-JSON wrappers so canonical output round-trips.
  Value finish_document(Value::Document doc) {
    if (doc.size() == 1 && doc[0].key == "$date" && doc[0].value.is_int()) {
      return Value(DateMs{doc[0].value.as_int()});
    }
    if (doc.size() == 1 && doc[0].key == "$oid" && doc[0].value.is_string()) {
      const std::string& h = doc[0].value.as_string();
      if (h.size() == 24) {
        bool ok = true;
        for (char c : h) ok = ok && is_hex(c);
        if (ok) return Value(to_lower(h));
      }
    }
    return Value(std::move(doc));
  }

  static Oid to_lower(std::string h) {
    for (char& c : h) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return Oid{std::move(h)};
  }

  Value parse_array() {
    expect('[');
    Value::Array arr;
    skip_ws();
    if (!eof() && peek() == ']') {
      ++pos_;
      return Value(std::move(arr));
    }
    while (true) {
      arr.push_back(parse_value());
      skip_ws();
      if (eof()) fail("unterminated array");
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (!eof() && peek() == ']') {
          ++pos_;
          return Value(std::move(arr));
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return Value(std::move(arr));
      }
      fail("expected ',' or ']' in array");
    }
  }

  std::string parse_string() {
    const char quote = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (eof()) fail("unterminated string");
      char c = peek();
      ++pos_;
      if (c == quote) return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      const char e = peek();
      ++pos_;
      switch (e) {
        case '"': out += '"'; break;
        case '\'': out += '\''; break;
        case '\\': out += '\\'; break;
        case '/': out += '/'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case 't': out += '\t'; break;
        case 'u': out += parse_unicode_escape(); break;
        default: fail_at("invalid escape", pos_ - 1);
      }
    }
  }

  std::string parse_unicode_escape() {
    unsigned cp = parse_hex4();
    if (cp >= 0xD800 && cp <= 0xDBFF) {  // surrogate pair
      if (pos_ + 1 < s_.size() && s_[pos_] == '\\' && s_[pos_ + 1] == 'u') {
        pos_ += 2;
        const unsigned lo = parse_hex4();
        if (lo < 0xDC00 || lo > 0xDFFF) fail("invalid low surrogate");
        cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
      } else {
        fail("lone high surrogate");
      }
    } else if (cp >= 0xDC00 && cp <= 0xDFFF) {
      fail("lone low surrogate");
    }
    std::string out;
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
  }

  unsigned parse_hex4() {
    unsigned v = 0;
    for (int i = 0; i < 4; ++i) {
      if (eof() || !is_hex(peek())) fail("expected 4 hex digits");
      const char c = peek();
      ++pos_;
      v = v * 16 + static_cast<unsigned>(c <= '9' ? c - '0' : (c | 0x20) - 'a' + 10);
    }
    return v;
  }

  Value parse_number() {
    const std::size_t start = pos_;
    if (peek() == '-' || peek() == '+') ++pos_;
    bool has_digits = false;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      ++pos_;
      has_digits = true;
    }
    bool is_float = false;
    if (!eof() && peek() == '.') {
      is_float = true;
      ++pos_;
      while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
        ++pos_;
        has_digits = true;
      }
    }
    if (!has_digits) fail_at("invalid number", start);
    if (!eof() && (peek() == 'e' || peek() == 'E')) {
      is_float = true;
      ++pos_;
      if (!eof() && (peek() == '-' || peek() == '+')) ++pos_;
      if (eof() || !std::isdigit(static_cast<unsigned char>(peek()))) {
        fail("invalid exponent");
      }
      while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    }
    std::string_view tok = s_.substr(start, pos_ - start);
    if (!is_float) {
      std::int64_t n = 0;
      const char* first = tok.data() + (tok.front() == '+' ? 1 : 0);
      auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), n);
      if (ec == std::errc() && ptr == tok.data() + tok.size()) return Value(n);
      // fall through to double on overflow
    }
    double d = 0;
    const char* first = tok.data() + (tok.front() == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), d);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail_at("invalid number", start);
    return Value(d);
  }

  Value parse_word() {
    const std::size_t start = pos_;
    const std::string id = parse_ident();
    if (id == "true") return Value(true);
    if (id == "false") return Value(false);
    if (id == "null" || id == "undefined") return Value(nullptr);
    if (id == "ISODate") return parse_isodate();
    if (id == "ObjectId") return parse_objectid();
    fail_at("unexpected identifier '" + id + "'", start);
  }

  Value parse_isodate() {
    skip_ws();
    expect('(');
    skip_ws();
    if (eof()) fail("unterminated ISODate");
    Value ms;
    if (peek() == '"' || peek() == '\'') {
      const std::size_t at = pos_;
      ms = Value(parse_iso8601(parse_string(), at));
    } else if (peek() == '-' || std::isdigit(static_cast<unsigned char>(peek()))) {
      Value n = parse_number();
      ms = Value(DateMs{n.is_int() ? n.as_int() : static_cast<std::int64_t>(n.as_float())});
    } else {
      fail("ISODate takes a string or epoch milliseconds");
    }
    skip_ws();
    expect(')');
    return ms;
  }

  DateMs parse_iso8601(const std::string& text, std::size_t at) {
    // YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|±HH:MM]
    const char* p = text.c_str();
    const char* end = p + text.size();
    auto take_int = [&](int digits) -> std::int64_t {
      std::int64_t v = 0;
      for (int i = 0; i < digits; ++i) {
        if (p >= end || !std::isdigit(static_cast<unsigned char>(*p))) {
          fail_at("invalid ISO-8601 date '" + text + "'", at);
        }
        v = v * 10 + (*p - '0');
        ++p;
      }
      return v;
    };
    auto take = [&](char c) {
      if (p >= end || *p != c) fail_at("invalid ISO-8601 date '" + text + "'", at);
      ++p;
    };
    const std::int64_t year = take_int(4);
    take('-');
    const std::int64_t month = take_int(2);
    take('-');
    const std::int64_t day = take_int(2);
    std::int64_t h = 0, mi = 0, sec = 0, frac = 0, tz_off_min = 0;
    if (p < end && (*p == 'T' || *p == ' ')) {
      ++p;
      h = take_int(2);
      take(':');
      mi = take_int(2);
      if (p < end && *p == ':') {
        ++p;
        sec = take_int(2);
        if (p < end && *p == '.') {
          ++p;
          int digits = 0;
          while (p < end && std::isdigit(static_cast<unsigned char>(*p)) && digits < 3) {
            frac = frac * 10 + (*p - '0');
            ++p;
            ++digits;
          }
          for (int i = digits; i < 3; ++i) frac *= 10;
          while (p < end && std::isdigit(static_cast<unsigned char>(*p))) ++p;
        }
      }
      if (p < end && *p == 'Z') {
        ++p;
      } else if (p < end && (*p == '+' || *p == '-')) {
        const int sign = (*p == '-') ? -1 : 1;
        ++p;
        const std::int64_t th = take_int(2);
        if (p < end && *p == ':') ++p;
        const std::int64_t tm = (p < end) ? take_int(2) : 0;
        tz_off_min = sign * (th * 60 + tm);
      }
    }
    if (p != end) fail_at("invalid ISO-8601 date '" + text + "'", at);
    if (month < 1 || month > 12 || day < 1 || day > 31 || h > 23 || mi > 59 || sec > 60) {
      fail_at("invalid ISO-8601 date '" + text + "'", at);
    }
    const std::int64_t days =
        days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    std::int64_t ms = ((days * 24 + h) * 60 + mi) * 60000 + sec * 1000 + frac;
    ms -= tz_off_min * 60000;
    return DateMs{ms};
  }

  Value parse_objectid() {
    skip_ws();
    expect('(');
    skip_ws();
    if (eof() || (peek() != '"' && peek() != '\'')) fail("ObjectId takes a hex string");
    const std::size_t at = pos_;
    const std::string hex = parse_string();
    if (hex.size() != 24) fail_at("ObjectId must be 24 hex digits", at);
    for (char c : hex) {
      if (!is_hex(c)) fail_at("ObjectId must be 24 hex digits", at);
    }
    skip_ws();
    expect(')');
    return Value(to_lower(hex));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string extract_code_block(std::string_view llm_output) {
  struct Block {
    std::string info;
    std::string body;
  };
  std::vector<Block> blocks;
  bool in_block = false;
  Block current;
  bool first_line_in_block = true;

  std::size_t pos = 0;
  while (pos <= llm_output.size()) {
    const std::size_t nl = llm_output.find('\n', pos);
    std::string_view line = llm_output.substr(
        pos, nl == std::string_view::npos ? llm_output.size() - pos : nl - pos);
    std::string_view trimmed = line;
    while (!trimmed.empty() && (trimmed.front() == ' ' || trimmed.front() == '\t')) {
      trimmed.remove_prefix(1);
    }
    while (!trimmed.empty() && (trimmed.back() == ' ' || trimmed.back() == '\r' ||
                                trimmed.back() == '\t')) {
      trimmed.remove_suffix(1);
    }
    if (!in_block) {
      if (trimmed.substr(0, 3) == "```") {
        in_block = true;
        first_line_in_block = true;
        current = Block{};
        std::string_view info = trimmed.substr(3);
        while (!info.empty() && info.front() == ' ') info.remove_prefix(1);
        for (char c : info) {
          current.info += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
      }
    } else {
      if (trimmed == "```") {
        in_block = false;
        blocks.push_back(std::move(current));
      } else {
        if (!first_line_in_block) current.body += '\n';
        current.body.append(line.data(), line.size());
        first_line_in_block = false;
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }

  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    if (it->info.empty() || it->info == "javascript" || it->info == "js") {
      return it->body;
    }
  }
  std::string_view out = llm_output;
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.front()))) {
    out.remove_prefix(1);
  }
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) {
    out.remove_suffix(1);
  }
  return std::string(out);
}

Pipeline parse_pipeline(std::string_view text) {
  return Parser(text).parse_pipeline_text(nullptr);
}

Pipeline parse_pipeline(std::string_view text, const std::string& default_collection) {
  return Parser(text).parse_pipeline_text(&default_collection);
}

ParseResult try_parse_pipeline(std::string_view text) {
  try {
    return ParseResult{parse_pipeline(text), "", 0};
  } catch (const SyntaxError& e) {
    return ParseResult{std::nullopt, e.what(), e.offset()};
  }
}

ParseResult try_parse_pipeline(std::string_view text, const std::string& default_collection) {
  try {
    return ParseResult{parse_pipeline(text, default_collection), "", 0};
  } catch (const SyntaxError& e) {
    return ParseResult{std::nullopt, e.what(), e.offset()};
  }
}

Value parse_value_text(std::string_view text) {
  return Parser(text).parse_single_value();
}

}  // namespace dromql
