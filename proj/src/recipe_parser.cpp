#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "recipeforge/error.hpp"
#include "recipeforge/recipe_lang.hpp"
#include "recipeforge/template.hpp"
#include "recipeforge/text.hpp"

namespace recipeforge::lang {

namespace {

constexpr std::pair<OpKind, std::string_view> kKindNames[] = {
    {OpKind::load_source, "load_source"},     {OpKind::select_by_filter, "select_by_filter"},
    {OpKind::map_fields, "map_fields"},       {OpKind::llm_transform, "llm_transform"},
    {OpKind::concatenate, "concatenate"},     {OpKind::deduplicate, "deduplicate"},
    {OpKind::sample_n, "sample_n"},           {OpKind::to_dialogs, "to_dialogs"},
    {OpKind::dump, "dump"},
};

constexpr std::size_t kMaxValueNesting = 64;

}  // namespace

std::string_view to_string(OpKind kind) noexcept {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "dump";
}

std::optional<OpKind> op_kind_from_string(std::string_view name) noexcept {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

std::string_view to_string(ResponseParser parser) noexcept {
  switch (parser) {
    case ResponseParser::raw: return "raw";
    case ResponseParser::json: return "json";
    case ResponseParser::grade_box: return "grade_box";
  }
  return "raw";
}

std::size_t FilterExpr::depth() const noexcept {
  std::size_t deepest = 0;
  for (const auto& c : children) deepest = std::max(deepest, c.depth());
  return deepest + 1;
}

OpParams default_params(OpKind kind) {
  switch (kind) {
    case OpKind::load_source: return LoadSourceParams{};
    case OpKind::select_by_filter: return SelectByFilterParams{};
    case OpKind::map_fields: return MapFieldsParams{};
    case OpKind::llm_transform: return LlmTransformParams{};
    case OpKind::concatenate: return ConcatenateParams{};
    case OpKind::deduplicate: return DeduplicateParams{};
    case OpKind::sample_n: return SampleNParams{};
    case OpKind::to_dialogs: return ToDialogsParams{};
    case OpKind::dump: return DumpParams{};
  }
  return DumpParams{};
}

const PipelineOp* Recipe::find_op(std::string_view label) const noexcept {
  for (const auto& op : pipeline)
    if (op.label == label) return &op;
  return nullptr;
}

std::string Diagnostic::to_string() const {
  std::string out;
  if (line > 0) out += std::to_string(line) + ":" + std::to_string(column) + ": ";
  switch (kind) {
    case Kind::syntax: out += "syntax error: "; break;
    case Kind::schema: out += "schema error: "; break;
    case Kind::validation: out += "invalid recipe: "; break;
  }
  out += message;
  return out;
}

// ---------------------------------------------------------------------------
// values

namespace {

struct Value {
  enum class Type { string, integer, number, boolean, list, map, call };

  Type type = Type::string;
  std::string text;  // string contents, or call name
  std::int64_t integer = 0;
  double number = 0.0;
  bool boolean = false;
  std::vector<Value> items;                           // list items or call args
  std::vector<std::pair<std::string, Value>> entries;  // map
  std::size_t column = 0;

  std::string_view type_name() const noexcept {
    switch (type) {
      case Type::string: return "string";
      case Type::integer: return "integer";
      case Type::number: return "number";
      case Type::boolean: return "boolean";
      case Type::list: return "list";
      case Type::map: return "map";
      case Type::call: return "expression";
    }
    return "value";
  }
};

struct SyntaxFailure {
  std::size_t column;
  std::string message;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

/// Cursor over one line. Columns are 1-based byte offsets.
class LineLexer {
public:
  explicit LineLexer(std::string_view line) : line_(line) {}

  std::size_t column() const noexcept { return pos_ + 1; }
  bool at_end() { skip_space(); return pos_ >= line_.size(); }

  void skip_space() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t')) ++pos_;
  }

  bool peek(char c) {
    skip_space();
    return pos_ < line_.size() && line_[pos_] == c;
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= line_.size() || line_[pos_] != c)
      throw SyntaxFailure{column(), std::string("expected '") + c + "'"};
    ++pos_;
  }

  std::string identifier() {
    skip_space();
    if (pos_ >= line_.size() || !is_ident_start(line_[pos_]))
      throw SyntaxFailure{column(), "expected identifier"};
    const std::size_t start = pos_;
    while (pos_ < line_.size() && is_ident_char(line_[pos_])) ++pos_;
    return std::string(line_.substr(start, pos_ - start));
  }

  Value value(std::size_t nesting = 0) {
    if (nesting > kMaxValueNesting) throw SyntaxFailure{column(), "value nested too deeply"};
    skip_space();
    if (pos_ >= line_.size()) throw SyntaxFailure{column(), "expected a value"};
    Value v;
    v.column = column();
    const char c = line_[pos_];
    if (c == '"') {
      v.type = Value::Type::string;
      v.text = string_literal();
      return v;
    }
    if (c == '[') {
      ++pos_;
      v.type = Value::Type::list;
      if (!peek(']')) {
        for (;;) {
          v.items.push_back(value(nesting + 1));
          if (peek(',')) {
            ++pos_;
            continue;
          }
          break;
        }
      }
      expect(']');
      return v;
    }
    if (c == '{') {
      ++pos_;
      v.type = Value::Type::map;
      if (!peek('}')) {
        for (;;) {
          skip_space();
          if (pos_ >= line_.size() || line_[pos_] != '"') throw SyntaxFailure{column(), "expected a string map key"};
          std::string key = string_literal();
          expect(':');
          v.entries.emplace_back(std::move(key), value(nesting + 1));
          if (peek(',')) {
            ++pos_;
            continue;
          }
          break;
        }
      }
      expect('}');
      return v;
    }
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return number();
    if (is_ident_start(c)) {
      std::string name = identifier();
      if (name == "true" || name == "false") {
        v.type = Value::Type::boolean;
        v.boolean = name == "true";
        return v;
      }
      v.type = Value::Type::call;
      v.text = std::move(name);
      expect('(');
      if (!peek(')')) {
        for (;;) {
          v.items.push_back(value(nesting + 1));
          if (peek(',')) {
            ++pos_;
            continue;
          }
          break;
        }
      }
      expect(')');
      return v;
    }
    throw SyntaxFailure{column(), std::string("unexpected character '") + c + "'"};
  }

private:
  std::string string_literal() {
    const std::size_t start_col = column();
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < line_.size()) {
      const char c = line_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (pos_ >= line_.size()) break;
      const char e = line_[pos_++];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case '/': out.push_back('/'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case 't': out.push_back('\t'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case 'u': {
          if (pos_ + 4 > line_.size()) throw SyntaxFailure{column(), "truncated \\u escape"};
          unsigned code = 0;
          const auto res = std::from_chars(line_.data() + pos_, line_.data() + pos_ + 4, code, 16);
          if (res.ptr != line_.data() + pos_ + 4) throw SyntaxFailure{column(), "bad \\u escape"};
          pos_ += 4;
          append_utf8(out, code);
          break;
        }
        default: throw SyntaxFailure{column() - 1, std::string("unknown escape '\\") + e + "'"};
      }
    }
    throw SyntaxFailure{start_col, "unterminated string"};
  }

  static void append_utf8(std::string& out, unsigned code) {
    if (code < 0x80) {
      out.push_back(static_cast<char>(code));
    } else if (code < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (code >> 6)));
      out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xE0 | (code >> 12)));
      out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
    }
  }

  Value number() {
    Value v;
    v.column = column();
    const std::size_t start = pos_;
    if (line_[pos_] == '-') ++pos_;
    bool fractional = false;
    while (pos_ < line_.size()) {
      const char c = line_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        fractional = true;
        ++pos_;
      } else if ((c == '+' || c == '-') && (line_[pos_ - 1] == 'e' || line_[pos_ - 1] == 'E')) {
        ++pos_;
      } else {
        break;
      }
    }
    const std::string_view token = line_.substr(start, pos_ - start);
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!fractional) {
      v.type = Value::Type::integer;
      const auto res = std::from_chars(first, last, v.integer);
      if (res.ec != std::errc{} || res.ptr != last)
        throw SyntaxFailure{v.column, "malformed integer '" + std::string(token) + "'"};
      return v;
    }
    v.type = Value::Type::number;
    const auto res = std::from_chars(first, last, v.number);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v.number))
      throw SyntaxFailure{v.column, "malformed number '" + std::string(token) + "'"};
    return v;
  }

  std::string_view line_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// schema conversion

struct SchemaFailure {
  std::size_t column;
  std::string message;
};

std::string as_string(const Value& v, std::string_view key) {
  if (v.type != Value::Type::string)
    throw SchemaFailure{v.column, std::string(key) + " must be a string, got " + std::string(v.type_name())};
  return v.text;
}

std::int64_t as_int(const Value& v, std::string_view key, bool allow_digit_string = false) {
  if (v.type == Value::Type::integer) return v.integer;
  if (allow_digit_string && v.type == Value::Type::string) {
    const std::string_view t = trim(v.text);
    std::int64_t out = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    if (!t.empty() && res.ec == std::errc{} && res.ptr == t.data() + t.size()) return out;
  }
  throw SchemaFailure{v.column, std::string(key) + " must be an integer, got " + std::string(v.type_name())};
}

double as_double(const Value& v, std::string_view key) {
  if (v.type == Value::Type::integer) return static_cast<double>(v.integer);
  if (v.type == Value::Type::number) return v.number;
  throw SchemaFailure{v.column, std::string(key) + " must be a number, got " + std::string(v.type_name())};
}

bool as_bool(const Value& v, std::string_view key) {
  if (v.type != Value::Type::boolean)
    throw SchemaFailure{v.column, std::string(key) + " must be true or false"};
  return v.boolean;
}

std::vector<std::string> as_string_list(const Value& v, std::string_view key) {
  if (v.type == Value::Type::string) return {v.text};
  if (v.type != Value::Type::list) throw SchemaFailure{v.column, std::string(key) + " must be a list of strings"};
  std::vector<std::string> out;
  for (const auto& item : v.items) out.push_back(as_string(item, key));
  return out;
}

void check_template(const std::string& tmpl, const Value& v, std::string_view key) {
  try {
    (void)template_placeholders(tmpl);
  } catch (const TemplateError& e) {
    throw SchemaFailure{v.column, std::string(key) + ": " + e.what()};
  }
}

FilterExpr as_filter(const Value& v, std::size_t depth = 1) {
  if (depth > kMaxFilterDepth)
    throw SchemaFailure{v.column, "filter deeper than " + std::to_string(kMaxFilterDepth) + " levels"};
  if (v.type != Value::Type::call) throw SchemaFailure{v.column, "where must be a filter expression"};
  FilterExpr f;
  const std::string& name = v.text;
  const auto argc = v.items.size();
  if (name == "eq" || name == "ne" || name == "lt" || name == "gt") {
    f.op = name == "eq" ? FilterExpr::Op::eq
         : name == "ne" ? FilterExpr::Op::ne
         : name == "lt" ? FilterExpr::Op::lt
                        : FilterExpr::Op::gt;
    if (argc != 2) throw SchemaFailure{v.column, name + " takes (field, value)"};
    f.field = as_string(v.items[0], name);
    const Value& operand = v.items[1];
    if (operand.type == Value::Type::string) {
      f.operand = operand.text;
    } else if (operand.type == Value::Type::integer || operand.type == Value::Type::number) {
      f.operand = as_double(operand, name);
    } else {
      throw SchemaFailure{operand.column, name + " compares against a string or number"};
    }
    return f;
  }
  if (name == "contains") {
    if (argc != 2) throw SchemaFailure{v.column, "contains takes (fields, keywords)"};
    f.op = FilterExpr::Op::contains;
    f.fields = as_string_list(v.items[0], "contains fields");
    f.keywords = as_string_list(v.items[1], "contains keywords");
    if (f.fields.empty() || f.keywords.empty())
      throw SchemaFailure{v.column, "contains needs at least one field and one keyword"};
    return f;
  }
  if (name == "and" || name == "or") {
    if (argc == 0) throw SchemaFailure{v.column, name + " needs at least one operand"};
    f.op = name == "and" ? FilterExpr::Op::all_of : FilterExpr::Op::any_of;
    for (const auto& child : v.items) f.children.push_back(as_filter(child, depth + 1));
    return f;
  }
  if (name == "not") {
    if (argc != 1) throw SchemaFailure{v.column, "not takes one operand"};
    f.op = FilterExpr::Op::negate;
    f.children.push_back(as_filter(v.items[0], depth + 1));
    return f;
  }
  throw SchemaFailure{v.column, "unknown filter '" + name + "'"};
}

void check_dump_path(const std::string& path, const Value& v) {
  constexpr std::string_view prefix = "data/processed/";
  if (path.compare(0, prefix.size(), prefix) != 0 || path.size() == prefix.size())
    throw SchemaFailure{v.column, "dump path must lie under data/processed/"};
  if (path.find("..") != std::string::npos || path.find('\\') != std::string::npos)
    throw SchemaFailure{v.column, "dump path may not contain '..' or backslashes"};
}

/// Applies one `key = value` line to the op's parameters.
void apply_param(PipelineOp& op, const std::string& key, const Value& v) {
  const auto unknown = [&] {
    return SchemaFailure{1, "unknown parameter '" + key + "' for " + std::string(to_string(op.kind()))};
  };
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LoadSourceParams>) {
          if (key == "source") p.source = as_string(v, key);
          else if (key == "split") p.split = as_string(v, key);
          else if (key == "limit") {
            p.limit = as_int(v, key);
            if (*p.limit < 0) throw SchemaFailure{v.column, "limit must be non-negative"};
          } else throw unknown();
        } else if constexpr (std::is_same_v<P, SelectByFilterParams>) {
          if (key == "where") p.where = as_filter(v);
          else throw unknown();
        } else if constexpr (std::is_same_v<P, MapFieldsParams>) {
          if (key == "set") {
            if (v.type != Value::Type::map) throw SchemaFailure{v.column, "set must be a map of templates"};
            std::set<std::string> names;
            p.set.clear();
            for (const auto& [name, tmpl] : v.entries) {
              if (name.empty()) throw SchemaFailure{tmpl.column, "empty field name in set"};
              if (!names.insert(name).second) throw SchemaFailure{tmpl.column, "duplicate field '" + name + "' in set"};
              p.set.emplace_back(name, as_string(tmpl, "set"));
              check_template(p.set.back().second, tmpl, "set");
            }
          } else if (key == "keep") p.keep = as_bool(v, key);
          else throw unknown();
        } else if constexpr (std::is_same_v<P, LlmTransformParams>) {
          if (key == "prompt") {
            p.prompt = as_string(v, key);
            check_template(p.prompt, v, key);
          } else if (key == "system") p.system = as_string(v, key);
          else if (key == "parser") {
            const std::string name = as_string(v, key);
            if (name == "raw") p.parser = ResponseParser::raw;
            else if (name == "json") p.parser = ResponseParser::json;
            else if (name == "grade_box") p.parser = ResponseParser::grade_box;
            else throw SchemaFailure{v.column, "parser must be raw, json or grade_box"};
          } else if (key == "output") p.output = as_string(v, key);
          else if (key == "temperature") {
            p.temperature = as_double(v, key);
            if (!(p.temperature >= 0.0 && p.temperature <= 2.0))
              throw SchemaFailure{v.column, "temperature must lie in [0, 2]"};
          } else throw unknown();
        } else if constexpr (std::is_same_v<P, ConcatenateParams>) {
          throw unknown();
        } else if constexpr (std::is_same_v<P, DeduplicateParams>) {
          if (key == "key") {
            p.key = as_string(v, key);
            check_template(p.key, v, key);
          } else if (key == "lowercase") p.lowercase = as_bool(v, key);
          else if (key == "ignore_non_character") p.ignore_non_character = as_bool(v, key);
          else throw unknown();
        } else if constexpr (std::is_same_v<P, SampleNParams>) {
          if (key == "n") {
            p.n = as_int(v, key, true);
            if (p.n < 1) throw SchemaFailure{v.column, "n must be at least 1"};
          } else if (key == "seed") p.seed = as_int(v, key);
          else throw unknown();
        } else if constexpr (std::is_same_v<P, ToDialogsParams>) {
          if (key == "user") {
            p.user = as_string(v, key);
            check_template(p.user, v, key);
          } else if (key == "assistant") {
            p.assistant = as_string(v, key);
            check_template(p.assistant, v, key);
          } else throw unknown();
        } else if constexpr (std::is_same_v<P, DumpParams>) {
          if (key == "path") {
            p.path = as_string(v, key);
            check_dump_path(p.path, v);
          } else throw unknown();
        }
      },
      op.params);
}

/// Required parameters not seen for the op.
std::vector<std::string> missing_required(const PipelineOp& op, const std::set<std::string>& seen) {
  std::vector<std::string> required;
  switch (op.kind()) {
    case OpKind::load_source: required = {"source"}; break;
    case OpKind::select_by_filter: required = {"where"}; break;
    case OpKind::map_fields: required = {"set"}; break;
    case OpKind::llm_transform: required = {"prompt", "parser"}; break;
    case OpKind::deduplicate: required = {"key"}; break;
    case OpKind::sample_n: required = {"n"}; break;
    case OpKind::to_dialogs: required = {"user", "assistant"}; break;
    case OpKind::concatenate:
    case OpKind::dump: break;
  }
  std::vector<std::string> missing;
  for (const auto& r : required)
    if (seen.count(r) == 0) missing.push_back(r);
  return missing;
}

std::string arity_problem(const PipelineOp& op) {
  const std::size_t n = op.inputs.size();
  switch (op.kind()) {
    case OpKind::load_source:
      return n == 0 ? "" : "load_source takes no inputs";
    case OpKind::concatenate:
      return n >= 2 ? "" : "concatenate needs at least two inputs";
    default:
      return n == 1 ? "" : std::string(to_string(op.kind())) + " takes exactly one input";
  }
}

// ---------------------------------------------------------------------------
// document parser

class DocumentParser {
public:
  explicit DocumentParser(std::string_view text) : lines_(split_lines(text)) {}

  ParseOutcome run() {
    ParseOutcome outcome;
    Recipe recipe;
    bool header_seen = false;
    bool plan_seen = false;
    bool provenance_seen = false;
    bool in_plan = false;
    std::vector<std::string> plan_lines;
    PipelineOp* current = nullptr;
    std::set<std::string> current_keys;
    std::size_t current_line = 0;
    std::set<std::string> labels;

    const auto close_op = [&] {
      if (current == nullptr) return;
      for (const auto& m : missing_required(*current, current_keys))
        schema(current_line, 1, "missing parameter '" + m + "' for " + std::string(to_string(current->kind())));
      current = nullptr;
      current_keys.clear();
    };

    for (std::size_t i = 0; i < lines_.size(); ++i) {
      const std::size_t line_no = i + 1;
      const std::string& raw = lines_[i];

      if (in_plan) {
        if (!raw.empty() && raw.front() == '|') {
          std::string_view content = std::string_view(raw).substr(1);
          if (!content.empty() && content.front() == ' ') content.remove_prefix(1);
          plan_lines.emplace_back(content);
          continue;
        }
        in_plan = false;
      }

      const std::string_view stripped = trim(raw);
      if (stripped.empty() || stripped.front() == '#') continue;

      if (!header_seen) {
        if (stripped != "recipe 1") {
          syntax(line_no, 1, "expected header 'recipe 1'");
          return finish(std::move(outcome), std::nullopt);
        }
        header_seen = true;
        continue;
      }

      const bool indented = raw.front() == ' ' || raw.front() == '\t';
      try {
        if (indented) {
          if (current == nullptr) {
            syntax(line_no, 1, "indented parameter outside an op block");
            continue;
          }
          LineLexer lex(raw);
          const std::size_t key_col = (lex.skip_space(), lex.column());
          const std::string key = lex.identifier();
          lex.expect('=');
          const Value v = lex.value();
          if (!lex.at_end()) throw SyntaxFailure{lex.column(), "trailing characters after value"};
          if (!current_keys.insert(key).second) {
            schema(line_no, key_col, "duplicate parameter '" + key + "'");
            continue;
          }
          if (kind_known_) {
            try {
              apply_param(*current, key, v);
            } catch (const SchemaFailure& f) {
              schema(line_no, f.column == 1 ? key_col : f.column, f.message);
            }
          }
          continue;
        }

        close_op();
        LineLexer lex(raw);
        const std::string keyword = lex.identifier();
        if (keyword == "plan") {
          lex.expect(':');
          if (!lex.at_end()) throw SyntaxFailure{lex.column(), "plan text goes on '| ' lines"};
          if (plan_seen) schema(line_no, 1, "duplicate plan section");
          plan_seen = true;
          in_plan = true;
          plan_lines.clear();
        } else if (keyword == "provenance") {
          if (provenance_seen) schema(line_no, 1, "duplicate provenance line");
          provenance_seen = true;
          parse_pairs(lex, line_no, [&](const std::string& key, const Value& v) {
            if (key == "generator") recipe.provenance.generator = as_string(v, key);
            else if (key == "task") recipe.provenance.task_id = as_string(v, key);
            else if (key == "rollout") recipe.provenance.rollout = as_int(v, key);
            else throw SchemaFailure{v.column, "unknown provenance key '" + key + "'"};
          });
        } else if (keyword == "select") {
          Selection sel;
          bool has_id = false;
          parse_pairs(lex, line_no, [&](const std::string& key, const Value& v) {
            if (key == "dataset_id") {
              sel.dataset_id = as_string(v, key);
              has_id = true;
            } else if (key == "split") sel.split = as_string(v, key);
            else if (key == "name") sel.name = as_string(v, key);
            else if (key == "sample_num") {
              sel.sample_num = as_int(v, key, true);
              if (sel.sample_num < 0) throw SchemaFailure{v.column, "sample_num must be non-negative"};
            } else if (key == "reason") sel.reason = as_string(v, key);
            else throw SchemaFailure{v.column, "unknown select key '" + key + "'"};
          });
          if (!has_id) schema(line_no, 1, "select line needs dataset_id");
          recipe.selections.push_back(std::move(sel));
        } else if (keyword == "op") {
          const std::size_t label_col = (lex.skip_space(), lex.column());
          std::string label = lex.identifier();
          lex.expect('=');
          const std::size_t kind_col = (lex.skip_space(), lex.column());
          const std::string kind_name = lex.identifier();
          std::vector<std::string> inputs;
          lex.expect('(');
          if (!lex.peek(')')) {
            for (;;) {
              inputs.push_back(lex.identifier());
              if (lex.peek(',')) {
                lex.expect(',');
                continue;
              }
              break;
            }
          }
          lex.expect(')');
          if (!lex.at_end()) throw SyntaxFailure{lex.column(), "trailing characters after op header"};

          const auto kind = op_kind_from_string(kind_name);
          kind_known_ = kind.has_value();
          if (!kind) schema(line_no, kind_col, "unknown operator kind '" + kind_name + "'");
          if (!labels.insert(label).second) schema(line_no, label_col, "duplicate label '" + label + "'");
          recipe.pipeline.push_back(PipelineOp{std::move(label), std::move(inputs),
                                               default_params(kind.value_or(OpKind::dump))});
          current = &recipe.pipeline.back();
          current_line = line_no;
          if (kind) {
            if (auto problem = arity_problem(*current); !problem.empty()) schema(line_no, kind_col, problem);
          } else {
            current_keys.insert("#unknown");
          }
        } else {
          syntax(line_no, 1, "unexpected '" + keyword + "'");
        }
      } catch (const SyntaxFailure& f) {
        syntax(line_no, f.column, f.message);
      } catch (const SchemaFailure& f) {
        schema(line_no, f.column, f.message);
      }
    }
    if (kind_known_) close_op();
    else current = nullptr;

    if (!header_seen) {
      syntax(lines_.empty() ? 1 : lines_.size(), 1, "expected header 'recipe 1'");
      return finish(std::move(outcome), std::nullopt);
    }
    if (recipe.pipeline.empty()) schema(0, 0, "pipeline has no ops");

    std::string plan;
    for (std::size_t i = 0; i < plan_lines.size(); ++i) {
      if (i > 0) plan += '\n';
      plan += plan_lines[i];
    }
    recipe.plan = std::move(plan);
    return finish(std::move(outcome), std::move(recipe));
  }

private:
  template <typename F>
  void parse_pairs(LineLexer& lex, std::size_t line_no, F&& apply) {
    std::set<std::string> seen;
    while (!lex.at_end()) {
      const std::size_t col = lex.column();
      const std::string key = lex.identifier();
      lex.expect('=');
      const Value v = lex.value();
      if (!seen.insert(key).second) {
        schema(line_no, col, "duplicate key '" + key + "'");
        continue;
      }
      try {
        apply(key, v);
      } catch (const SchemaFailure& f) {
        schema(line_no, f.column, f.message);
      }
    }
  }

  void syntax(std::size_t line, std::size_t col, std::string message) {
    diags_.push_back({Diagnostic::Kind::syntax, line, col, "syntax", std::move(message)});
  }
  void schema(std::size_t line, std::size_t col, std::string message) {
    diags_.push_back({Diagnostic::Kind::schema, line, col, "schema", std::move(message)});
  }

  ParseOutcome finish(ParseOutcome outcome, std::optional<Recipe> recipe) {
    outcome.diagnostics = std::move(diags_);
    if (outcome.diagnostics.empty()) outcome.recipe = std::move(recipe);
    return outcome;
  }

  std::vector<std::string> lines_;
  std::vector<Diagnostic> diags_;
  bool kind_known_ = true;
};

// ---------------------------------------------------------------------------
// serialization

void append_quoted(std::string& out, std::string_view s) {
  out.push_back('"');
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(static_cast<unsigned char>(c)));
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
}

std::string quote_literal(std::string_view s) {
  std::string out;
  append_quoted(out, s);
  return out;
}

std::string decimal(double d) {
  std::string s = shortest_number(d);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string string_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    append_quoted(out, items[i]);
  }
  return out + "]";
}

void emit_params(std::string& out, const PipelineOp& op) {
  const auto line = [&](std::string_view key, const std::string& value) {
    out += "  ";
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  const auto boolean = [](bool b) { return std::string(b ? "true" : "false"); };
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LoadSourceParams>) {
          line("source", quote_literal(p.source));
          line("split", quote_literal(p.split));
          if (p.limit) line("limit", std::to_string(*p.limit));
        } else if constexpr (std::is_same_v<P, SelectByFilterParams>) {
          line("where", serialize_filter(p.where));
        } else if constexpr (std::is_same_v<P, MapFieldsParams>) {
          std::string m = "{";
          for (std::size_t i = 0; i < p.set.size(); ++i) {
            if (i > 0) m += ", ";
            append_quoted(m, p.set[i].first);
            m += ": ";
            append_quoted(m, p.set[i].second);
          }
          line("set", m + "}");
          line("keep", boolean(p.keep));
        } else if constexpr (std::is_same_v<P, LlmTransformParams>) {
          line("prompt", quote_literal(p.prompt));
          line("system", quote_literal(p.system));
          line("parser", quote_literal(to_string(p.parser)));
          line("output", quote_literal(p.output));
          line("temperature", decimal(p.temperature));
        } else if constexpr (std::is_same_v<P, DeduplicateParams>) {
          line("key", quote_literal(p.key));
          line("lowercase", boolean(p.lowercase));
          line("ignore_non_character", boolean(p.ignore_non_character));
        } else if constexpr (std::is_same_v<P, SampleNParams>) {
          line("n", std::to_string(p.n));
          if (p.seed) line("seed", std::to_string(*p.seed));
        } else if constexpr (std::is_same_v<P, ToDialogsParams>) {
          line("user", quote_literal(p.user));
          line("assistant", quote_literal(p.assistant));
        } else if constexpr (std::is_same_v<P, DumpParams>) {
          line("path", quote_literal(p.path));
        }
      },
      op.params);
}

}  // namespace

std::string serialize_filter(const FilterExpr& expr) {
  const auto children = [&](std::string_view name) {
    std::string out(name);
    out += '(';
    for (std::size_t i = 0; i < expr.children.size(); ++i) {
      if (i > 0) out += ", ";
      out += serialize_filter(expr.children[i]);
    }
    return out + ")";
  };
  const auto comparison = [&](std::string_view name) {
    std::string out(name);
    out += '(';
    append_quoted(out, expr.field);
    out += ", ";
    if (const auto* s = std::get_if<std::string>(&expr.operand)) append_quoted(out, *s);
    else out += shortest_number(std::get<double>(expr.operand));
    return out + ")";
  };
  switch (expr.op) {
    case FilterExpr::Op::eq: return comparison("eq");
    case FilterExpr::Op::ne: return comparison("ne");
    case FilterExpr::Op::lt: return comparison("lt");
    case FilterExpr::Op::gt: return comparison("gt");
    case FilterExpr::Op::contains:
      return "contains(" + string_list(expr.fields) + ", " + string_list(expr.keywords) + ")";
    case FilterExpr::Op::all_of: return children("and");
    case FilterExpr::Op::any_of: return children("or");
    case FilterExpr::Op::negate: return children("not");
  }
  return {};
}

ParseOutcome parse_recipe(std::string_view text) {
  return DocumentParser(text).run();
}

Recipe parse_recipe_or_throw(std::string_view text) {
  auto outcome = parse_recipe(text);
  if (outcome.recipe) return std::move(*outcome.recipe);
  const Diagnostic& first = outcome.diagnostics.front();
  if (first.kind == Diagnostic::Kind::syntax) throw ParseError(first.to_string());
  throw SchemaError(first.to_string());
}

std::string serialize_recipe(const Recipe& recipe) {
  std::string out = "recipe 1\n";
  out += "provenance generator=" + quote_literal(recipe.provenance.generator) +
         " task=" + quote_literal(recipe.provenance.task_id) +
         " rollout=" + std::to_string(recipe.provenance.rollout) + "\n";
  out += "plan:\n";
  if (!recipe.plan.empty()) {
    std::size_t start = 0;
    for (;;) {
      const std::size_t end = recipe.plan.find('\n', start);
      const std::string_view line =
          std::string_view(recipe.plan).substr(start, end == std::string::npos ? std::string::npos : end - start);
      out += line.empty() ? "|" : "| ";
      out += line;
      out += '\n';
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  for (const auto& s : recipe.selections) {
    out += "select dataset_id=" + quote_literal(s.dataset_id) + " split=" + quote_literal(s.split) +
           " name=" + quote_literal(s.name) + " sample_num=" + std::to_string(s.sample_num) +
           " reason=" + quote_literal(s.reason) + "\n";
  }
  for (const auto& op : recipe.pipeline) {
    out += "op " + op.label + " = " + std::string(to_string(op.kind())) + "(";
    for (std::size_t i = 0; i < op.inputs.size(); ++i) {
      if (i > 0) out += ", ";
      out += op.inputs[i];
    }
    out += ")\n";
    emit_params(out, op);
  }
  return out;
}

std::string normalize_recipe(std::string_view text) {
  return serialize_recipe(parse_recipe_or_throw(text));
}

}  // namespace recipeforge::lang
