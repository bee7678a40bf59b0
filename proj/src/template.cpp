#include "recipeforge/template.hpp"

#include <cctype>

#include "recipeforge/error.hpp"

namespace recipeforge {

namespace {

struct Placeholder {
  std::size_t begin = 0;  // offset of "{{"
  std::size_t end = 0;    // one past "}}"
  std::string name;
};

std::optional<Placeholder> next_placeholder(std::string_view tmpl, std::size_t from) {
  const std::size_t open = tmpl.find("{{", from);
  if (open == std::string_view::npos) return std::nullopt;
  const std::size_t close = tmpl.find("}}", open + 2);
  if (close == std::string_view::npos)
    throw TemplateError("unterminated placeholder at offset " + std::to_string(open));
  const std::string_view name = trim(tmpl.substr(open + 2, close - open - 2));
  if (name.empty()) throw TemplateError("empty placeholder at offset " + std::to_string(open));
  return Placeholder{open, close + 2, std::string(name)};
}

std::string json_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return shortest_number(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_null()) return {};
  return canonical_dump(v);
}

const Json* resolve_path(std::string_view path, const std::vector<std::pair<std::string, const Json*>>& scopes) {
  std::string_view head = path.substr(0, path.find('.'));
  std::string_view rest = head.size() < path.size() ? path.substr(head.size() + 1) : std::string_view{};
  const Json* node = nullptr;
  for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
    if (it->first.empty()) {
      if (it->second->is_object() && it->second->contains(std::string(head))) {
        node = &(*it->second)[std::string(head)];
        break;
      }
    } else if (it->first == head) {
      node = it->second;
      break;
    }
  }
  while (node != nullptr && !rest.empty()) {
    const std::string_view key = rest.substr(0, rest.find('.'));
    rest = key.size() < rest.size() ? rest.substr(key.size() + 1) : std::string_view{};
    if (!node->is_object() || !node->contains(std::string(key))) return nullptr;
    node = &(*node)[std::string(key)];
  }
  return node;
}

// Parsed prompt template: literal text, substitutions and for-blocks.
struct Node {
  enum class Kind { text, var, loop } kind = Kind::text;
  std::string text;  // literal text or variable path
  std::string loop_var;
  std::string loop_list;
  std::vector<Node> body;
};

class PromptParser {
public:
  explicit PromptParser(std::string_view src) : src_(src) {}

  std::vector<Node> parse() {
    return parse_block(false);
  }

private:
  std::vector<Node> parse_block(bool in_loop) {
    std::vector<Node> nodes;
    std::string literal;
    const auto flush = [&] {
      if (!literal.empty()) nodes.push_back(Node{Node::Kind::text, std::move(literal), {}, {}, {}});
      literal.clear();
    };
    while (pos_ < src_.size()) {
      if (src_.compare(pos_, 2, "{{") == 0) {
        const auto ph = next_placeholder(src_, pos_);
        flush();
        nodes.push_back(Node{Node::Kind::var, ph->name, {}, {}, {}});
        pos_ = ph->end;
        continue;
      }
      if (src_.compare(pos_, 2, "{%") == 0) {
        const std::size_t close = src_.find("%}", pos_ + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated block tag");
        std::string_view inner = src_.substr(pos_ + 2, close - pos_ - 2);
        const bool trim_before = !inner.empty() && inner.front() == '-';
        const bool trim_after = !inner.empty() && inner.back() == '-';
        if (trim_before) inner.remove_prefix(1);
        if (trim_after) inner.remove_suffix(1);
        inner = trim(inner);
        if (trim_before) {
          while (!literal.empty() && std::isspace(static_cast<unsigned char>(literal.back()))) literal.pop_back();
        }
        flush();
        pos_ = close + 2;
        if (trim_after) skip_space();
        if (inner == "endfor") {
          if (!in_loop) throw TemplateError("endfor without for");
          closed_ = true;
          return nodes;
        }
        if (inner.substr(0, 4) == "for ") {
          // for <var> in <list>
          std::string_view spec = trim(inner.substr(4));
          const std::size_t in_pos = spec.find(" in ");
          if (in_pos == std::string_view::npos) throw TemplateError("malformed for tag");
          Node loop{Node::Kind::loop, {}, std::string(trim(spec.substr(0, in_pos))),
                    std::string(trim(spec.substr(in_pos + 4))), {}};
          loop.body = parse_block(true);
          if (!closed_) throw TemplateError("for without endfor");
          closed_ = false;
          nodes.push_back(std::move(loop));
          continue;
        }
        throw TemplateError("unsupported block tag '" + std::string(inner) + "'");
      }
      literal.push_back(src_[pos_++]);
    }
    flush();
    return nodes;  // inside a loop, closed_ stays false and the caller reports it
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  bool closed_ = false;
};

void render_nodes(const std::vector<Node>& nodes, std::vector<std::pair<std::string, const Json*>>& scopes,
                  std::string& out) {
  for (const auto& node : nodes) {
    switch (node.kind) {
      case Node::Kind::text: out += node.text; break;
      case Node::Kind::var: {
        const Json* v = resolve_path(node.text, scopes);
        if (v == nullptr) throw TemplateError("unresolved placeholder '" + node.text + "'");
        out += json_text(*v);
        break;
      }
      case Node::Kind::loop: {
        const Json* list = resolve_path(node.loop_list, scopes);
        if (list == nullptr || !list->is_array()) throw TemplateError("loop over non-list '" + node.loop_list + "'");
        for (const auto& item : *list) {
          scopes.emplace_back(node.loop_var, &item);
          render_nodes(node.body, scopes, out);
          scopes.pop_back();
        }
        break;
      }
    }
  }
}

}  // namespace

std::vector<std::string> template_placeholders(std::string_view tmpl) {
  std::vector<std::string> names;
  std::size_t pos = 0;
  while (auto ph = next_placeholder(tmpl, pos)) {
    names.push_back(ph->name);
    pos = ph->end;
  }
  return names;
}

std::string render_placeholders(std::string_view tmpl, const PlaceholderLookup& lookup) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (auto ph = next_placeholder(tmpl, pos)) {
    out.append(tmpl.substr(pos, ph->begin - pos));
    auto value = lookup(ph->name);
    if (!value) throw TemplateError("unresolved placeholder '" + ph->name + "'");
    out += *value;
    pos = ph->end;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string render_prompt_template(std::string_view tmpl, const Json& context) {
  PromptParser parser(tmpl);
  const auto nodes = parser.parse();
  std::vector<std::pair<std::string, const Json*>> scopes{{"", &context}};
  std::string out;
  render_nodes(nodes, scopes, out);
  return out;
}

}  // namespace recipeforge
