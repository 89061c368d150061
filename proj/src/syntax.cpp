#include "ncomp/syntax.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <set>

#include "ncomp/format.hpp"

namespace ncomp {
namespace {

bool is_delimiter(char c) {
  return c == '(' || c == ')' || c == '[' || c == ']' || c == ';' || c == ' ' || c == '\t' || c == '\n' ||
         c == '\r' || c == '\f' || c == '\v';
}

bool is_illegal(unsigned char c) {
  if (c < 0x20 || c >= 0x7f) return true;
  switch (c) {
    case '\'': case '"': case '`': case ',': case '#': case '{': case '}': case '|': case '\\':
      return true;
    default:
      return false;
  }
}

bool starts_number(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  if (i >= s.size()) return false;
  if (std::isdigit(static_cast<unsigned char>(s[i]))) return true;
  return s[i] == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
}

// [+-]? (d+ (. d*)? | . d+) ([eE] [+-]? d+)?
bool valid_number(std::string_view s) {
  std::size_t i = 0, n = s.size();
  auto digits = [&] {
    std::size_t start = i;
    while (i < n && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    return i - start;
  };
  if (i < n && (s[i] == '+' || s[i] == '-')) ++i;
  std::size_t int_digits = digits();
  std::size_t frac_digits = 0;
  if (i < n && s[i] == '.') {
    ++i;
    frac_digits = digits();
  }
  if (int_digits + frac_digits == 0) return false;
  if (i < n && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    if (i < n && (s[i] == '+' || s[i] == '-')) ++i;
    if (digits() == 0) return false;
  }
  return i == n;
}

// Generic S-expression layer; the AST is built from it in a second pass.
struct SExpr {
  enum Kind { atom, list, bracket } kind;
  const Token* token;  // the atom, or the opening delimiter
  std::vector<SExpr> items;
};

class Reader {
 public:
  explicit Reader(const std::vector<Token>& tokens) : tokens_(tokens) {}

  SExpr read_top() {
    if (tokens_.empty()) throw ParseError("empty program", SourcePos{1, 1});
    SExpr e = read();
    if (pos_ < tokens_.size()) throw ParseError("unexpected trailing token '" + tokens_[pos_].text + "'", tokens_[pos_].pos);
    return e;
  }

 private:
  SExpr read() {
    const Token& t = tokens_[pos_++];
    switch (t.kind) {
      case TokenKind::rparen:
      case TokenKind::rbracket:
        throw ParseError("unbalanced '" + t.text + "'", t.pos);
      case TokenKind::lparen:
      case TokenKind::lbracket: {
        TokenKind close = t.kind == TokenKind::lparen ? TokenKind::rparen : TokenKind::rbracket;
        SExpr e{t.kind == TokenKind::lparen ? SExpr::list : SExpr::bracket, &t, {}};
        while (true) {
          if (pos_ >= tokens_.size()) throw ParseError("unclosed '" + t.text + "'", t.pos);
          const Token& next = tokens_[pos_];
          if (next.kind == TokenKind::rparen || next.kind == TokenKind::rbracket) {
            if (next.kind != close) throw ParseError("mismatched '" + next.text + "'", next.pos);
            ++pos_;
            return e;
          }
          e.items.push_back(read());
        }
      }
      default:
        return SExpr{SExpr::atom, &t, {}};
    }
  }

  const std::vector<Token>& tokens_;
  std::size_t pos_ = 0;
};

struct ParseCtx {
  std::vector<std::string> functions;
  bool recur_ok = false;
};

class Builder {
 public:
  AstPtr build(const SExpr& e, const ParseCtx& ctx) {
    if (e.kind == SExpr::atom) return atom(e);
    if (e.kind == SExpr::bracket) {
      if (e.items.empty()) throw ParseError("empty vector literal", e.token->pos);
      return make_ast(ast::Prim{PrimOp::vec, args(e.items, 0, ctx)}, e.token->pos);
    }
    if (e.items.empty()) throw ParseError("empty application", e.token->pos);
    const SExpr& head = e.items[0];
    if (head.kind != SExpr::atom || head.token->kind != TokenKind::symbol) {
      throw ParseError("application head must be a primitive or function name", head.token->pos);
    }
    const std::string& name = head.token->text;
    if (std::find(ctx.functions.begin(), ctx.functions.end(), name) != ctx.functions.end()) {
      return make_ast(ast::Call{name, args(e.items, 1, ctx)}, head.token->pos);
    }
    auto op = lookup_primitive(name);
    if (!op) throw ParseError("unknown primitive '" + name + "'", head.token->pos);

    const std::size_t argc = e.items.size() - 1;
    const SourcePos pos = head.token->pos;
    auto need = [&](bool ok, const char* form) {
      if (!ok) throw ParseError(std::string("malformed ") + form + ", expected " + form_usage(*op), pos);
    };

    switch (*op) {
      case PrimOp::if_: {
        need(argc == 3, "if");
        ParseCtx sub = ctx;
        sub.recur_ok = false;
        return make_ast(ast::If{build(e.items[1], sub), build(e.items[2], ctx), build(e.items[3], ctx)}, pos);
      }
      case PrimOp::let:
      case PrimOp::let_star: {
        need(argc == 2, "let");
        auto bindings = binding_list(e.items[1], ctx);
        AstPtr body = build(e.items[2], ctx);
        if (*op == PrimOp::let) return make_ast(ast::Let{std::move(bindings), body}, pos);
        for (auto it = bindings.rbegin(); it != bindings.rend(); ++it) {
          body = make_ast(ast::Let{{*it}, body}, pos);
        }
        return body;
      }
      case PrimOp::begin: {
        need(argc >= 1, "begin");
        ParseCtx sub = ctx;
        sub.recur_ok = false;
        // Pure language: only the last expression contributes a value.
        for (std::size_t i = 1; i < argc; ++i) build(e.items[i], sub);
        return build(e.items.back(), ctx);
      }
      case PrimOp::loop: {
        need(argc == 2, "loop");
        auto vars = binding_list(e.items[1], ctx);
        ParseCtx body_ctx = ctx;
        body_ctx.recur_ok = true;
        return make_ast(ast::Loop{std::move(vars), build(e.items[2], body_ctx)}, pos);
      }
      case PrimOp::recur: {
        if (!ctx.recur_ok) throw ParseError("recur outside the tail position of a loop body", pos);
        return make_ast(ast::Recur{args(e.items, 1, ctx)}, pos);
      }
      case PrimOp::letrec: return letrec(e, ctx, pos);
      case PrimOp::call: {
        need(argc >= 1 && e.items[1].kind == SExpr::atom && e.items[1].token->kind == TokenKind::symbol, "call");
        const std::string& fn = e.items[1].token->text;
        if (std::find(ctx.functions.begin(), ctx.functions.end(), fn) == ctx.functions.end()) {
          throw ParseError("call to unknown function '" + fn + "'", e.items[1].token->pos);
        }
        return make_ast(ast::Call{fn, args(e.items, 2, ctx)}, pos);
      }
      default:
        break;
    }
    if (!arity_ok(*op, argc)) {
      throw ParseError("wrong number of arguments to '" + name + "' (" + std::to_string(argc) + ")", pos);
    }
    auto a = args(e.items, 1, ctx);
    if (*op == PrimOp::sub && a.size() == 1) a.insert(a.begin(), make_ast(ast::Const{0.0}, pos));
    return make_ast(ast::Prim{*op, std::move(a)}, pos);
  }

 private:
  static std::string form_usage(PrimOp op) {
    switch (op) {
      case PrimOp::if_: return "(if cond then else)";
      case PrimOp::let:
      case PrimOp::let_star: return "(let ((name expr) ...) body)";
      case PrimOp::begin: return "(begin expr ...)";
      case PrimOp::loop: return "(loop ((name init) ...) body)";
      case PrimOp::letrec: return "(letrec ((name (param ...) body)) expr)";
      case PrimOp::call: return "(call name arg ...)";
      default: return std::string(prim_name(op));
    }
  }

  AstPtr atom(const SExpr& e) {
    const Token& t = *e.token;
    if (t.kind == TokenKind::number) return make_ast(ast::Const{t.number}, t.pos);
    if (lookup_primitive(t.text)) throw ParseError("primitive '" + t.text + "' used as a variable", t.pos);
    return make_ast(ast::Var{t.text}, t.pos);
  }

  std::vector<AstPtr> args(const std::vector<SExpr>& items, std::size_t from, const ParseCtx& ctx) {
    ParseCtx sub = ctx;
    sub.recur_ok = false;
    std::vector<AstPtr> out;
    for (std::size_t i = from; i < items.size(); ++i) out.push_back(build(items[i], sub));
    return out;
  }

  static const std::string& binder_name(const SExpr& e) {
    if (e.kind != SExpr::atom || e.token->kind != TokenKind::symbol) {
      throw ParseError("expected a name", e.token->pos);
    }
    const std::string& name = e.token->text;
    if (lookup_primitive(name)) throw ParseError("primitive name '" + name + "' cannot be rebound", e.token->pos);
    if (name.rfind("__", 0) == 0) throw ParseError("names starting with '__' are reserved", e.token->pos);
    return name;
  }

  std::vector<Binding> binding_list(const SExpr& e, const ParseCtx& ctx) {
    if (e.kind != SExpr::list) throw ParseError("expected a binding list", e.token->pos);
    ParseCtx sub = ctx;
    sub.recur_ok = false;
    std::vector<Binding> out;
    std::set<std::string> seen;
    for (const auto& b : e.items) {
      if (b.kind != SExpr::list || b.items.size() != 2) throw ParseError("expected (name expr)", b.token->pos);
      const std::string& name = binder_name(b.items[0]);
      if (!seen.insert(name).second) throw ParseError("duplicate binding '" + name + "'", b.items[0].token->pos);
      out.push_back({name, build(b.items[1], sub)});
    }
    return out;
  }

  AstPtr letrec(const SExpr& e, const ParseCtx& ctx, SourcePos pos) {
    auto malformed = [&](const SExpr& at) {
      throw ParseError("malformed letrec, expected " + form_usage(PrimOp::letrec), at.token->pos);
    };
    if (e.items.size() != 3 || e.items[1].kind != SExpr::list || e.items[1].items.size() != 1) malformed(e);
    const SExpr& def = e.items[1].items[0];
    if (def.kind != SExpr::list || def.items.size() != 3 || def.items[1].kind != SExpr::list) malformed(def);
    const std::string& name = binder_name(def.items[0]);
    std::vector<std::string> params;
    for (const auto& p : def.items[1].items) {
      const std::string& pn = binder_name(p);
      if (std::find(params.begin(), params.end(), pn) != params.end()) {
        throw ParseError("duplicate parameter '" + pn + "'", p.token->pos);
      }
      params.push_back(pn);
    }
    ParseCtx fn_ctx;
    fn_ctx.functions = ctx.functions;
    fn_ctx.functions.push_back(name);
    AstPtr fn_body = build(def.items[2], fn_ctx);
    ParseCtx body_ctx = ctx;
    body_ctx.functions.push_back(name);
    AstPtr body = build(e.items[2], body_ctx);
    return make_ast(ast::Letrec{name, std::move(params), fn_body, body}, pos);
  }
};

void print(const Ast& a, std::string& out);

void print_list(const std::vector<AstPtr>& xs, std::string& out) {
  for (const auto& x : xs) {
    out += ' ';
    print(*x, out);
  }
}

void print_bindings(const std::vector<Binding>& bs, std::string& out) {
  out += '(';
  for (std::size_t i = 0; i < bs.size(); ++i) {
    if (i) out += ' ';
    out += '(' + bs[i].name + ' ';
    print(*bs[i].expr, out);
    out += ')';
  }
  out += ')';
}

void print(const Ast& a, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ast::Const>) {
          out += format_literal(n.value);
        } else if constexpr (std::is_same_v<T, ast::Var>) {
          out += n.name;
        } else if constexpr (std::is_same_v<T, ast::Let>) {
          out += "(let ";
          print_bindings(n.bindings, out);
          out += ' ';
          print(*n.body, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, ast::If>) {
          out += "(if";
          print_list({n.cond, n.then_branch, n.else_branch}, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, ast::Prim>) {
          out += '(' + std::string(prim_name(n.op));
          print_list(n.args, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, ast::Loop>) {
          out += "(loop ";
          print_bindings(n.vars, out);
          out += ' ';
          print(*n.body, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, ast::Recur>) {
          out += "(recur";
          print_list(n.args, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, ast::Letrec>) {
          out += "(letrec ((" + n.name + " (";
          for (std::size_t i = 0; i < n.params.size(); ++i) out += (i ? " " : "") + n.params[i];
          out += ") ";
          print(*n.fn_body, out);
          out += ")) ";
          print(*n.body, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, ast::Call>) {
          out += "(call " + n.name;
          print_list(n.args, out);
          out += ')';
        }
      },
      a.node);
}

bool equal_lists(const std::vector<AstPtr>& a, const std::vector<AstPtr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!structurally_equal(*a[i], *b[i])) return false;
  }
  return true;
}

bool equal_bindings(const std::vector<Binding>& a, const std::vector<Binding>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !structurally_equal(*a[i].expr, *b[i].expr)) return false;
  }
  return true;
}

template <class F>
void for_each_child(const Ast& a, F&& f) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ast::Let> || std::is_same_v<T, ast::Loop>) {
          const auto& bs = [&]() -> const std::vector<Binding>& {
            if constexpr (std::is_same_v<T, ast::Let>) return n.bindings; else return n.vars;
          }();
          for (const auto& b : bs) f(*b.expr);
          f(*n.body);
        } else if constexpr (std::is_same_v<T, ast::If>) {
          f(*n.cond);
          f(*n.then_branch);
          f(*n.else_branch);
        } else if constexpr (std::is_same_v<T, ast::Prim> || std::is_same_v<T, ast::Recur> ||
                             std::is_same_v<T, ast::Call>) {
          for (const auto& x : n.args) f(*x);
        } else if constexpr (std::is_same_v<T, ast::Letrec>) {
          f(*n.fn_body);
          f(*n.body);
        }
      },
      a.node);
}

struct FnSig {
  std::string name;
  std::size_t arity;
};

struct ScopeChecker {
  std::set<std::string> globals;

  void check(const Ast& a, std::vector<std::string>& vars, std::vector<FnSig>& fns) {
    if (auto* v = std::get_if<ast::Var>(&a.node)) {
      bool bound = globals.count(v->name) ||
                   std::find(vars.begin(), vars.end(), v->name) != vars.end();
      if (!bound) throw ScopeError("unbound variable '" + v->name + "'", a.pos);
      return;
    }
    if (auto* c = std::get_if<ast::Call>(&a.node)) {
      auto it = std::find_if(fns.rbegin(), fns.rend(), [&](const FnSig& f) { return f.name == c->name; });
      if (it == fns.rend()) throw ScopeError("unbound function '" + c->name + "'", a.pos);
      if (it->arity != c->args.size()) {
        throw ScopeError("'" + c->name + "' expects " + std::to_string(it->arity) + " arguments, got " +
                             std::to_string(c->args.size()),
                         a.pos);
      }
      for (const auto& x : c->args) check(*x, vars, fns);
      return;
    }
    if (auto* l = std::get_if<ast::Let>(&a.node)) {
      scoped(l->bindings, *l->body, vars, fns);
      return;
    }
    if (auto* l = std::get_if<ast::Loop>(&a.node)) {
      scoped(l->vars, *l->body, vars, fns);
      return;
    }
    if (auto* r = std::get_if<ast::Letrec>(&a.node)) {
      fns.push_back({r->name, r->params.size()});
      std::vector<std::string> fn_vars = r->params;
      check(*r->fn_body, fn_vars, fns);
      check(*r->body, vars, fns);
      fns.pop_back();
      return;
    }
    for_each_child(a, [&](const Ast& c) { check(c, vars, fns); });
  }

  void scoped(const std::vector<Binding>& bs, const Ast& body, std::vector<std::string>& vars,
              std::vector<FnSig>& fns) {
    for (const auto& b : bs) check(*b.expr, vars, fns);
    for (const auto& b : bs) vars.push_back(b.name);
    check(body, vars, fns);
    vars.resize(vars.size() - bs.size());
  }
};

}  // namespace

std::vector<Token> tokenize(std::string_view source) {
  std::vector<Token> out;
  std::size_t line = 1, col = 1, i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (source[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < source.size()) {
    char c = source[i];
    SourcePos pos{line, col};
    if (c == ';') {
      while (i < source.size() && source[i] != '\n') advance(1);
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      advance(1);
      continue;
    }
    if (c == '(' || c == ')' || c == '[' || c == ']') {
      TokenKind k = c == '(' ? TokenKind::lparen
                  : c == ')' ? TokenKind::rparen
                  : c == '[' ? TokenKind::lbracket
                             : TokenKind::rbracket;
      out.push_back({k, std::string(1, c), pos});
      advance(1);
      continue;
    }
    std::size_t end = i;
    while (end < source.size() && !is_delimiter(source[end])) {
      if (is_illegal(static_cast<unsigned char>(source[end]))) {
        SourcePos bad{line, col + (end - i)};
        throw LexError("illegal character '" + std::string(1, source[end]) + "'", bad);
      }
      ++end;
    }
    std::string_view text = source.substr(i, end - i);
    Token tok{TokenKind::symbol, std::string(text), pos};
    if (starts_number(text)) {
      if (!valid_number(text)) throw LexError("malformed number '" + std::string(text) + "'", pos);
      std::string_view digits = text[0] == '+' ? text.substr(1) : text;
      double v = 0.0;
      auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (res.ec != std::errc() || !std::isfinite(v)) {
        throw LexError("number '" + std::string(text) + "' is not a finite double", pos);
      }
      tok.kind = TokenKind::number;
      tok.number = v;
    }
    out.push_back(std::move(tok));
    advance(end - i);
  }
  return out;
}

AstPtr make_ast(AstNode node, SourcePos pos) { return std::make_shared<const Ast>(Ast{std::move(node), pos}); }

AstPtr parse(const std::vector<Token>& tokens) {
  Reader reader(tokens);
  SExpr top = reader.read_top();
  Builder b;
  return b.build(top, ParseCtx{});
}

AstPtr parse_source(std::string_view source) { return parse(tokenize(source)); }

std::string pretty_print(const Ast& ast) {
  std::string out;
  print(ast, out);
  return out;
}

bool structurally_equal(const Ast& a, const Ast& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, ast::Const>) {
          return std::bit_cast<std::uint64_t>(x.value) == std::bit_cast<std::uint64_t>(y.value);
        } else if constexpr (std::is_same_v<T, ast::Var>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, ast::Let>) {
          return equal_bindings(x.bindings, y.bindings) && structurally_equal(*x.body, *y.body);
        } else if constexpr (std::is_same_v<T, ast::If>) {
          return equal_lists({x.cond, x.then_branch, x.else_branch}, {y.cond, y.then_branch, y.else_branch});
        } else if constexpr (std::is_same_v<T, ast::Prim>) {
          return x.op == y.op && equal_lists(x.args, y.args);
        } else if constexpr (std::is_same_v<T, ast::Loop>) {
          return equal_bindings(x.vars, y.vars) && structurally_equal(*x.body, *y.body);
        } else if constexpr (std::is_same_v<T, ast::Recur>) {
          return equal_lists(x.args, y.args);
        } else if constexpr (std::is_same_v<T, ast::Letrec>) {
          return x.name == y.name && x.params == y.params && structurally_equal(*x.fn_body, *y.fn_body) &&
                 structurally_equal(*x.body, *y.body);
        } else {
          return x.name == y.name && equal_lists(x.args, y.args);
        }
      },
      a.node);
}

std::size_t count_prims(const Ast& a) {
  std::size_t n = std::holds_alternative<ast::Prim>(a.node) ? 1 : 0;
  for_each_child(a, [&](const Ast& c) { n += count_prims(c); });
  return n;
}

std::size_t count_nodes(const Ast& a) {
  std::size_t n = 1;
  for_each_child(a, [&](const Ast& c) { n += count_nodes(c); });
  return n;
}

void scope_check(const Ast& ast, const std::vector<std::string>& inputs, const std::vector<std::string>& params) {
  ScopeChecker checker;
  for (const auto& p : params) {
    if (std::find(inputs.begin(), inputs.end(), p) != inputs.end()) {
      throw ScopeError("'" + p + "' is declared both as an input and as a parameter", ast.pos);
    }
  }
  checker.globals.insert(inputs.begin(), inputs.end());
  checker.globals.insert(params.begin(), params.end());
  std::vector<std::string> vars;
  std::vector<FnSig> fns;
  checker.check(ast, vars, fns);
}

}  // namespace ncomp
