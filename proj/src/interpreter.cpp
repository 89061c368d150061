#include "ncomp/interpreter.hpp"

#include <optional>

#include "ncomp/error.hpp"

namespace ncomp {
namespace {

bool diverges(const Ast& a) {
  if (std::holds_alternative<ast::Loop>(a.node) || std::holds_alternative<ast::Recur>(a.node) ||
      std::holds_alternative<ast::Call>(a.node)) {
    return true;
  }
  bool any = false;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ast::Let>) {
          for (const auto& b : n.bindings) any = any || diverges(*b.expr);
          any = any || diverges(*n.body);
        } else if constexpr (std::is_same_v<T, ast::If>) {
          any = diverges(*n.cond) || diverges(*n.then_branch) || diverges(*n.else_branch);
        } else if constexpr (std::is_same_v<T, ast::Prim>) {
          for (const auto& x : n.args) any = any || diverges(*x);
        } else if constexpr (std::is_same_v<T, ast::Letrec>) {
          any = diverges(*n.body);  // the function body itself is only reached through calls
        }
      },
      a.node);
  return any;
}

struct Outcome {
  Value value;
  bool recur = false;
  std::vector<Value> args;
};

Outcome done(Value v) {
  Outcome o;
  o.value = std::move(v);
  return o;
}

class Interpreter {
 public:
  Interpreter(const Bindings& globals, const SafeDomainPolicy& policy, std::size_t max_depth)
      : globals_(globals), policy_(policy), max_depth_(max_depth) {}

  Value run(const Ast& a) {
    Scope scope;
    Outcome o = eval(a, scope);
    if (o.recur) throw LoweringError("recur reached outside a loop");
    if (policy_.checking() && violation_ && !o.value.all_finite()) {
      throw DomainViolation("domain violation: " + *violation_, -1, violation_batch_);
    }
    return o.value;
  }

 private:
  struct Scope {
    std::vector<std::pair<std::string, Value>> vars;
    std::vector<const ast::Letrec*> fns;
  };

  Value value(const Ast& a, Scope& s) {
    Outcome o = eval(a, s);
    if (o.recur) throw LoweringError("recur outside the tail position of a loop body");
    return o.value;
  }

  Outcome eval(const Ast& a, Scope& s) {
    return std::visit([&](const auto& n) { return visit(n, s); }, a.node);
  }

  Outcome visit(const ast::Const& n, Scope&) { return done(Value::scalar(n.value)); }

  Outcome visit(const ast::Var& n, Scope& s) {
    for (auto it = s.vars.rbegin(); it != s.vars.rend(); ++it) {
      if (it->first == n.name) return done(it->second);
    }
    auto g = globals_.find(n.name);
    if (g == globals_.end()) throw UnboundVariable(n.name);
    return done(g->second);
  }

  Outcome visit(const ast::Prim& n, Scope& s) {
    std::vector<Value> args;
    for (const auto& x : n.args) args.push_back(value(*x, s));
    DomainSink local;
    Value out = apply_primitive(n.op, args, policy_, policy_.checking() ? &local : nullptr);
    if (!local.empty() && !violation_) {
      violation_ = local[0].what;
      violation_batch_ = out.is_batched() ? static_cast<long>(local[0].flat_index / out.elem_size()) : -1;
    }
    return done(std::move(out));
  }

  Outcome visit(const ast::Let& n, Scope& s) {
    std::vector<Value> vals;
    for (const auto& b : n.bindings) vals.push_back(value(*b.expr, s));
    for (std::size_t i = 0; i < vals.size(); ++i) s.vars.emplace_back(n.bindings[i].name, vals[i]);
    Outcome o = eval(*n.body, s);
    s.vars.resize(s.vars.size() - vals.size());
    return o;
  }

  Outcome visit(const ast::If& n, Scope& s) {
    Value c = value(*n.cond, s);
    switch (cond_state(c)) {
      case CondState::all_true: return eval(*n.then_branch, s);
      case CondState::all_false: return eval(*n.else_branch, s);
      case CondState::mixed: break;
    }
    if (diverges(*n.then_branch) || diverges(*n.else_branch)) {
      throw BranchDivergence("batch elements disagree on a branch that loops, calls or recurs");
    }
    Value t = value(*n.then_branch, s);
    Value e = value(*n.else_branch, s);
    return done(apply_select(c, t, e));
  }

  Outcome visit(const ast::Loop& n, Scope& s) {
    std::vector<Value> vals;
    for (const auto& b : n.vars) vals.push_back(value(*b.expr, s));
    const std::size_t base = s.vars.size();
    for (std::size_t i = 0; i < vals.size(); ++i) s.vars.emplace_back(n.vars[i].name, vals[i]);
    while (true) {
      Outcome o = eval(*n.body, s);
      if (!o.recur) {
        s.vars.resize(base);
        return o;
      }
      if (o.args.size() != n.vars.size()) throw LoweringError("recur arity does not match the loop");
      for (std::size_t i = 0; i < o.args.size(); ++i) s.vars[base + i].second = std::move(o.args[i]);
    }
  }

  Outcome visit(const ast::Recur& n, Scope& s) {
    Outcome o;
    o.recur = true;
    for (const auto& x : n.args) o.args.push_back(value(*x, s));
    return o;
  }

  Outcome visit(const ast::Letrec& n, Scope& s) {
    s.fns.push_back(&n);
    Outcome o = eval(*n.body, s);
    s.fns.pop_back();
    return o;
  }

  Outcome visit(const ast::Call& n, Scope& s) {
    auto it = s.fns.rbegin();
    while (it != s.fns.rend() && (*it)->name != n.name) ++it;
    if (it == s.fns.rend()) throw UnboundVariable(n.name);
    const ast::Letrec& fn = **it;
    std::vector<Value> args;
    for (const auto& x : n.args) args.push_back(value(*x, s));
    check_depth(fn.name, max_depth_, depth_);
    Scope inner;
    inner.fns.assign(s.fns.begin(), it.base());
    for (std::size_t i = 0; i < args.size(); ++i) inner.vars.emplace_back(fn.params[i], args[i]);
    ++depth_;
    Value r = value(*fn.fn_body, inner);
    --depth_;
    return done(std::move(r));
  }

  const Bindings& globals_;
  SafeDomainPolicy policy_;
  std::size_t max_depth_;
  std::size_t depth_ = 0;
  std::optional<std::string> violation_;
  long violation_batch_ = -1;
};

}  // namespace

Value interpret_ast(const Ast& ast, const Bindings& env, const SafeDomainPolicy& policy, std::size_t max_depth) {
  return Interpreter(env, policy, max_depth).run(ast);
}

Value interpret_source(const std::string& source, const Bindings& env, const SafeDomainPolicy& policy) {
  return interpret_ast(*parse_source(source), env, policy);
}

}  // namespace ncomp
