#include "ncomp/anf.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>

#include "ncomp/format.hpp"

namespace ncomp {
namespace {

class Flattener {
 public:
  explicit Flattener(AnfProgram& prog) : prog_(prog) {}

  struct Env {
    std::vector<std::pair<std::string, Trivial>> vars;
    std::vector<std::pair<std::string, std::size_t>> fns;
  };

  Trivial flatten(const Ast& a, AnfBlock& block, Env& env) {
    return std::visit([&](const auto& n) { return visit(n, block, env); }, a.node);
  }

  std::size_t temps() const { return counter_.count(); }

 private:
  Trivial emit(AnfBlock& block, AnfRhs rhs) {
    std::string t = counter_.fresh();
    block.bindings.push_back({t, std::move(rhs)});
    return Trivial::var(std::move(t));
  }

  std::vector<Trivial> flatten_all(const std::vector<AstPtr>& xs, AnfBlock& block, Env& env) {
    std::vector<Trivial> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(flatten(*x, block, env));
    return out;
  }

  Trivial visit(const ast::Const& n, AnfBlock&, Env&) { return Trivial::constant(n.value); }

  Trivial visit(const ast::Var& n, AnfBlock&, Env& env) {
    for (auto it = env.vars.rbegin(); it != env.vars.rend(); ++it) {
      if (it->first == n.name) return it->second;
    }
    return Trivial::var(n.name);
  }

  Trivial visit(const ast::Prim& n, AnfBlock& block, Env& env) {
    return emit(block, anf::PrimApp{n.op, flatten_all(n.args, block, env)});
  }

  Trivial visit(const ast::Let& n, AnfBlock& block, Env& env) {
    std::vector<Trivial> values;
    for (const auto& b : n.bindings) values.push_back(flatten(*b.expr, block, env));
    for (std::size_t i = 0; i < values.size(); ++i) {
      env.vars.emplace_back(n.bindings[i].name, values[i]);
      prog_.scope.emplace_back(n.bindings[i].name, values[i]);
    }
    Trivial r = flatten(*n.body, block, env);
    env.vars.resize(env.vars.size() - values.size());
    return r;
  }

  Trivial visit(const ast::If& n, AnfBlock& block, Env& env) {
    anf::IfApp app;
    app.cond = flatten(*n.cond, block, env);
    app.then_block.result = flatten(*n.then_branch, app.then_block, env);
    app.else_block.result = flatten(*n.else_branch, app.else_block, env);
    return emit(block, std::move(app));
  }

  Trivial visit(const ast::Loop& n, AnfBlock& block, Env& env) {
    anf::LoopApp app;
    for (const auto& v : n.vars) app.vars.push_back({{}, flatten(*v.expr, block, env)});
    for (std::size_t i = 0; i < n.vars.size(); ++i) {
      app.vars[i].temp = counter_.fresh();
      env.vars.emplace_back(n.vars[i].name, Trivial::var(app.vars[i].temp));
      prog_.scope.emplace_back(n.vars[i].name, Trivial::var(app.vars[i].temp));
    }
    app.body.result = flatten(*n.body, app.body, env);
    env.vars.resize(env.vars.size() - n.vars.size());
    return emit(block, std::move(app));
  }

  Trivial visit(const ast::Recur& n, AnfBlock& block, Env& env) {
    return emit(block, anf::RecurApp{flatten_all(n.args, block, env)});
  }

  Trivial visit(const ast::Letrec& n, AnfBlock& block, Env& env) {
    std::size_t index = prog_.functions.size();
    prog_.functions.push_back({n.name, {}, {}});
    Env fn_env;
    fn_env.fns = env.fns;
    fn_env.fns.emplace_back(n.name, index);
    std::vector<std::string> params;
    for (const auto& p : n.params) {
      params.push_back(counter_.fresh());
      fn_env.vars.emplace_back(p, Trivial::var(params.back()));
    }
    AnfBlock body;
    body.result = flatten(*n.fn_body, body, fn_env);
    prog_.functions[index].params = std::move(params);
    prog_.functions[index].body = std::move(body);

    env.fns.emplace_back(n.name, index);
    Trivial r = flatten(*n.body, block, env);
    env.fns.pop_back();
    return r;
  }

  Trivial visit(const ast::Call& n, AnfBlock& block, Env& env) {
    auto it = std::find_if(env.fns.rbegin(), env.fns.rend(), [&](const auto& f) { return f.first == n.name; });
    if (it == env.fns.rend()) throw UnboundVariable(n.name);
    return emit(block, anf::CallApp{it->second, flatten_all(n.args, block, env)});
  }

  AnfProgram& prog_;
  TempCounter counter_;
};

AstPtr trivial_ast(const Trivial& t) {
  if (t.is_const) return make_ast(ast::Const{t.value});
  return make_ast(ast::Var{t.name});
}

std::vector<AstPtr> trivial_asts(const std::vector<Trivial>& ts) {
  std::vector<AstPtr> out;
  for (const auto& t : ts) out.push_back(trivial_ast(t));
  return out;
}

AstPtr block_ast(const AnfBlock& block, const AnfProgram& prog);

AstPtr rhs_ast(const AnfRhs& rhs, const AnfProgram& prog) {
  return std::visit(
      [&](const auto& r) -> AstPtr {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, anf::PrimApp>) {
          return make_ast(ast::Prim{r.op, trivial_asts(r.args)});
        } else if constexpr (std::is_same_v<T, anf::IfApp>) {
          return make_ast(ast::If{trivial_ast(r.cond), block_ast(r.then_block, prog), block_ast(r.else_block, prog)});
        } else if constexpr (std::is_same_v<T, anf::LoopApp>) {
          std::vector<Binding> vars;
          for (const auto& v : r.vars) vars.push_back({v.temp, trivial_ast(v.init)});
          return make_ast(ast::Loop{std::move(vars), block_ast(r.body, prog)});
        } else if constexpr (std::is_same_v<T, anf::RecurApp>) {
          return make_ast(ast::Recur{trivial_asts(r.args)});
        } else {
          return make_ast(ast::Call{prog.functions[r.function].name, trivial_asts(r.args)});
        }
      },
      rhs);
}

bool result_is_last(const AnfBlock& block) {
  return !block.bindings.empty() && !block.result.is_const && block.result.name == block.bindings.back().temp;
}

AstPtr block_ast(const AnfBlock& block, const AnfProgram& prog) {
  std::size_t n = block.bindings.size();
  AstPtr body;
  if (result_is_last(block)) {
    body = rhs_ast(block.bindings.back().rhs, prog);
    --n;
  } else {
    body = trivial_ast(block.result);
  }
  for (std::size_t i = n; i-- > 0;) {
    const auto& b = block.bindings[i];
    body = make_ast(ast::Let{{Binding{b.temp, rhs_ast(b.rhs, prog)}}, body});
  }
  return body;
}

void print_block(const AnfBlock& block, const AnfProgram& prog, std::size_t indent, std::string& out);

void print_trivials(const std::vector<Trivial>& ts, std::string& out) {
  for (const auto& t : ts) out += ' ' + trivial_to_string(t);
}

void print_rhs(const AnfRhs& rhs, const AnfProgram& prog, std::size_t indent, std::string& out) {
  std::string pad(indent + 2, ' ');
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, anf::PrimApp>) {
          out += '(' + std::string(prim_name(r.op));
          print_trivials(r.args, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, anf::IfApp>) {
          out += "(if " + trivial_to_string(r.cond) + '\n' + pad;
          print_block(r.then_block, prog, indent + 2, out);
          out += '\n' + pad;
          print_block(r.else_block, prog, indent + 2, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, anf::LoopApp>) {
          out += "(loop (";
          for (std::size_t i = 0; i < r.vars.size(); ++i) {
            out += (i ? " (" : "(") + r.vars[i].temp + ' ' + trivial_to_string(r.vars[i].init) + ')';
          }
          out += ")\n" + pad;
          print_block(r.body, prog, indent + 2, out);
          out += ')';
        } else if constexpr (std::is_same_v<T, anf::RecurApp>) {
          out += "(recur";
          print_trivials(r.args, out);
          out += ')';
        } else {
          out += "(call " + prog.functions[r.function].name;
          print_trivials(r.args, out);
          out += ')';
        }
      },
      rhs);
}

void print_block(const AnfBlock& block, const AnfProgram& prog, std::size_t indent, std::string& out) {
  std::size_t n = block.bindings.size();
  bool inline_last = result_is_last(block);
  if (inline_last) --n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = block.bindings[i];
    out += "(let ((" + b.temp + ' ';
    print_rhs(b.rhs, prog, indent + 2 * i, out);
    out += "))\n" + std::string(indent + 2 * (i + 1), ' ');
  }
  if (inline_last) {
    print_rhs(block.bindings.back().rhs, prog, indent + 2 * n, out);
  } else {
    out += trivial_to_string(block.result);
  }
  out += std::string(n, ')');
}

std::size_t count_prim_apps(const AnfBlock& block) {
  std::size_t n = 0;
  for (const auto& b : block.bindings) {
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, anf::PrimApp>) {
            ++n;
          } else if constexpr (std::is_same_v<T, anf::IfApp>) {
            n += count_prim_apps(r.then_block) + count_prim_apps(r.else_block);
          } else if constexpr (std::is_same_v<T, anf::LoopApp>) {
            n += count_prim_apps(r.body);
          }
        },
        b.rhs);
  }
  return n;
}

}  // namespace

bool operator==(const Trivial& a, const Trivial& b) {
  if (a.is_const != b.is_const) return false;
  if (a.is_const) return std::bit_cast<std::uint64_t>(a.value) == std::bit_cast<std::uint64_t>(b.value);
  return a.name == b.name;
}

std::string trivial_to_string(const Trivial& t) { return t.is_const ? format_literal(t.value) : t.name; }

AnfProgram to_anf(const Ast& ast) {
  AnfProgram prog;
  Flattener f(prog);
  Flattener::Env env;
  prog.main.result = f.flatten(ast, prog.main, env);
  prog.temp_count = f.temps();
  return prog;
}

AstPtr anf_to_ast(const AnfProgram& prog) {
  AstPtr body = block_ast(prog.main, prog);
  for (std::size_t i = prog.functions.size(); i-- > 0;) {
    const auto& fn = prog.functions[i];
    body = make_ast(ast::Letrec{fn.name, fn.params, block_ast(fn.body, prog), body});
  }
  return body;
}

std::string anf_to_string(const AnfProgram& prog) {
  std::string out;
  for (const auto& fn : prog.functions) {
    out += "(letrec ((" + fn.name + " (";
    for (std::size_t i = 0; i < fn.params.size(); ++i) out += (i ? " " : "") + fn.params[i];
    out += ")\n    ";
    print_block(fn.body, prog, 4, out);
    out += "))\n";
  }
  print_block(prog.main, prog, 0, out);
  out += std::string(prog.functions.size(), ')');
  return out;
}

std::size_t count_bindings(const AnfBlock& block) {
  std::size_t n = block.bindings.size();
  for (const auto& b : block.bindings) {
    if (auto* i = std::get_if<anf::IfApp>(&b.rhs)) n += count_bindings(i->then_block) + count_bindings(i->else_block);
    if (auto* l = std::get_if<anf::LoopApp>(&b.rhs)) n += count_bindings(l->body);
  }
  return n;
}

std::size_t count_prim_apps(const AnfProgram& prog) {
  std::size_t n = count_prim_apps(prog.main);
  for (const auto& fn : prog.functions) n += count_prim_apps(fn.body);
  return n;
}

}  // namespace ncomp
