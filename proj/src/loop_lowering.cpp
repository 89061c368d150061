#include "ncomp/loop_lowering.hpp"

#include <map>
#include <optional>
#include <set>

#include "ncomp/error.hpp"

namespace ncomp {
namespace {

bool result_is_last(const AnfBlock& block) {
  return !block.bindings.empty() && !block.result.is_const && block.result.name == block.bindings.back().temp;
}

void collect_callees(const AnfBlock& block, std::set<std::size_t>& out) {
  for (const auto& b : block.bindings) {
    if (auto* c = std::get_if<anf::CallApp>(&b.rhs)) out.insert(c->function);
    if (auto* i = std::get_if<anf::IfApp>(&b.rhs)) {
      collect_callees(i->then_block, out);
      collect_callees(i->else_block, out);
    }
    if (auto* l = std::get_if<anf::LoopApp>(&b.rhs)) collect_callees(l->body, out);
  }
}

bool self_calls_in_tail(const AnfBlock& block, std::size_t self, bool tail) {
  for (std::size_t i = 0; i < block.bindings.size(); ++i) {
    const auto& b = block.bindings[i];
    bool here = tail && i + 1 == block.bindings.size() && result_is_last(block);
    if (auto* c = std::get_if<anf::CallApp>(&b.rhs)) {
      if (c->function == self && !here) return false;
    } else if (auto* f = std::get_if<anf::IfApp>(&b.rhs)) {
      if (!self_calls_in_tail(f->then_block, self, here) || !self_calls_in_tail(f->else_block, self, here)) {
        return false;
      }
    } else if (auto* l = std::get_if<anf::LoopApp>(&b.rhs)) {
      if (!self_calls_in_tail(l->body, self, false)) return false;
    }
  }
  return true;
}

bool in_larger_cycle(const AnfProgram& prog, std::size_t f) {
  std::vector<std::set<std::size_t>> edges(prog.functions.size());
  for (std::size_t i = 0; i < prog.functions.size(); ++i) collect_callees(prog.functions[i].body, edges[i]);
  std::set<std::size_t> seen;
  std::vector<std::size_t> stack;
  for (auto g : edges[f]) {
    if (g != f) stack.push_back(g);
  }
  while (!stack.empty()) {
    std::size_t g = stack.back();
    stack.pop_back();
    if (g == f) return true;
    if (!seen.insert(g).second) continue;
    for (auto h : edges[g]) stack.push_back(h);
  }
  return false;
}

class Rewriter {
 public:
  Rewriter(const AnfProgram& prog, std::vector<bool> loopable, std::size_t first_temp)
      : prog_(prog), loopable_(std::move(loopable)), next_temp_(first_temp) {}

  struct Ctx {
    std::map<std::string, std::string> rename;
    bool clone = false;
    std::optional<std::size_t> self;  // inlined function whose self-calls become recur
  };

  AnfBlock rewrite(const AnfBlock& block, Ctx& ctx) {
    AnfBlock out;
    for (const auto& b : block.bindings) {
      AnfRhs rhs = rewrite_rhs(b.rhs, ctx);
      std::string temp = b.temp;
      if (ctx.clone) {
        temp = fresh();
        ctx.rename[b.temp] = temp;
      }
      out.bindings.push_back({temp, std::move(rhs)});
    }
    out.result = rename(block.result, ctx);
    return out;
  }

  std::size_t temp_count() const { return next_temp_; }

 private:
  std::string fresh() { return "__t" + std::to_string(next_temp_++); }

  static Trivial rename(const Trivial& t, const Ctx& ctx) {
    if (t.is_const) return t;
    auto it = ctx.rename.find(t.name);
    return it == ctx.rename.end() ? t : Trivial::var(it->second);
  }

  static std::vector<Trivial> rename_all(const std::vector<Trivial>& ts, const Ctx& ctx) {
    std::vector<Trivial> out;
    for (const auto& t : ts) out.push_back(rename(t, ctx));
    return out;
  }

  AnfRhs rewrite_rhs(const AnfRhs& rhs, Ctx& ctx) {
    if (auto* p = std::get_if<anf::PrimApp>(&rhs)) return anf::PrimApp{p->op, rename_all(p->args, ctx)};
    if (auto* r = std::get_if<anf::RecurApp>(&rhs)) return anf::RecurApp{rename_all(r->args, ctx)};
    if (auto* f = std::get_if<anf::IfApp>(&rhs)) {
      anf::IfApp out;
      out.cond = rename(f->cond, ctx);
      out.then_block = rewrite(f->then_block, ctx);
      out.else_block = rewrite(f->else_block, ctx);
      return out;
    }
    if (auto* l = std::get_if<anf::LoopApp>(&rhs)) {
      anf::LoopApp out;
      for (const auto& v : l->vars) {
        std::string temp = v.temp;
        Trivial init = rename(v.init, ctx);
        if (ctx.clone) {
          temp = fresh();
          ctx.rename[v.temp] = temp;
        }
        out.vars.push_back({temp, init});
      }
      out.body = rewrite(l->body, ctx);
      return out;
    }
    const auto& call = std::get<anf::CallApp>(rhs);
    auto args = rename_all(call.args, ctx);
    if (!loopable_[call.function]) return anf::CallApp{call.function, std::move(args)};
    if (ctx.self && *ctx.self == call.function) return anf::RecurApp{std::move(args)};

    const AnfFunction& fn = prog_.functions[call.function];
    anf::LoopApp loop;
    Ctx inner;
    inner.clone = true;
    inner.self = call.function;
    for (std::size_t i = 0; i < fn.params.size(); ++i) {
      std::string temp = fresh();
      inner.rename[fn.params[i]] = temp;
      loop.vars.push_back({temp, args[i]});
    }
    loop.body = rewrite(fn.body, inner);
    return loop;
  }

  const AnfProgram& prog_;
  std::vector<bool> loopable_;
  std::size_t next_temp_;
};

void validate_recur(const AnfBlock& block, std::optional<std::size_t> loop_arity, bool tail) {
  for (std::size_t i = 0; i < block.bindings.size(); ++i) {
    const auto& b = block.bindings[i];
    bool here = tail && i + 1 == block.bindings.size() && result_is_last(block);
    if (auto* r = std::get_if<anf::RecurApp>(&b.rhs)) {
      if (!loop_arity || !here) throw LoweringError("recur outside the tail position of a loop body");
      if (r->args.size() != *loop_arity) {
        throw LoweringError("recur passes " + std::to_string(r->args.size()) + " values to a loop of " +
                            std::to_string(*loop_arity) + " variables");
      }
    } else if (auto* f = std::get_if<anf::IfApp>(&b.rhs)) {
      validate_recur(f->then_block, here ? loop_arity : std::nullopt, here);
      validate_recur(f->else_block, here ? loop_arity : std::nullopt, here);
    } else if (auto* l = std::get_if<anf::LoopApp>(&b.rhs)) {
      validate_recur(l->body, l->vars.size(), true);
    }
  }
}

}  // namespace

void check_depth(const std::string& name, std::size_t max_depth, std::size_t current_depth) {
  if (current_depth >= max_depth) throw DepthLimitExceeded(name, max_depth);
}

void check_depth(const RecursiveFn& fn, std::size_t current_depth) {
  check_depth(fn.name, fn.max_depth, current_depth);
}

bool is_tail_recursive(const AnfProgram& prog, std::size_t function) {
  return self_calls_in_tail(prog.functions.at(function).body, function, true) && !in_larger_cycle(prog, function);
}

AnfProgram lower_tail_calls(const AnfProgram& anf) {
  std::vector<bool> loopable(anf.functions.size());
  for (std::size_t i = 0; i < anf.functions.size(); ++i) loopable[i] = is_tail_recursive(anf, i);

  Rewriter rw(anf, loopable, anf.temp_count);
  AnfProgram out;
  out.scope = anf.scope;
  Rewriter::Ctx top;
  out.main = rw.rewrite(anf.main, top);
  for (std::size_t i = 0; i < anf.functions.size(); ++i) {
    AnfFunction fn = anf.functions[i];
    if (loopable[i]) {
      fn.lowered = true;
    } else {
      Rewriter::Ctx ctx;
      fn.body = rw.rewrite(fn.body, ctx);
    }
    out.functions.push_back(std::move(fn));
  }
  out.temp_count = rw.temp_count();

  validate_recur(out.main, std::nullopt, false);
  for (const auto& fn : out.functions) {
    if (!fn.lowered) validate_recur(fn.body, std::nullopt, false);
  }
  return out;
}

std::vector<RecursiveFn> recursive_functions(const AnfProgram& lowered, std::size_t max_depth) {
  std::vector<RecursiveFn> out;
  for (const auto& fn : lowered.functions) {
    if (!fn.lowered) out.push_back({fn.name, fn.params, fn.body, max_depth});
  }
  return out;
}

}  // namespace ncomp
