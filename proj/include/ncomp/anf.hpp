#pragma once

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ncomp/primitives.hpp"
#include "ncomp/syntax.hpp"

namespace ncomp {

/// A constant or a variable (input, parameter, temp, loop variable or function parameter).
struct Trivial {
  bool is_const = false;
  double value = 0.0;
  std::string name;

  static Trivial constant(double v) { return {true, v, {}}; }
  static Trivial var(std::string n) { return {false, 0.0, std::move(n)}; }
};

bool operator==(const Trivial& a, const Trivial& b);

struct AnfBinding;

/// A nested program: if branches, loop bodies and function bodies.
struct AnfBlock {
  std::vector<AnfBinding> bindings;
  Trivial result;
};

namespace anf {
struct PrimApp {
  PrimOp op;
  std::vector<Trivial> args;
};
struct IfApp {
  Trivial cond;
  AnfBlock then_block;
  AnfBlock else_block;
};
struct LoopVar {
  std::string temp;
  Trivial init;
};
struct LoopApp {
  std::vector<LoopVar> vars;
  AnfBlock body;
};
/// Only in tail position of a loop body (or, after lowering, of a spliced function body).
struct RecurApp {
  std::vector<Trivial> args;
};
struct CallApp {
  std::size_t function;  // index into AnfProgram::functions
  std::vector<Trivial> args;
};
}  // namespace anf

using AnfRhs = std::variant<anf::PrimApp, anf::IfApp, anf::LoopApp, anf::RecurApp, anf::CallApp>;

struct AnfBinding {
  std::string temp;
  AnfRhs rhs;
};

/// letrec functions are closed over their parameters and the declared inputs/params,
/// so they are hoisted to the program and referenced by index.
struct AnfFunction {
  std::string name;
  std::vector<std::string> params;  // temps
  AnfBlock body;
  bool lowered = false;  // every call site was rewritten into a loop
};

struct AnfProgram {
  AnfBlock main;
  std::vector<AnfFunction> functions;
  /// User let/loop names and what they resolved to, for diagnostics.
  std::vector<std::pair<std::string, Trivial>> scope;
  std::size_t temp_count = 0;
};

class TempCounter {
 public:
  std::string fresh() { return "__t" + std::to_string(next_++); }
  std::size_t count() const { return next_; }

 private:
  std::size_t next_ = 0;
};

/// Flattens to A-normal form. Let names are resolved to the trivial they are bound to,
/// so `let` never produces a binding of its own.
AnfProgram to_anf(const Ast& ast);

/// Back to a SourceAst made of nested single-binding lets (temp names included).
AstPtr anf_to_ast(const AnfProgram& prog);

/// Nested-let text. A block whose result is its last binding prints that right-hand side inline.
std::string anf_to_string(const AnfProgram& prog);

std::size_t count_bindings(const AnfBlock& block);
std::size_t count_prim_apps(const AnfProgram& prog);

std::string trivial_to_string(const Trivial& t);

}  // namespace ncomp
