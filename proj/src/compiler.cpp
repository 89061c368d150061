#include "ncomp/compiler.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <queue>
#include <set>

#include "ncomp/error.hpp"
#include "ncomp/format.hpp"
#include "ncomp/syntax.hpp"

namespace ncomp {
namespace {

bool result_is_last(const AnfBlock& block) {
  return !block.bindings.empty() && !block.result.is_const && block.result.name == block.bindings.back().temp;
}

bool needs_lazy(const AnfBlock& block) {
  for (const auto& b : block.bindings) {
    if (std::holds_alternative<anf::CallApp>(b.rhs) || std::holds_alternative<anf::RecurApp>(b.rhs) ||
        std::holds_alternative<anf::LoopApp>(b.rhs)) {
      return true;
    }
    if (auto* i = std::get_if<anf::IfApp>(&b.rhs)) {
      if (needs_lazy(i->then_block) || needs_lazy(i->else_block)) return true;
    }
  }
  return false;
}

class GraphBuilder {
 public:
  GraphBuilder(const std::set<std::string>& inputs, const std::set<std::string>& params,
               const std::map<std::size_t, std::size_t>& fn_index)
      : inputs_(inputs), params_(params), fn_index_(fn_index) {
    g_.blocks.emplace_back();
  }

  std::size_t add_arg(const std::string& temp) {
    std::size_t id = new_node(NodeKind::fn_arg, 0);
    g_.nodes[id].name = temp;
    env_[temp] = id;
    g_.args.push_back(id);
    return id;
  }

  /// `tail`: the block is the body of a loop or function, so a final `if` branches lazily.
  BlockEnd build_block(const AnfBlock& block, std::size_t blk, bool tail) {
    for (std::size_t i = 0; i < block.bindings.size(); ++i) {
      const auto& b = block.bindings[i];
      bool here = tail && i + 1 == block.bindings.size() && result_is_last(block);
      if (auto* r = std::get_if<anf::RecurApp>(&b.rhs)) {
        if (!here) throw LoweringError("recur outside the tail position of a loop body");
        BlockEnd end;
        end.is_recur = true;
        for (const auto& a : r->args) end.recur_args.push_back(operand(a));
        return end;
      }
      env_[b.temp] = build_binding(b, blk, here);
    }
    BlockEnd end;
    end.result = operand(block.result);
    return end;
  }

  ComputeGraph finish(std::size_t output, std::string name) {
    g_.output = output;
    g_.name = std::move(name);
    return std::move(g_);
  }

 private:
  std::size_t new_node(NodeKind kind, std::size_t blk) {
    GraphNode n;
    n.id = g_.nodes.size();
    n.kind = kind;
    n.block = blk;
    g_.nodes.push_back(std::move(n));
    g_.blocks[blk].nodes.push_back(g_.nodes.back().id);
    return g_.nodes.back().id;
  }

  std::size_t new_block() {
    g_.blocks.emplace_back();
    return g_.blocks.size() - 1;
  }

  std::size_t operand(const Trivial& t) {
    if (t.is_const) {
      auto bits = std::bit_cast<std::uint64_t>(t.value);
      auto it = consts_.find(bits);
      if (it != consts_.end()) return it->second;
      std::size_t id = new_node(NodeKind::constant, 0);
      g_.nodes[id].value = t.value;
      g_.nodes[id].name = format_number(t.value);
      consts_[bits] = id;
      return id;
    }
    if (auto it = env_.find(t.name); it != env_.end()) return it->second;
    NodeKind kind;
    if (inputs_.count(t.name)) {
      kind = NodeKind::input;
    } else if (params_.count(t.name)) {
      kind = NodeKind::param;
    } else {
      throw UnboundVariable(t.name);
    }
    std::size_t id = new_node(kind, 0);
    g_.nodes[id].name = t.name;
    env_[t.name] = id;
    return id;
  }

  std::size_t build_binding(const AnfBinding& b, std::size_t blk, bool tail) {
    if (auto* p = std::get_if<anf::PrimApp>(&b.rhs)) return build_prim(*p, b.temp, blk);
    if (auto* f = std::get_if<anf::IfApp>(&b.rhs)) return build_if(*f, b.temp, blk, tail);
    if (auto* l = std::get_if<anf::LoopApp>(&b.rhs)) {
      std::vector<std::size_t> inits;
      for (const auto& v : l->vars) inits.push_back(operand(v.init));
      std::size_t body = new_block();
      std::vector<std::size_t> vars;
      for (const auto& v : l->vars) {
        GraphNode n;
        n.id = g_.nodes.size();
        n.kind = NodeKind::loop_var;
        n.block = body;
        n.name = v.temp;
        g_.nodes.push_back(n);
        env_[v.temp] = n.id;
        vars.push_back(n.id);
      }
      BlockEnd end = build_block(l->body, body, true);
      g_.blocks[body].end = end;
      std::size_t id = new_node(NodeKind::loop, blk);
      auto& n = g_.nodes[id];
      n.operands = std::move(inits);
      n.sub_blocks = {body};
      n.loop_vars = std::move(vars);
      n.name = b.temp;
      return id;
    }
    const auto& c = std::get<anf::CallApp>(b.rhs);
    std::vector<std::size_t> args;
    for (const auto& a : c.args) args.push_back(operand(a));
    std::size_t id = new_node(NodeKind::call, blk);
    g_.nodes[id].operands = std::move(args);
    g_.nodes[id].function = fn_index_.at(c.function);
    g_.nodes[id].name = b.temp;
    return id;
  }

  std::size_t build_prim(const anf::PrimApp& p, const std::string& temp, std::size_t blk) {
    bool immediate = p.op == PrimOp::pow && p.args.size() == 2 && p.args[1].is_const;
    std::size_t nargs = immediate ? 1 : p.args.size();
    // Leaves of a commutative op materialize constants first.
    if (is_commutative(p.op)) {
      for (std::size_t i = 0; i < nargs; ++i) {
        if (p.args[i].is_const) operand(p.args[i]);
      }
    }
    std::vector<std::size_t> ops;
    for (std::size_t i = 0; i < nargs; ++i) ops.push_back(operand(p.args[i]));
    std::size_t id = new_node(NodeKind::prim, blk);
    auto& n = g_.nodes[id];
    n.op = p.op;
    n.operands = std::move(ops);
    n.name = temp;
    if (immediate) {
      n.has_immediate = true;
      n.value = p.args[1].value;
    }
    return id;
  }

  std::size_t build_if(const anf::IfApp& f, const std::string& temp, std::size_t blk, bool tail) {
    std::size_t cond = operand(f.cond);
    bool lazy = tail || needs_lazy(f.then_block) || needs_lazy(f.else_block);
    if (!lazy) {
      BlockEnd t = build_block(f.then_block, blk, false);
      BlockEnd e = build_block(f.else_block, blk, false);
      std::size_t id = new_node(NodeKind::select, blk);
      g_.nodes[id].operands = {cond, t.result, e.result};
      g_.nodes[id].name = temp;
      return id;
    }
    std::size_t then_blk = new_block();
    g_.blocks[then_blk].end = build_block(f.then_block, then_blk, tail);
    std::size_t else_blk = new_block();
    g_.blocks[else_blk].end = build_block(f.else_block, else_blk, tail);
    std::size_t id = new_node(NodeKind::branch, blk);
    g_.nodes[id].operands = {cond};
    g_.nodes[id].sub_blocks = {then_blk, else_blk};
    g_.nodes[id].name = temp;
    return id;
  }

  const std::set<std::string>& inputs_;
  const std::set<std::string>& params_;
  const std::map<std::size_t, std::size_t>& fn_index_;
  ComputeGraph g_;
  std::map<std::uint64_t, std::size_t> consts_;
  std::map<std::string, std::size_t> env_;
};

std::string slot_ref(std::size_t s) { return "slot[" + std::to_string(s) + "]"; }

class Emitter {
 public:
  Emitter(const ComputeGraph& g, std::vector<SafeDomainOp>* safe_ops, std::size_t& counter)
      : g_(g), safe_ops_(safe_ops), counter_(counter) {}

  InstructionProgram emit(const std::vector<std::string>& inputs, const std::vector<std::string>& params) {
    auto order = toposort(g_);
    slot_.assign(g_.nodes.size(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) slot_[order[i]] = i;

    InstructionProgram p;
    p.name = g_.name;
    p.slot_count = g_.nodes.size();
    p.output_slot = slot_[g_.output];
    p.blocks.resize(g_.blocks.size());
    for (std::size_t b = 0; b < g_.blocks.size(); ++b) {
      auto nodes = g_.blocks[b].nodes;
      std::sort(nodes.begin(), nodes.end(), [&](std::size_t x, std::size_t y) { return slot_[x] < slot_[y]; });
      for (auto id : nodes) p.blocks[b].code.push_back(instruction(g_.nodes[id]));
      const BlockEnd& end = g_.blocks[b].end;
      p.blocks[b].end.is_recur = end.is_recur;
      if (end.is_recur) {
        for (auto a : end.recur_args) p.blocks[b].end.args.push_back(slot_[a]);
      } else {
        p.blocks[b].end.slot = slot_[end.result];
      }
    }
    p.blocks[0].end.slot = p.output_slot;
    for (const auto& n : g_.nodes) {
      if (n.kind == NodeKind::input) p.input_slots[n.name] = slot_[n.id];
      if (n.kind == NodeKind::param) p.param_slots[n.name] = slot_[n.id];
    }
    for (auto a : g_.args) p.arg_slots.push_back(slot_[a]);
    (void)inputs;
    (void)params;
    number(p, 0);
    p.instruction_count = counter_;
    return p;
  }

 private:
  Instruction instruction(const GraphNode& n) {
    Instruction ins;
    ins.dest = slot_[n.id];
    ins.name = n.name;
    for (auto o : n.operands) ins.operands.push_back(slot_[o]);
    ins.blocks = n.sub_blocks;
    switch (n.kind) {
      case NodeKind::constant:
        ins.opcode = OpCode::load_const;
        ins.immediate = n.value;
        break;
      case NodeKind::input: ins.opcode = OpCode::load_input; break;
      case NodeKind::param: ins.opcode = OpCode::load_param; break;
      case NodeKind::fn_arg: ins.opcode = OpCode::load_arg; break;
      case NodeKind::loop_var: ins.opcode = OpCode::loop_var; break;
      case NodeKind::prim:
        ins.opcode = n.has_immediate ? OpCode::pow_imm : OpCode::prim;
        ins.op = n.op;
        ins.immediate = n.value;
        break;
      case NodeKind::select: ins.opcode = OpCode::select; break;
      case NodeKind::branch: ins.opcode = OpCode::branch; break;
      case NodeKind::loop:
        ins.opcode = OpCode::loop;
        for (auto v : n.loop_vars) ins.var_slots.push_back(slot_[v]);
        break;
      case NodeKind::call:
        ins.opcode = OpCode::call;
        ins.function = n.function;
        break;
    }
    return ins;
  }

  // Listing order: each instruction, then the blocks it owns.
  void number(InstructionProgram& p, std::size_t b) {
    for (auto& ins : p.blocks[b].code) {
      ins.index = counter_++;
      if ((ins.opcode == OpCode::prim || ins.opcode == OpCode::pow_imm) && is_partial(ins.op) && safe_ops_) {
        safe_ops_->push_back({ins.index, ins.op});
      }
      for (auto sub : ins.blocks) number(p, sub);
    }
  }

  const ComputeGraph& g_;
  std::vector<SafeDomainOp>* safe_ops_;
  std::size_t& counter_;
  std::vector<std::size_t> slot_;
};

std::string instruction_text(const Instruction& ins, const CompiledProgram& prog) {
  const auto& o = ins.operands;
  auto list = [&](const std::vector<std::size_t>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + slot_ref(xs[i]);
    return s;
  };
  switch (ins.opcode) {
    case OpCode::load_const: return format_number(ins.immediate);
    case OpCode::load_input:
    case OpCode::load_param:
    case OpCode::load_arg:
    case OpCode::loop_var: return ins.name;
    case OpCode::pow_imm: return "pow(" + slot_ref(o[0]) + ", " + format_number(ins.immediate) + ")";
    case OpCode::prim: {
      bool infix = o.size() == 2 && (ins.op == PrimOp::add || ins.op == PrimOp::sub || ins.op == PrimOp::mul ||
                                     ins.op == PrimOp::div);
      if (infix) return slot_ref(o[0]) + " " + std::string(prim_name(ins.op)) + " " + slot_ref(o[1]);
      return std::string(prim_name(ins.op)) + "(" + list(o) + ")";
    }
    case OpCode::select: return "select(" + list(o) + ")";
    case OpCode::branch:
      return "branch(" + slot_ref(o[0]) + ", block " + std::to_string(ins.blocks[0]) + ", block " +
             std::to_string(ins.blocks[1]) + ")";
    case OpCode::loop:
      return "loop(" + list(o) + ") vars [" + list(ins.var_slots) + "] body block " + std::to_string(ins.blocks[0]);
    case OpCode::call: return "call " + prog.functions[ins.function].name + "(" + list(o) + ")";
  }
  return "?";
}

std::string role(const Instruction& ins, std::size_t output_slot) {
  std::string r;
  switch (ins.opcode) {
    case OpCode::load_const: r = "constant"; break;
    case OpCode::load_input: r = "input"; break;
    case OpCode::load_param: r = "param"; break;
    case OpCode::load_arg: r = "argument"; break;
    default: r = ins.name;
  }
  if (ins.dest == output_slot) {
    bool leaf = ins.opcode == OpCode::load_const || ins.opcode == OpCode::load_input ||
                ins.opcode == OpCode::load_param || ins.opcode == OpCode::load_arg;
    r = leaf ? r + ", output" : "output";
  }
  return r;
}

void disassemble_block(const InstructionProgram& p, std::size_t b, std::size_t indent, std::size_t output_slot,
                       const CompiledProgram& prog, std::string& out) {
  std::string pad(indent, ' ');
  for (const auto& ins : p.blocks[b].code) {
    std::string line = pad + slot_ref(ins.dest) + " = " + instruction_text(ins, prog);
    std::size_t width = 32 + indent;
    if (line.size() < width) line.resize(width, ' ');
    out += line + "   ; " + role(ins, b == 0 ? output_slot : SIZE_MAX) + "\n";
    for (std::size_t k = 0; k < ins.blocks.size(); ++k) {
      std::string label = ins.opcode == OpCode::loop ? "body" : (k == 0 ? "then" : "else");
      out += pad + "  " + label + " (block " + std::to_string(ins.blocks[k]) + "):\n";
      disassemble_block(p, ins.blocks[k], indent + 4, output_slot, prog, out);
    }
  }
  if (b != 0) {
    const auto& end = p.blocks[b].end;
    out += pad + (end.is_recur ? "recur(" : "result(");
    if (end.is_recur) {
      for (std::size_t i = 0; i < end.args.size(); ++i) out += (i ? ", " : "") + slot_ref(end.args[i]);
    } else {
      out += slot_ref(end.slot);
    }
    out += ")\n";
  }
}

}  // namespace

std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::constant: return "const";
    case NodeKind::input: return "input";
    case NodeKind::param: return "param";
    case NodeKind::fn_arg: return "arg";
    case NodeKind::loop_var: return "loop_var";
    case NodeKind::prim: return "prim";
    case NodeKind::select: return "select";
    case NodeKind::branch: return "branch";
    case NodeKind::loop: return "loop";
    case NodeKind::call: return "call";
  }
  return "?";
}

ComputeGraph build_graph(const AnfProgram& anf, const std::vector<std::string>& inputs,
                         const std::vector<std::string>& params) {
  std::set<std::string> in(inputs.begin(), inputs.end()), pa(params.begin(), params.end());
  std::map<std::size_t, std::size_t> fn_index;
  for (std::size_t i = 0; i < anf.functions.size(); ++i) {
    if (!anf.functions[i].lowered) fn_index[i] = fn_index.size();
  }

  std::vector<ComputeGraph> functions;
  for (std::size_t i = 0; i < anf.functions.size(); ++i) {
    if (anf.functions[i].lowered) continue;
    const auto& fn = anf.functions[i];
    GraphBuilder b(in, pa, fn_index);
    for (const auto& p : fn.params) b.add_arg(p);
    BlockEnd end = b.build_block(fn.body, 0, true);
    if (end.is_recur) throw LoweringError("recur at the top of function '" + fn.name + "'");
    ComputeGraph g = b.finish(end.result, fn.name);
    g.blocks[0].end = end;
    functions.push_back(std::move(g));
  }

  GraphBuilder b(in, pa, fn_index);
  BlockEnd end = b.build_block(anf.main, 0, false);
  ComputeGraph g = b.finish(end.result, "main");
  g.blocks[0].end = end;
  g.functions = std::move(functions);
  return g;
}

std::vector<std::size_t> toposort(const ComputeGraph& graph) {
  const std::size_t n = graph.nodes.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> consumers(n);
  for (const auto& node : graph.nodes) {
    for (auto o : node.operands) {
      if (o >= n) throw CycleDetected("operand " + std::to_string(o) + " out of range");
      consumers[o].push_back(node.id);
      ++indegree[node.id];
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    std::size_t id = ready.top();
    ready.pop();
    order.push_back(id);
    for (auto c : consumers[id]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order.size() != n) throw CycleDetected("compute graph contains a cycle");
  return order;
}

CompiledProgram compile_graph(const ComputeGraph& graph, const std::vector<std::string>& inputs,
                              const std::vector<std::string>& params, const CompileConfig& config) {
  CompiledProgram prog;
  prog.input_names = inputs;
  prog.param_names = params;
  prog.max_recursion_depth = config.max_recursion_depth;
  prog.node_count = graph.node_count();
  std::size_t counter = 0;
  prog.program = Emitter(graph, &prog.safe_domain_ops, counter).emit(inputs, params);
  for (const auto& fg : graph.functions) {
    prog.functions.push_back(Emitter(fg, &prog.safe_domain_ops, counter).emit(inputs, params));
  }
  return prog;
}

CompiledProgram compile(const std::string& source, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& params, const CompileConfig& config) {
  auto start = std::chrono::steady_clock::now();
  AstPtr ast = parse_source(source);
  scope_check(*ast, inputs, params);
  AnfProgram lowered = lower_tail_calls(to_anf(*ast));
  ComputeGraph graph = build_graph(lowered, inputs, params);
  CompiledProgram prog = compile_graph(graph, inputs, params, config);
  prog.source_text = source;
  prog.compile_time = std::chrono::steady_clock::now() - start;
  return prog;
}

std::string disassemble(const CompiledProgram& prog) {
  std::string out;
  disassemble_block(prog.program, 0, 0, prog.program.output_slot, prog, out);
  for (const auto& fn : prog.functions) {
    out += "\nfunction " + fn.name + ":\n";
    disassemble_block(fn, 0, 2, fn.blocks[0].end.slot, prog, out);
  }
  return out;
}

std::size_t trainable_count(const CompiledProgram& prog) { return prog.param_names.size(); }

}  // namespace ncomp
