#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ncomp/anf.hpp"
#include "ncomp/loop_lowering.hpp"
#include "ncomp/primitives.hpp"

namespace ncomp {

enum class NodeKind { constant, input, param, fn_arg, loop_var, prim, select, branch, loop, call };

std::string_view node_kind_name(NodeKind k);

/// Tail of a block: either its value or a jump back to the enclosing loop.
struct BlockEnd {
  bool is_recur = false;
  std::size_t result = 0;            // node id when !is_recur
  std::vector<std::size_t> recur_args;  // node ids when is_recur
};

struct GraphBlock {
  std::vector<std::size_t> nodes;  // in creation order
  BlockEnd end;
};

struct GraphNode {
  std::size_t id = 0;
  NodeKind kind = NodeKind::constant;
  PrimOp op = PrimOp::add;
  std::vector<std::size_t> operands;
  bool has_immediate = false;  // pow with a literal exponent
  double value = 0.0;          // constant value or immediate
  std::string name;            // leaf name or the ANF temp it computes
  std::size_t block = 0;       // block holding this node
  std::vector<std::size_t> sub_blocks;  // branch: then/else; loop: body
  std::vector<std::size_t> loop_vars;   // loop: loop_var node ids
  std::size_t function = 0;             // call
};

/// One activation's worth of nodes: the main program or a function body.
/// Block 0 is the root; leaves always live there.
struct ComputeGraph {
  std::string name;
  std::vector<GraphNode> nodes;
  std::vector<GraphBlock> blocks;
  std::size_t output = 0;
  std::vector<std::size_t> args;  // fn_arg node ids, for function graphs
  std::vector<ComputeGraph> functions;  // stack-dispatched functions (main graph only)

  std::size_t node_count() const { return nodes.size(); }
};

ComputeGraph build_graph(const AnfProgram& anf, const std::vector<std::string>& inputs,
                         const std::vector<std::string>& params);

/// Kahn's algorithm over operand edges, ties broken by smallest node id.
std::vector<std::size_t> toposort(const ComputeGraph& graph);

enum class OpCode { load_const, load_input, load_param, load_arg, loop_var, prim, pow_imm, select, branch, loop, call };

struct Instruction {
  std::size_t index = 0;  // position in the program listing, used in diagnostics
  OpCode opcode = OpCode::prim;
  PrimOp op = PrimOp::add;
  std::size_t dest = 0;
  std::vector<std::size_t> operands;
  double immediate = 0.0;
  std::string name;
  std::vector<std::size_t> blocks;     // branch: then/else; loop: body
  std::vector<std::size_t> var_slots;  // loop
  std::size_t function = 0;            // call
};

struct Terminator {
  bool is_recur = false;
  std::size_t slot = 0;
  std::vector<std::size_t> args;
};

struct InstructionBlock {
  std::vector<Instruction> code;
  Terminator end;
};

struct InstructionProgram {
  std::string name;
  std::vector<InstructionBlock> blocks;  // block 0 is the entry
  std::size_t slot_count = 0;
  std::map<std::string, std::size_t> input_slots;
  std::map<std::string, std::size_t> param_slots;
  std::vector<std::size_t> arg_slots;
  std::size_t output_slot = 0;
  std::size_t instruction_count = 0;
};

struct SafeDomainOp {
  std::size_t instruction;
  PrimOp op;
};

struct CompileConfig {
  std::size_t max_recursion_depth = kDefaultMaxRecursionDepth;
};

/// Frozen compiled artifact. Evaluation never mutates it.
struct CompiledProgram {
  InstructionProgram program;
  std::vector<InstructionProgram> functions;
  std::vector<std::string> input_names;
  std::vector<std::string> param_names;
  std::string source_text;
  std::vector<SafeDomainOp> safe_domain_ops;
  std::size_t max_recursion_depth = kDefaultMaxRecursionDepth;
  std::size_t node_count = 0;
  std::chrono::nanoseconds compile_time{0};
};

CompiledProgram compile_graph(const ComputeGraph& graph, const std::vector<std::string>& inputs,
                              const std::vector<std::string>& params, const CompileConfig& config = {});

/// parse -> scope check -> ANF -> loop lowering -> graph -> instructions.
CompiledProgram compile(const std::string& source, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& params = {}, const CompileConfig& config = {});

/// Slot table: one `slot[k] = ...   ; role` line per instruction.
std::string disassemble(const CompiledProgram& prog);

std::size_t trainable_count(const CompiledProgram& prog);

}  // namespace ncomp
