#include "ncomp/executor.hpp"

#include <optional>

#include "ncomp/error.hpp"
#include "ncomp/loop_lowering.hpp"

namespace ncomp {
namespace {

bool block_diverges(const InstructionProgram& p, std::size_t b) {
  if (p.blocks[b].end.is_recur) return true;
  for (const auto& ins : p.blocks[b].code) {
    if (ins.opcode == OpCode::call || ins.opcode == OpCode::loop) return true;
    for (auto sub : ins.blocks) {
      if (block_diverges(p, sub)) return true;
    }
  }
  return false;
}

// Explicit-stack evaluator: loop iterations and function calls never grow the C++ stack.
class Machine {
 public:
  Machine(const CompiledProgram& prog, const SafeDomainPolicy& policy, Tape* tape)
      : prog_(prog), policy_(policy), tape_(tape) {}

  const Bindings* input_values = nullptr;
  const std::map<std::string, VarId>* input_ids = nullptr;
  const ParameterStore* params = nullptr;
  ParameterStore* mutable_params = nullptr;

  struct Slot {
    Value v;
    VarId id = 0;
  };

  Slot run() {
    for (const auto& name : prog_.input_names) {
      bool present = input_ids ? input_ids->count(name) != 0 : input_values->count(name) != 0;
      if (!present) throw MissingInput("no value supplied for input '" + name + "'");
    }
    acts_.push_back({&prog_.program, std::vector<Slot>(prog_.program.slot_count), 0});
    frames_.push_back({0, 0, 0, FrameKind::root, nullptr});
    std::optional<Slot> result;
    while (!result) {
      Frame& f = frames_.back();
      const InstructionBlock& blk = acts_[f.act].code->blocks[f.block];
      if (f.pc < blk.code.size()) {
        const Instruction& ins = blk.code[f.pc++];
        step(ins);
        continue;
      }
      if (blk.end.is_recur) {
        recur(blk.end.args);
        continue;
      }
      result = finish_frame(blk.end.slot);
    }
    if (policy_.checking() && violation_ && !result->v.all_finite()) {
      throw DomainViolation("domain violation at instruction " + std::to_string(violation_->instruction) + ": " +
                                violation_->what,
                            static_cast<long>(violation_->instruction), violation_->batch);
    }
    return *result;
  }

 private:
  enum class FrameKind { root, branch, loop_body };
  struct Frame {
    std::size_t act;
    std::size_t block;
    std::size_t pc;
    FrameKind kind;
    const Instruction* owner;
  };
  struct Activation {
    const InstructionProgram* code;
    std::vector<Slot> slots;
    std::size_t call_dest;
  };
  struct Violation {
    std::size_t instruction;
    long batch;
    std::string what;
  };

  Slot& slot(std::size_t s) { return acts_[frames_.back().act].slots[s]; }

  void set(std::size_t dest, Value v, VarId id) {
    Slot& s = slot(dest);
    s.v = std::move(v);
    s.id = id;
  }

  std::optional<Slot> finish_frame(std::size_t result_slot) {
    Frame f = frames_.back();
    Slot value = acts_[f.act].slots[result_slot];
    frames_.pop_back();
    switch (f.kind) {
      case FrameKind::root:
        if (f.act == 0) return value;
        {
          std::size_t dest = acts_[f.act].call_dest;
          acts_.pop_back();
          slot(dest) = std::move(value);
        }
        return std::nullopt;
      case FrameKind::branch:
      case FrameKind::loop_body:
        slot(f.owner->dest) = std::move(value);
        return std::nullopt;
    }
    return std::nullopt;
  }

  void recur(const std::vector<std::size_t>& arg_slots) {
    std::vector<Slot> args;
    for (auto s : arg_slots) args.push_back(slot(s));
    while (frames_.back().kind == FrameKind::branch) frames_.pop_back();
    Frame& loop = frames_.back();
    if (loop.kind != FrameKind::loop_body) throw LoweringError("recur reached outside a loop");
    const auto& vars = loop.owner->var_slots;
    for (std::size_t i = 0; i < vars.size(); ++i) slot(vars[i]) = args[i];
    loop.pc = 0;
    if (tape_) tape_->mark_loop_iteration();
  }

  void note(const DomainSink& sink, const Instruction& ins, const Value& out) {
    if (sink.empty() || violation_) return;
    long b = out.is_batched() ? static_cast<long>(sink[0].flat_index / out.elem_size()) : -1;
    violation_ = Violation{ins.index, b, sink[0].what};
  }

  DomainSink* sink_for(DomainSink& local) { return policy_.checking() ? &local : nullptr; }

  void exec_prim(const Instruction& ins) {
    DomainSink local;
    try {
      if (tape_) {
        std::vector<VarId> ids;
        for (auto o : ins.operands) ids.push_back(slot(o).id);
        VarId id = ins.opcode == OpCode::pow_imm ? tape_->pow_imm(ids[0], ins.immediate, policy_, sink_for(local))
                                                 : tape_->apply(ins.op, ids, policy_, sink_for(local));
        set(ins.dest, tape_->value(id), id);
      } else {
        Value out;
        if (ins.opcode == OpCode::pow_imm) {
          out = apply_pow_immediate(slot(ins.operands[0]).v, ins.immediate, policy_, sink_for(local));
        } else {
          std::vector<Value> vals;
          vals.reserve(ins.operands.size());
          for (auto o : ins.operands) vals.push_back(slot(o).v);
          out = apply_primitive(ins.op, vals, policy_, sink_for(local));
        }
        set(ins.dest, std::move(out), 0);
      }
    } catch (const ShapeMismatch& e) {
      throw ShapeMismatch("instruction " + std::to_string(ins.index) + ": " + e.what());
    }
    note(local, ins, slot(ins.dest).v);
  }

  void exec_select(std::size_t dest, const Slot& c, const Slot& t, const Slot& e) {
    if (tape_) {
      VarId id = tape_->select(c.id, t.id, e.id);
      set(dest, tape_->value(id), id);
    } else {
      set(dest, apply_select(c.v, t.v, e.v), 0);
    }
  }

  void simple(const Instruction& ins) {
    switch (ins.opcode) {
      case OpCode::load_const:
        if (tape_) {
          VarId id = tape_->constant(Value::scalar(ins.immediate));
          set(ins.dest, tape_->value(id), id);
        } else {
          set(ins.dest, Value::scalar(ins.immediate), 0);
        }
        return;
      case OpCode::load_input:
        if (input_ids) {
          VarId id = input_ids->at(ins.name);
          set(ins.dest, tape_->value(id), id);
        } else {
          set(ins.dest, input_values->at(ins.name), 0);
        }
        return;
      case OpCode::load_param:
        if (tape_) {
          VarId id = tape_->param(*mutable_params, ins.name);
          set(ins.dest, tape_->value(id), id);
        } else {
          set(ins.dest, params->value(ins.name), 0);
        }
        return;
      case OpCode::load_arg:
      case OpCode::loop_var:
        return;
      case OpCode::prim:
      case OpCode::pow_imm:
        exec_prim(ins);
        return;
      case OpCode::select: {
        Slot c = slot(ins.operands[0]), t = slot(ins.operands[1]), e = slot(ins.operands[2]);
        exec_select(ins.dest, c, t, e);
        return;
      }
      default:
        throw Error("unexpected instruction in straight-line block");
    }
  }

  // A mixed condition over branches without loops, calls or recur: both run, then select.
  Slot run_inline(std::size_t b) {
    const InstructionProgram& p = *acts_[frames_.back().act].code;
    for (const auto& ins : p.blocks[b].code) {
      if (ins.opcode == OpCode::branch) {
        branch_inline(ins);
      } else {
        simple(ins);
      }
    }
    return slot(p.blocks[b].end.slot);
  }

  void branch_inline(const Instruction& ins) {
    Slot c = slot(ins.operands[0]);
    switch (cond_state(c.v)) {
      case CondState::all_true: slot(ins.dest) = run_inline(ins.blocks[0]); return;
      case CondState::all_false: slot(ins.dest) = run_inline(ins.blocks[1]); return;
      case CondState::mixed: {
        Slot t = run_inline(ins.blocks[0]);
        Slot e = run_inline(ins.blocks[1]);
        exec_select(ins.dest, c, t, e);
        return;
      }
    }
  }

  void step(const Instruction& ins) {
    switch (ins.opcode) {
      case OpCode::branch: {
        const Slot& c = slot(ins.operands[0]);
        CondState st = cond_state(c.v);
        if (st == CondState::mixed) {
          const InstructionProgram& p = *acts_[frames_.back().act].code;
          if (block_diverges(p, ins.blocks[0]) || block_diverges(p, ins.blocks[1])) {
            throw BranchDivergence("instruction " + std::to_string(ins.index) +
                                   ": batch elements disagree on a branch that loops, calls or recurs");
          }
          branch_inline(ins);
          return;
        }
        std::size_t b = st == CondState::all_true ? ins.blocks[0] : ins.blocks[1];
        frames_.push_back({frames_.back().act, b, 0, FrameKind::branch, &ins});
        return;
      }
      case OpCode::loop: {
        std::vector<Slot> init;
        for (auto o : ins.operands) init.push_back(slot(o));
        for (std::size_t i = 0; i < init.size(); ++i) slot(ins.var_slots[i]) = init[i];
        frames_.push_back({frames_.back().act, ins.blocks[0], 0, FrameKind::loop_body, &ins});
        if (tape_) tape_->mark_loop_iteration();
        return;
      }
      case OpCode::call: {
        const InstructionProgram& fn = prog_.functions[ins.function];
        check_depth(fn.name, prog_.max_recursion_depth, acts_.size() - 1);
        Activation a{&fn, std::vector<Slot>(fn.slot_count), ins.dest};
        for (std::size_t i = 0; i < fn.arg_slots.size(); ++i) a.slots[fn.arg_slots[i]] = slot(ins.operands[i]);
        acts_.push_back(std::move(a));
        frames_.push_back({acts_.size() - 1, 0, 0, FrameKind::root, &ins});
        return;
      }
      default:
        simple(ins);
    }
  }

  const CompiledProgram& prog_;
  SafeDomainPolicy policy_;
  Tape* tape_;
  std::vector<Activation> acts_;
  std::vector<Frame> frames_;
  std::optional<Violation> violation_;
};

}  // namespace

Value eval_program(const CompiledProgram& prog, const Bindings& inputs, const ParameterStore& params,
                   const SafeDomainPolicy& policy) {
  Machine m(prog, policy, nullptr);
  m.input_values = &inputs;
  m.params = &params;
  return m.run().v;
}

Value eval_program(const CompiledProgram& prog, const Bindings& inputs, const SafeDomainPolicy& policy) {
  static const ParameterStore empty;
  return eval_program(prog, inputs, empty, policy);
}

VarId eval_on_tape(Tape& tape, const CompiledProgram& prog, const std::map<std::string, VarId>& inputs,
                   ParameterStore& params, const SafeDomainPolicy& policy) {
  Machine m(prog, policy, &tape);
  m.input_ids = &inputs;
  m.mutable_params = &params;
  return m.run().id;
}

TapedEval eval_with_tape(const CompiledProgram& prog, const Bindings& inputs, ParameterStore& params,
                         const SafeDomainPolicy& policy) {
  TapedEval out;
  std::map<std::string, VarId> ids;
  for (const auto& [name, v] : inputs) ids[name] = out.tape.input(name, v);
  out.output = eval_on_tape(out.tape, prog, ids, params, policy);
  out.value = out.tape.value(out.output);
  return out;
}

GradResult backward(TapedEval& run, const Value& seed, const GradRequest* request) {
  return run.tape.backward(run.output, seed, request);
}

}  // namespace ncomp
