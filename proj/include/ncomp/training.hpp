#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "ncomp/compiler.hpp"
#include "ncomp/executor.hpp"
#include "ncomp/params.hpp"
#include "ncomp/tape.hpp"

namespace ncomp {

using Rng = std::mt19937_64;

// ---- optimizer -----------------------------------------------------------

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of every trainable entry at learning rate `lr`
/// (state.config.lr when negative). Gradients are left for the caller to zero.
void adam_step(ParameterStore& store, AdamState& state, double lr = -1.0);

/// Cosine decay from lr_start at epoch 0 to lr_end at the last epoch.
double cosine_lr(double lr_start, double lr_end, std::size_t epoch, std::size_t epochs);

// ---- losses --------------------------------------------------------------

struct MseResult {
  Value loss;  // unbatched scalar
  Value seed;  // d loss / d pred = 2 (pred - target) / count
};
MseResult mse_loss(const Value& pred, const Value& target);

/// Multiplicative Gaussian noise: v * (1 + N(0, level)).
Value add_noise(const Value& v, double level, Rng& rng);

// ---- dense network -------------------------------------------------------

enum class Activation { relu, tanh };

struct MlpModel {
  std::vector<std::size_t> sizes;  // in, hidden..., out
  Activation activation = Activation::tanh;
  std::string prefix = "mlp";

  std::string weight(std::size_t layer) const { return prefix + ".W" + std::to_string(layer); }
  std::string bias(std::size_t layer) const { return prefix + ".b" + std::to_string(layer); }
  std::size_t layers() const { return sizes.size() - 1; }
  std::size_t param_count() const;
};

/// Registers the weights in `store`: Kaiming-uniform for relu, Xavier-uniform for tanh, zero biases.
MlpModel make_mlp(ParameterStore& store, std::vector<std::size_t> sizes, Activation act, const std::string& prefix,
                  Rng& rng);

/// x is [B, in] (or an unbatched [in] vector); output [B, out].
VarId mlp_forward(Tape& tape, const MlpModel& model, ParameterStore& store, VarId x);
Value mlp_predict(const MlpModel& model, ParameterStore& store, const Value& x);

// ---- ODE integration -----------------------------------------------------

/// Right-hand side on the tape: state [S, dim] -> derivative [S, dim].
using RhsFn = std::function<VarId(Tape&, VarId)>;

struct OdeSystem {
  RhsFn rhs;
  std::size_t state_dim = 0;
};

/// One compiled scalar program per state component; each reads the components by `state_names`.
OdeSystem compiled_system(std::vector<const CompiledProgram*> components, std::vector<std::string> state_names,
                          ParameterStore& store);
OdeSystem mlp_system(const MlpModel& model, ParameterStore& store);
/// Sum of two right-hand sides.
OdeSystem hybrid_system(OdeSystem a, OdeSystem b);

VarId rk4_step(Tape& tape, const OdeSystem& sys, VarId state, double dt);
Value rk4_step(const OdeSystem& sys, const Value& state, double dt);

/// Observed states every `dt`, integrated with `substeps` RK4 steps between samples.
std::vector<Value> integrate(const OdeSystem& sys, const Value& initial, double dt, std::size_t steps,
                             std::size_t substeps = 1);

struct ShootingConfig {
  std::size_t segment_length = 10;
  std::size_t substeps = 1;
  double dt = 0.1;
  /// Observed trajectories of unbatched [dim] states, each evenly spaced by dt.
  std::vector<std::vector<Value>> trajectories;
};

/// Each segment restarts from an observed state and is compared against the observations it
/// covers; the mean is over every compared element. Segments of every trajectory share one batch.
VarId multiple_shooting_loss(Tape& tape, const OdeSystem& sys, const ShootingConfig& cfg);

// ---- generic training loop ----------------------------------------------

struct TrainConfig {
  std::size_t epochs = 3000;
  double lr_start = 1e-2;
  double lr_end = 1e-4;
  std::size_t batch_size = 0;  // 0: one full-batch step per epoch
  std::uint64_t shuffle_seed = 0;
};

struct TrainingReport {
  std::map<std::string, double> final_params;  // scalar parameters only
  std::vector<double> loss_curve;
  std::map<std::string, double> recovery_errors;  // relative error against truth
};

/// Runs `epochs` Adam steps on the loss built by `loss_fn`. Throws NonFiniteLoss.
std::vector<double> train_loop(ParameterStore& store, const TrainConfig& cfg,
                               const std::function<VarId(Tape&)>& loss_fn);

/// One pass over `samples` shuffled indices per epoch, one Adam step per minibatch of
/// cfg.batch_size. The curve holds the mean minibatch loss of each epoch.
std::vector<double> train_minibatch(ParameterStore& store, const TrainConfig& cfg, std::size_t samples,
                                    const std::function<VarId(Tape&, std::span<const std::size_t>)>& loss_fn);

/// Batch elements `idx` of a batched value, in that order.
Value gather_batch(const Value& v, std::span<const std::size_t> idx);

/// Fits the parameters of a compiled program to (inputs, target) by MSE.
TrainingReport train_coefficients(const CompiledProgram& prog, ParameterStore& store, const Bindings& inputs,
                                  const Value& target, const TrainConfig& cfg,
                                  const std::map<std::string, double>& truth = {});

double relative_error(double estimate, double truth);

// ---- hybrid patterns ------------------------------------------------------

/// compiled(inputs) + mlp(mlp_input).
VarId hybrid_forward(Tape& tape, const CompiledProgram& prog, const std::map<std::string, VarId>& inputs,
                     const MlpModel& mlp, VarId mlp_input, ParameterStore& store);

using ChainStage = std::variant<const CompiledProgram*, const MlpModel*>;

/// Left-to-right composition on one tape. Compiled stages read their single input; scalar
/// values are wrapped to width-1 vectors for network stages and unwrapped after.
VarId compose_chain(Tape& tape, const std::vector<ChainStage>& stages, ParameterStore& store, VarId x);

}  // namespace ncomp
