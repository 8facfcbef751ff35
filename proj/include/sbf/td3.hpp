#pragma once

#include "sbf/beamforming.hpp"
#include "sbf/knn.hpp"
#include "sbf/nn.hpp"
#include "sbf/seeding.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace sbf {

enum class Variant { TD3, DDPG };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct TD3Hyper {
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 64;
  int actor_period = 1;   // T1
  int target_period = 3;  // T2
  double explore_var = 0.5;
  double explore_decay = 1e-5;
  double explore_min = 1e-3;
  double target_var = 0.1;
  double target_decay = 1e-4;
  double target_min = 1e-3;
  double action_lo = -std::numbers::pi;
  double action_hi = std::numbers::pi;
  int knn_k = 8;
  bool knn_wrap = false;
  int buffer_capacity = 50000;
  double actor_lr = 1e-3;
  double critic_lr = 2e-3;
  int actor_width = 16;   // hidden width per element
  int critic_width = 32;  // first hidden width per element; second is half

  void validate() const;
};

// +1 iff the power strictly increased.
inline int compute_reward(double p_now, double p_prev) { return p_now > p_prev ? 1 : -1; }

struct Experience {
  Eigen::VectorXi state;
  Eigen::VectorXi action;
  double reward = 0.0;
  Eigen::VectorXi next_state;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000);

  void push(Experience e);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Experience& operator[](std::size_t i) const { return data_[i]; }
  // Slot the next push writes to.
  std::size_t cursor() const { return next_; }
  void set_cursor(std::size_t next);

  // K draws uniformly with replacement. Requires size() >= K.
  std::vector<std::size_t> sample(std::size_t k, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Experience> data_;
};

// Minibatch in network coordinates: signed phases in [-pi, pi), one column
// per sample.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;

  Eigen::Index size() const { return rewards.size(); }
};

Batch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& rows, int bits);

struct StepReport {
  std::int64_t step = 0;
  BeamVector action;
  double power = 0.0;
  int reward = 0;
  double loss_q1 = 0.0;
  double loss_q2 = 0.0;
  double explore_var = 0.0;
  bool updated = false;
};

using PowerMeter = std::function<double(const BeamVector&)>;

// Learning agent for one sub-array module: actor, twin critics (one in DDPG
// mode), their targets, replay memory and random streams.
class Agent {
 public:
  Agent(int dims, PhaseCodebook codebook, TD3Hyper hyper, Variant variant, std::uint64_t master_seed,
        std::uint64_t module_index);

  int dims() const { return dims_; }
  Variant variant() const { return variant_; }
  const TD3Hyper& hyper() const { return hyper_; }
  const PhaseCodebook& codebook() const { return codebook_; }
  int critic_count() const { return variant_ == Variant::TD3 ? 2 : 1; }

  const BeamVector& state() const { return state_; }
  void set_state(const BeamVector& s);

  double explore_variance(std::int64_t step) const;
  double target_variance(std::int64_t update) const;

  // Actor output plus clipped exploration noise (noise skipped when var == 0).
  Eigen::VectorXd noisy_action(std::int64_t step);

  // min_i Q_i(state, candidate) for every candidate (Q_1 alone in DDPG mode).
  Eigen::VectorXd score_candidates(const BeamVector& state, const std::vector<BeamVector>& candidates);

  // Quantize the noisy actor output, gather knn_k lattice neighbors, return
  // the best-scoring candidate. The plain quantized action is candidate 0.
  BeamVector select_action(std::int64_t step);

  Eigen::VectorXd td_target(const Batch& batch);
  std::array<double, 2> critic_update(const Batch& batch, const Eigen::VectorXd& y);
  double actor_update(const Batch& batch);
  void update_targets();

  StepReport train_step(const PowerMeter& measure, std::int64_t step);

  nn::Net& actor() { return actor_; }
  const nn::Net& actor() const { return actor_; }
  nn::Net& critic(int i) { return critics_.at(static_cast<std::size_t>(i)); }
  const nn::Net& critic(int i) const { return critics_.at(static_cast<std::size_t>(i)); }
  const nn::Net& target_actor() const { return target_actor_; }
  nn::Net& target_critic(int i) { return target_critics_.at(static_cast<std::size_t>(i)); }
  const nn::Net& target_critic(int i) const { return target_critics_.at(static_cast<std::size_t>(i)); }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::int64_t updates() const { return updates_; }
  // Forward evaluations per online critic, for instrumentation.
  const std::array<std::uint64_t, 2>& critic_evaluations() const { return critic_evals_; }

  // Binary snapshot of networks, optimizers, random streams and counters;
  // the replay memory is included only when `with_buffer` is set.
  void save(std::ostream& os, bool with_buffer) const;
  void load(std::istream& is);

  // Gradient of the sampled objective (1/K) sum_k min_i Q_i(s_k, pi(s_k))
  // with respect to the actor parameters.
  Eigen::VectorXd actor_objective_gradient(const Batch& batch, double* objective = nullptr);
  double actor_objective(const Batch& batch);

 private:
  Eigen::MatrixXd critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;
  Eigen::VectorXd state_phases(const BeamVector& b) const;

  int dims_;
  PhaseCodebook codebook_;
  TD3Hyper hyper_;
  Variant variant_;
  SeedStreams rng_;

  nn::Net actor_;
  nn::Net target_actor_;
  std::vector<nn::Net> critics_;
  std::vector<nn::Net> target_critics_;
  nn::Optimizer actor_opt_;
  std::vector<nn::Optimizer> critic_opts_;

  ReplayBuffer buffer_;
  BeamVector state_;
  std::optional<double> prev_power_;
  std::int64_t updates_ = 0;
  std::array<std::uint64_t, 2> critic_evals_{0, 0};
};

nn::Net make_actor(int dims, const TD3Hyper& hyper);
nn::Net make_critic(int dims, const TD3Hyper& hyper);

}  // namespace sbf
