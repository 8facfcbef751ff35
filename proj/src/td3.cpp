#include "sbf/td3.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace sbf {

const char* to_string(Variant v) { return v == Variant::TD3 ? "td3" : "ddpg"; }

Variant variant_from_string(const std::string& name) {
  if (name == "td3") return Variant::TD3;
  if (name == "ddpg") return Variant::DDPG;
  throw std::invalid_argument("unknown variant '" + name + "' (td3|ddpg)");
}

void TD3Hyper::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("agent.gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("agent.tau must lie in (0, 1]");
  if (batch_size < 1) throw std::invalid_argument("agent.batch_size must be >= 1");
  if (actor_period < 1 || target_period <= actor_period)
    throw std::invalid_argument("agent periods need target_period > actor_period >= 1");
  if (explore_var < 0 || explore_min < 0 || target_var < 0 || target_min < 0 ||
      explore_decay < 0 || target_decay < 0)
    throw std::invalid_argument("agent noise variances and decays must be non-negative");
  if (!(action_hi > action_lo)) throw std::invalid_argument("agent action bounds need hi > lo");
  if (knn_k < 0) throw std::invalid_argument("agent.knn_k must be >= 0");
  if (buffer_capacity < batch_size)
    throw std::invalid_argument("agent.buffer_capacity must be >= batch_size");
  if (!(actor_lr > 0) || !(critic_lr > 0)) throw std::invalid_argument("learning rates must be positive");
  if (actor_width < 1 || critic_width < 2) throw std::invalid_argument("network widths too small");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Experience e) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(e));
  } else {
    data_[next_] = std::move(e);
  }
  next_ = (next_ + 1) % capacity_;
}

void ReplayBuffer::set_cursor(std::size_t next) {
  if (next >= capacity_ || (data_.size() < capacity_ && next != data_.size()))
    throw std::invalid_argument("ReplayBuffer: cursor out of range");
  next_ = next;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t k, std::mt19937_64& rng) const {
  if (data_.size() < k) throw std::logic_error("ReplayBuffer: not enough experiences to sample");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> rows(k);
  for (auto& r : rows) r = pick(rng);
  return rows;
}

Batch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& rows, int bits) {
  const PhaseCodebook codebook(bits);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index dims = buffer[rows.at(0)].state.size();
  Batch b{Eigen::MatrixXd(dims, n), Eigen::MatrixXd(dims, n), Eigen::VectorXd(n),
          Eigen::MatrixXd(dims, n)};
  auto phase = [&](int k) { return codebook.signed_phase(k); };
  for (Eigen::Index c = 0; c < n; ++c) {
    const Experience& e = buffer[rows[static_cast<std::size_t>(c)]];
    b.states.col(c) = e.state.unaryExpr(phase);
    b.actions.col(c) = e.action.unaryExpr(phase);
    b.next_states.col(c) = e.next_state.unaryExpr(phase);
    b.rewards[c] = e.reward;
  }
  return b;
}

nn::Net make_actor(int dims, const TD3Hyper& h) {
  nn::Net net(dims);
  net.normalize(-std::numbers::pi, std::numbers::pi)
      .dense(h.actor_width * dims)
      .relu()
      .dense(h.actor_width * dims)
      .relu()
      .dense(dims)
      .tanh()
      .scale(h.action_lo, h.action_hi);
  return net;
}

nn::Net make_critic(int dims, const TD3Hyper& h) {
  nn::Net net(2 * dims);
  net.normalize(-std::numbers::pi, std::numbers::pi)
      .dense(h.critic_width * dims)
      .relu()
      .dense(h.critic_width / 2 * dims)
      .tanh()
      .dense(1);
  return net;
}

Agent::Agent(int dims, PhaseCodebook codebook, TD3Hyper hyper, Variant variant,
             std::uint64_t master_seed, std::uint64_t module_index)
    : dims_(dims),
      codebook_(codebook),
      hyper_(hyper),
      variant_(variant),
      rng_(SeedStreams::for_module(master_seed, module_index)),
      buffer_(static_cast<std::size_t>(hyper.buffer_capacity)) {
  if (dims < 1) throw std::invalid_argument("Agent: dims must be >= 1");
  hyper_.validate();
  if (variant_ == Variant::DDPG) {
    hyper_.actor_period = 1;
    hyper_.target_period = 1;
  }

  actor_ = make_actor(dims, hyper_);
  actor_.initialize(rng_.actor_init, 1e-3);
  target_actor_ = actor_;
  actor_opt_ = nn::Optimizer(actor_.param_count(), hyper_.actor_lr);

  for (int i = 0; i < critic_count(); ++i) {
    nn::Net c = make_critic(dims, hyper_);
    c.initialize(rng_.critic_init);
    critic_opts_.emplace_back(c.param_count(), hyper_.critic_lr);
    target_critics_.push_back(c);
    critics_.push_back(std::move(c));
  }

  std::uniform_int_distribution<int> level(0, codebook_.levels() - 1);
  state_ = BeamVector(codebook_.bits, Eigen::VectorXi(dims));
  for (Eigen::Index i = 0; i < dims; ++i) state_.indices[i] = level(rng_.initial_state);
}

void Agent::set_state(const BeamVector& s) {
  if (s.size() != dims_ || s.bits != codebook_.bits) throw std::invalid_argument("set_state: shape");
  state_ = s;
  prev_power_.reset();
}

double Agent::explore_variance(std::int64_t step) const {
  return std::max(hyper_.explore_var - hyper_.explore_decay * static_cast<double>(step),
                  hyper_.explore_min);
}

double Agent::target_variance(std::int64_t update) const {
  return std::max(hyper_.target_var - hyper_.target_decay * static_cast<double>(update),
                  hyper_.target_min);
}

Eigen::VectorXd Agent::state_phases(const BeamVector& b) const {
  return b.indices.unaryExpr([this](int k) { return codebook_.signed_phase(k); });
}

Eigen::MatrixXd Agent::critic_input(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
  Eigen::MatrixXd x(2 * dims_, states.cols());
  x.topRows(dims_) = states;
  x.bottomRows(dims_) = actions;
  return x;
}

Eigen::VectorXd Agent::noisy_action(std::int64_t step) {
  Eigen::VectorXd a = actor_.forward(Eigen::VectorXd(state_phases(state_)));
  const double var = explore_variance(step);
  if (var > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(var));
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(rng_.exploration);
  }
  return a.cwiseMax(hyper_.action_lo).cwiseMin(hyper_.action_hi);
}

Eigen::VectorXd Agent::score_candidates(const BeamVector& state,
                                        const std::vector<BeamVector>& candidates) {
  const auto n = static_cast<Eigen::Index>(candidates.size());
  Eigen::MatrixXd states = state_phases(state).replicate(1, n);
  Eigen::MatrixXd actions(dims_, n);
  for (Eigen::Index c = 0; c < n; ++c) actions.col(c) = state_phases(candidates[static_cast<std::size_t>(c)]);
  const Eigen::MatrixXd x = critic_input(states, actions);
  Eigen::VectorXd q = critics_[0].forward(x).row(0).transpose();
  ++critic_evals_[0];
  if (critic_count() == 2) {
    q = q.cwiseMin(critics_[1].forward(x).row(0).transpose());
    ++critic_evals_[1];
  }
  return q;
}

BeamVector Agent::select_action(std::int64_t step) {
  const BeamVector quantized = quantize_phases(noisy_action(step), codebook_);
  std::vector<BeamVector> candidates{quantized};
  if (hyper_.knn_k > 0) {
    const NeighborList nb = knn(quantized, hyper_.knn_k, codebook_, rng_.knn(), {hyper_.knn_wrap});
    for (const Neighbor& n : nb.items) candidates.push_back(n.beam);
  }
  if (candidates.size() == 1) return quantized;
  const Eigen::VectorXd q = score_candidates(state_, candidates);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = i;
  return candidates[static_cast<std::size_t>(best)];
}

Eigen::VectorXd Agent::td_target(const Batch& batch) {
  Eigen::MatrixXd next_actions = target_actor_.forward(batch.next_states);
  if (variant_ == Variant::TD3) {
    const double var = target_variance(updates_);
    if (var > 0.0) {
      std::normal_distribution<double> noise(0.0, std::sqrt(var));
      for (Eigen::Index i = 0; i < next_actions.size(); ++i)
        next_actions.data()[i] += noise(rng_.target_noise);
    }
    next_actions = next_actions.cwiseMax(hyper_.action_lo).cwiseMin(hyper_.action_hi);
  }
  const Eigen::MatrixXd x = critic_input(batch.next_states, next_actions);
  Eigen::VectorXd q = target_critics_[0].forward(x).row(0).transpose();
  if (critic_count() == 2) q = q.cwiseMin(target_critics_[1].forward(x).row(0).transpose());
  return batch.rewards + hyper_.gamma * q;
}

std::array<double, 2> Agent::critic_update(const Batch& batch, const Eigen::VectorXd& y) {
  if (y.size() != batch.size()) throw std::invalid_argument("critic_update: target size mismatch");
  const Eigen::MatrixXd x = critic_input(batch.states, batch.actions);
  const double k = static_cast<double>(batch.size());
  std::array<double, 2> losses{0.0, 0.0};
  for (int i = 0; i < critic_count(); ++i) {
    nn::Net::Tape tape;
    const Eigen::VectorXd q = critics_[static_cast<std::size_t>(i)].forward(x, tape).row(0).transpose();
    ++critic_evals_[static_cast<std::size_t>(i)];
    const Eigen::VectorXd diff = q - y;
    const double loss = diff.squaredNorm() / k;
    if (!std::isfinite(loss)) throw std::domain_error("critic_update: non-finite loss");
    losses[static_cast<std::size_t>(i)] = loss;
    Eigen::VectorXd grad;
    critics_[static_cast<std::size_t>(i)].backward(tape, (2.0 / k) * diff.transpose(), grad);
    critic_opts_[static_cast<std::size_t>(i)].step(critics_[static_cast<std::size_t>(i)].params(), grad);
  }
  return losses;
}

Eigen::VectorXd Agent::actor_objective_gradient(const Batch& batch, double* objective) {
  nn::Net::Tape actor_tape;
  const Eigen::MatrixXd actions = actor_.forward(batch.states, actor_tape);
  const Eigen::MatrixXd x = critic_input(batch.states, actions);
  const Eigen::Index n = batch.size();
  const double k = static_cast<double>(n);

  std::vector<nn::Net::Tape> tapes(static_cast<std::size_t>(critic_count()));
  Eigen::MatrixXd q(critic_count(), n);
  for (int i = 0; i < critic_count(); ++i) {
    q.row(i) = critics_[static_cast<std::size_t>(i)].forward(x, tapes[static_cast<std::size_t>(i)]);
    ++critic_evals_[static_cast<std::size_t>(i)];
  }

  // d/da of min_i Q_i flows through whichever critic is smaller per sample.
  Eigen::MatrixXd action_grad = Eigen::MatrixXd::Zero(dims_, n);
  double total = 0.0;
  for (int i = 0; i < critic_count(); ++i) {
    Eigen::RowVectorXd upstream = Eigen::RowVectorXd::Zero(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      Eigen::Index active = 0;
      q.col(c).minCoeff(&active);
      if (active == i) {
        upstream[c] = 1.0 / k;
        total += q(i, c);
      }
    }
    if (upstream.isZero()) continue;
    Eigen::VectorXd unused;
    Eigen::MatrixXd input_grad;
    critics_[static_cast<std::size_t>(i)].backward(tapes[static_cast<std::size_t>(i)], upstream,
                                                   unused, &input_grad);
    action_grad += input_grad.bottomRows(dims_);
  }
  if (objective) *objective = total / k;

  Eigen::VectorXd grad;
  actor_.backward(actor_tape, action_grad, grad);
  return grad;
}

double Agent::actor_objective(const Batch& batch) {
  const Eigen::MatrixXd actions = actor_.forward(batch.states);
  const Eigen::MatrixXd x = critic_input(batch.states, actions);
  Eigen::RowVectorXd q = critics_[0].forward(x);
  if (critic_count() == 2) q = q.cwiseMin(critics_[1].forward(x));
  return q.mean();
}

double Agent::actor_update(const Batch& batch) {
  double objective = 0.0;
  const Eigen::VectorXd grad = actor_objective_gradient(batch, &objective);
  // Ascent on the objective: hand the optimizer its negation.
  actor_opt_.step(actor_.params(), -grad);
  return objective;
}

void Agent::update_targets() {
  nn::soft_update(target_actor_, actor_, hyper_.tau);
  for (int i = 0; i < critic_count(); ++i)
    nn::soft_update(target_critics_[static_cast<std::size_t>(i)], critics_[static_cast<std::size_t>(i)],
                    hyper_.tau);
}

StepReport Agent::train_step(const PowerMeter& measure, std::int64_t step) {
  if (!prev_power_) prev_power_ = measure(state_);

  StepReport report;
  report.step = step;
  report.explore_var = explore_variance(step);
  report.action = select_action(step);
  report.power = measure(report.action);
  report.reward = compute_reward(report.power, *prev_power_);

  buffer_.push({state_.indices, report.action.indices, static_cast<double>(report.reward),
                report.action.indices});
  state_ = report.action;
  prev_power_ = report.power;

  const auto k = static_cast<std::size_t>(hyper_.batch_size);
  if (buffer_.size() >= k) {
    const Batch batch = make_batch(buffer_, buffer_.sample(k, rng_.minibatch), codebook_.bits);
    const Eigen::VectorXd y = td_target(batch);
    const auto losses = critic_update(batch, y);
    report.loss_q1 = losses[0];
    report.loss_q2 = losses[1];
    ++updates_;
    if (updates_ % hyper_.actor_period == 0) actor_update(batch);
    if (updates_ % hyper_.target_period == 0) update_targets();
    report.updated = true;
  }
  return report;
}

namespace {

constexpr char kAgentMagic[8] = {'S', 'B', 'F', 'A', 'G', 'T', '\0', '\0'};
constexpr std::uint32_t kAgentVersion = 1;

void put_indices(std::ostream& os, const Eigen::VectorXi& v) {
  nn::wire::put_u32(os, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) nn::wire::put_u32(os, static_cast<std::uint32_t>(v[i]));
}

Eigen::VectorXi get_indices(std::istream& is) {
  Eigen::VectorXi v(static_cast<Eigen::Index>(nn::wire::get_u32(is)));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<int>(nn::wire::get_u32(is));
  return v;
}

}  // namespace

void Agent::save(std::ostream& os, bool with_buffer) const {
  os.write(kAgentMagic, sizeof kAgentMagic);
  nn::wire::put_u32(os, kAgentVersion);
  nn::wire::put_u32(os, static_cast<std::uint32_t>(dims_));
  nn::wire::put_u32(os, static_cast<std::uint32_t>(codebook_.bits));
  nn::wire::put_u8(os, variant_ == Variant::TD3 ? 0 : 1);
  nn::save_checkpoint(os, actor_, &actor_opt_);
  nn::save_checkpoint(os, target_actor_);
  for (int i = 0; i < critic_count(); ++i) {
    nn::save_checkpoint(os, critics_[static_cast<std::size_t>(i)], &critic_opts_[static_cast<std::size_t>(i)]);
    nn::save_checkpoint(os, target_critics_[static_cast<std::size_t>(i)]);
  }
  const std::string streams = rng_.serialize();
  nn::wire::put_u64(os, streams.size());
  os.write(streams.data(), static_cast<std::streamsize>(streams.size()));
  put_indices(os, state_.indices);
  nn::wire::put_u8(os, prev_power_ ? 1 : 0);
  nn::wire::put_f64(os, prev_power_.value_or(0.0));
  nn::wire::put_u64(os, static_cast<std::uint64_t>(updates_));
  nn::wire::put_u8(os, with_buffer ? 1 : 0);
  if (with_buffer) {
    nn::wire::put_u64(os, buffer_.size());
    nn::wire::put_u64(os, buffer_.cursor());
    for (std::size_t i = 0; i < buffer_.size(); ++i) {
      put_indices(os, buffer_[i].state);
      put_indices(os, buffer_[i].action);
      nn::wire::put_f64(os, buffer_[i].reward);
      put_indices(os, buffer_[i].next_state);
    }
  }
  if (!os) throw std::runtime_error("agent checkpoint: write failed");
}

void Agent::load(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::string_view(magic, 8) != std::string_view(kAgentMagic, 8))
    throw std::runtime_error("agent checkpoint: bad magic");
  if (nn::wire::get_u32(is) != kAgentVersion) throw std::runtime_error("agent checkpoint: version");
  if (static_cast<int>(nn::wire::get_u32(is)) != dims_ ||
      static_cast<int>(nn::wire::get_u32(is)) != codebook_.bits ||
      (nn::wire::get_u8(is) == 0) != (variant_ == Variant::TD3))
    throw std::runtime_error("agent checkpoint: shape or variant mismatch");
  nn::load_checkpoint(is, actor_, &actor_opt_);
  nn::load_checkpoint(is, target_actor_);
  for (int i = 0; i < critic_count(); ++i) {
    nn::load_checkpoint(is, critics_[static_cast<std::size_t>(i)], &critic_opts_[static_cast<std::size_t>(i)]);
    nn::load_checkpoint(is, target_critics_[static_cast<std::size_t>(i)]);
  }
  std::string streams(nn::wire::get_u64(is), '\0');
  if (!is.read(streams.data(), static_cast<std::streamsize>(streams.size())))
    throw std::runtime_error("agent checkpoint: truncated");
  rng_.restore(streams);
  state_ = BeamVector(codebook_.bits, get_indices(is));
  const bool has_prev = nn::wire::get_u8(is) != 0;
  const double prev = nn::wire::get_f64(is);
  prev_power_ = has_prev ? std::optional<double>(prev) : std::nullopt;
  updates_ = static_cast<std::int64_t>(nn::wire::get_u64(is));
  if (nn::wire::get_u8(is) != 0) {
    buffer_ = ReplayBuffer(static_cast<std::size_t>(hyper_.buffer_capacity));
    const std::uint64_t n = nn::wire::get_u64(is);
    const std::uint64_t cursor = nn::wire::get_u64(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      Experience e;
      e.state = get_indices(is);
      e.action = get_indices(is);
      e.reward = nn::wire::get_f64(is);
      e.next_state = get_indices(is);
      buffer_.push(std::move(e));
    }
    buffer_.set_cursor(static_cast<std::size_t>(cursor));
  }
}

}  // namespace sbf
