#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sbf {

// Components that draw random numbers. The numeric values are part of the
// seed derivation and must not change.
enum class StreamId : std::uint64_t {
  ActorInit = 1,
  CriticInit = 2,
  Exploration = 3,
  Knn = 4,
  Minibatch = 5,
  InitialState = 6,
  TargetNoise = 7,
  Room = 8,
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// seed = mix(mix(mix(master) ^ component) ^ module): reproducible and
// decorrelated across components and modules.
std::uint64_t derive_seed(std::uint64_t master, StreamId component, std::uint64_t module);

// Independent engines for one agent.
struct SeedStreams {
  std::mt19937_64 actor_init;
  std::mt19937_64 critic_init;
  std::mt19937_64 exploration;
  std::mt19937_64 knn;
  std::mt19937_64 minibatch;
  std::mt19937_64 initial_state;
  std::mt19937_64 target_noise;

  static SeedStreams for_module(std::uint64_t master, std::uint64_t module);

  // Text snapshot of every engine state; restore() inverts it exactly.
  std::string serialize() const;
  void restore(const std::string& text);

  bool operator==(const SeedStreams&) const = default;
};

}  // namespace sbf
