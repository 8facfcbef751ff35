#include "sbf/seeding.hpp"

#include <sstream>
#include <stdexcept>

namespace sbf {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, StreamId component, std::uint64_t module) {
  return mix64(mix64(mix64(master) ^ static_cast<std::uint64_t>(component)) ^ module);
}

SeedStreams SeedStreams::for_module(std::uint64_t master, std::uint64_t module) {
  auto engine = [&](StreamId id) { return std::mt19937_64(derive_seed(master, id, module)); };
  return SeedStreams{engine(StreamId::ActorInit),   engine(StreamId::CriticInit),
                     engine(StreamId::Exploration), engine(StreamId::Knn),
                     engine(StreamId::Minibatch),   engine(StreamId::InitialState),
                     engine(StreamId::TargetNoise)};
}

std::string SeedStreams::serialize() const {
  std::ostringstream os;
  os << actor_init << '\n'
     << critic_init << '\n'
     << exploration << '\n'
     << knn << '\n'
     << minibatch << '\n'
     << initial_state << '\n'
     << target_noise << '\n';
  return os.str();
}

void SeedStreams::restore(const std::string& text) {
  std::istringstream is(text);
  is >> actor_init >> critic_init >> exploration >> knn >> minibatch >> initial_state >> target_noise;
  if (!is) throw std::runtime_error("SeedStreams::restore: malformed snapshot");
}

}  // namespace sbf
