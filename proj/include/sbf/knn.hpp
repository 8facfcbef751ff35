#pragma once

#include "sbf/beamforming.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace sbf {

struct Neighbor {
  BeamVector beam;
  int level = 0;  // number of coordinates moved by one codebook step
};

struct NeighborList {
  std::vector<Neighbor> items;
  // Set when fewer than the requested k neighbors exist.
  bool exhausted = false;
  // Coordinate reads/writes spent building the list.
  std::uint64_t coord_ops = 0;

  std::size_t size() const { return items.size(); }
};

struct KnnOptions {
  // Allow steps from the top level to 0 and back. Off by default: index
  // steps past either end of the codebook are skipped.
  bool wrap = false;
};

// Lattice neighbors of `center`, emitted level by level (L = 1, 2, ...). A
// level-L neighbor differs from `center` in exactly L coordinates, each by
// one index step. Order inside a level is uniformly random under `seed`.
// Returns at most k vectors; sets `exhausted` when every level ran out first.
NeighborList knn(const BeamVector& center, int k, const PhaseCodebook& codebook,
                 std::uint64_t seed, const KnnOptions& options = {});

// Enumerates the whole {-1, 0, +1}^N' step cube around `center` (no wrap),
// grouped by level, each level in lexicographic order. Throws when the cube
// has more than 12 coordinates.
NeighborList knn_bruteforce(const BeamVector& center, int k, const PhaseCodebook& codebook);

using QScorer = std::function<double(const BeamVector&)>;

// Argmax of `scorer` over `candidates`; the first maximum wins.
std::size_t best_of_knn(const std::vector<BeamVector>& candidates, const QScorer& scorer);

}  // namespace sbf
