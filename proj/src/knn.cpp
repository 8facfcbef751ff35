#include "sbf/knn.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

namespace sbf {

namespace {

using Diff = std::vector<std::pair<int, int>>;  // (coordinate, new index), sorted by coordinate

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return a > std::numeric_limits<std::uint64_t>::max() - b ? std::numeric_limits<std::uint64_t>::max()
                                                           : a + b;
}

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a == 0 || b == 0) return 0;
  return a > std::numeric_limits<std::uint64_t>::max() / b ? std::numeric_limits<std::uint64_t>::max()
                                                           : a * b;
}

// Elementary symmetric polynomials e_l(opts[i..]) as a table indexed [l][i],
// kept both exactly (saturating) and in floating point for sampling.
class LevelCounts {
 public:
  explicit LevelCounts(const std::vector<std::vector<int>>& targets, std::uint64_t& ops)
      : targets_(targets), ops_(ops) {
    const std::size_t n = targets.size();
    exact_.push_back(std::vector<std::uint64_t>(n + 1, 1));
    real_.push_back(std::vector<double>(n + 1, 1.0));
  }

  void extend_to(int level) {
    const std::size_t n = targets_.size();
    while (static_cast<int>(exact_.size()) <= level) {
      const std::size_t l = exact_.size();
      std::vector<std::uint64_t> ex(n + 1, 0);
      std::vector<double> re(n + 1, 0.0);
      for (std::size_t i = n; i-- > 0;) {
        const auto opts = static_cast<std::uint64_t>(targets_[i].size());
        ex[i] = sat_add(ex[i + 1], sat_mul(opts, exact_[l - 1][i + 1]));
        re[i] = re[i + 1] + static_cast<double>(opts) * real_[l - 1][i + 1];
        ++ops_;
      }
      exact_.push_back(std::move(ex));
      real_.push_back(std::move(re));
    }
  }

  std::uint64_t size(int level) const { return exact_[level][0]; }
  double real(int level, std::size_t from) const { return real_[level][from]; }

 private:
  const std::vector<std::vector<int>>& targets_;
  std::uint64_t& ops_;
  std::vector<std::vector<std::uint64_t>> exact_;
  std::vector<std::vector<double>> real_;
};

void enumerate_level(const std::vector<std::vector<int>>& targets, int level, std::size_t from,
                     Diff& current, std::vector<Diff>& out, std::uint64_t& ops) {
  if (static_cast<int>(current.size()) == level) {
    out.push_back(current);
    ops += current.size();
    return;
  }
  const std::size_t remaining = static_cast<std::size_t>(level) - current.size();
  for (std::size_t i = from; i + remaining <= targets.size(); ++i) {
    ++ops;
    for (int t : targets[i]) {
      current.emplace_back(static_cast<int>(i), t);
      enumerate_level(targets, level, i + 1, current, out, ops);
      current.pop_back();
    }
  }
}

Neighbor apply(const BeamVector& center, const Diff& diff, int level, std::uint64_t& ops) {
  Neighbor n{center, level};
  for (const auto& [coord, idx] : diff) n.beam.indices[coord] = idx;
  ops += static_cast<std::uint64_t>(center.size()) + diff.size();
  return n;
}

}  // namespace

NeighborList knn(const BeamVector& center, int k, const PhaseCodebook& codebook,
                 std::uint64_t seed, const KnnOptions& options) {
  if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
  if (center.size() < 1) throw std::invalid_argument("knn: empty beam vector");
  if (center.bits != codebook.bits) throw std::invalid_argument("knn: codebook mismatch");

  NeighborList out;
  const int levels = codebook.levels();
  const auto dims = static_cast<std::size_t>(center.size());

  std::vector<std::vector<int>> targets(dims);
  for (std::size_t i = 0; i < dims; ++i) {
    const int idx = center.indices[static_cast<Eigen::Index>(i)];
    if (idx < 0 || idx >= levels) throw std::out_of_range("knn: index outside the codebook");
    int up = idx + 1;
    int down = idx - 1;
    if (options.wrap) {
      up %= levels;
      down = (down + levels) % levels;
    }
    if (up < levels) targets[i].push_back(up);
    if (down >= 0 && down != up) targets[i].push_back(down);
    ++out.coord_ops;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LevelCounts counts(targets, out.coord_ops);

  std::size_t need = static_cast<std::size_t>(k);
  for (int level = 1; level <= static_cast<int>(dims) && need > 0; ++level) {
    counts.extend_to(level);
    const std::uint64_t size = counts.size(level);
    if (size == 0) continue;

    if (size <= 2 * static_cast<std::uint64_t>(need)) {
      // Small level: list it, shuffle, take a prefix.
      std::vector<Diff> members;
      members.reserve(static_cast<std::size_t>(size));
      Diff current;
      enumerate_level(targets, level, 0, current, members, out.coord_ops);
      for (std::size_t i = members.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(members[i - 1], members[pick(rng)]);
      }
      const std::size_t take = std::min(need, members.size());
      for (std::size_t i = 0; i < take; ++i)
        out.items.push_back(apply(center, members[i], level, out.coord_ops));
      need -= take;
      continue;
    }

    // Large level: draw members uniformly and reject repeats. Coordinate i
    // joins the subset with probability opts_i * e_{l-1}(rest) / e_l(here).
    std::set<Diff> seen;
    while (need > 0) {
      Diff diff;
      int left = level;
      for (std::size_t i = 0; i < dims && left > 0; ++i) {
        ++out.coord_ops;
        const double opts = static_cast<double>(targets[i].size());
        if (opts == 0.0) continue;
        const double p = opts * counts.real(left - 1, i + 1) / counts.real(left, i);
        if (unit(rng) < p) {
          std::uniform_int_distribution<std::size_t> dir(0, targets[i].size() - 1);
          diff.emplace_back(static_cast<int>(i), targets[i][dir(rng)]);
          --left;
        }
      }
      if (left != 0) continue;  // rounding at p ~ 1; redraw
      if (!seen.insert(diff).second) continue;
      out.items.push_back(apply(center, diff, level, out.coord_ops));
      --need;
    }
  }
  out.exhausted = need > 0;
  return out;
}

NeighborList knn_bruteforce(const BeamVector& center, int k, const PhaseCodebook& codebook) {
  if (k < 1) throw std::invalid_argument("knn_bruteforce: k must be >= 1");
  const auto dims = static_cast<int>(center.size());
  if (dims < 1 || dims > 12)  // 3^12 ~ 5e5 points
    throw std::invalid_argument("knn_bruteforce: instance too large to enumerate");

  const int levels = codebook.levels();
  std::vector<std::vector<Neighbor>> by_level(static_cast<std::size_t>(dims) + 1);
  std::vector<int> delta(static_cast<std::size_t>(dims), -1);
  NeighborList out;
  while (true) {
    bool valid = true;
    int changed = 0;
    BeamVector b = center;
    for (int i = 0; i < dims; ++i) {
      const int idx = center.indices[i] + delta[static_cast<std::size_t>(i)];
      if (idx < 0 || idx >= levels) valid = false;
      b.indices[i] = idx;
      changed += delta[static_cast<std::size_t>(i)] != 0;
      ++out.coord_ops;
    }
    if (valid && changed > 0) by_level[static_cast<std::size_t>(changed)].push_back({b, changed});

    int pos = dims - 1;
    while (pos >= 0 && delta[static_cast<std::size_t>(pos)] == 1) delta[static_cast<std::size_t>(pos--)] = -1;
    if (pos < 0) break;
    ++delta[static_cast<std::size_t>(pos)];
  }
  for (auto& level : by_level)
    for (auto& n : level) {
      if (static_cast<int>(out.items.size()) == k) break;
      out.items.push_back(std::move(n));
    }
  out.exhausted = static_cast<int>(out.items.size()) < k;
  return out;
}

std::size_t best_of_knn(const std::vector<BeamVector>& candidates, const QScorer& scorer) {
  if (candidates.empty()) throw std::invalid_argument("best_of_knn: no candidates");
  std::size_t best = 0;
  double best_q = scorer(candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double q = scorer(candidates[i]);
    if (q > best_q) {
      best_q = q;
      best = i;
    }
  }
  return best;
}

}  // namespace sbf
