#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dastack/matrix.hpp"
#include "dastack/rng.hpp"

namespace dastack {

enum class Domain { Source, Target };

const char* domain_name(Domain d);

/// A dataset: one row per example. `labels` is all-or-none; `groups` marks rows
/// that must stay together when splitting (empty means ungrouped).
struct LabeledSet {
  Matrix features;
  std::optional<std::vector<int>> labels;
  Domain domain = Domain::Source;
  std::vector<int> groups;

  std::size_t size() const { return features.rows(); }
};

void validate(const LabeledSet& s);

enum class Generator { Blobs, Moons };

/// Describes a synthetic source/target pair. The target domain applies a fixed
/// affine map (rotation about the origin, then translation) to samples drawn
/// from the source distribution, so class structure is preserved while the
/// marginals drift apart.
struct ShiftSpec {
  Generator generator = Generator::Blobs;
  std::size_t n_classes = 4;  ///< blobs only; moons is always binary
  std::size_t n_per_class = 100;
  double rotation_deg = 30.0;
  std::array<double, 2> translation{0.0, 0.0};
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
};

struct ShiftPair {
  LabeledSet source;
  LabeledSet target;
};

/// Generates both domains. Source and target draw from independent seed
/// streams, so the source set does not change when only the shift parameters
/// move. Both sets carry ground-truth labels and group ids.
ShiftPair generate_shift_pair(const ShiftSpec& spec);

/// Partitions rows 0..n-1 into consecutive groups of 2 to 4 rows (never 1,
/// except when n itself is 1). Returns a group id per row.
std::vector<int> assign_groups(std::size_t n, Rng& rng);

struct DataSplit {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
};

/// Splits a set into train/val/test by the given fractions (must sum to 1).
/// With `by_groups` set, whole groups land in a single part via a greedy
/// largest-deficit assignment; throws InfeasibleSplitError when some group is
/// bigger than the largest part could ever be.
DataSplit split(const LabeledSet& s, const std::array<double, 3>& fractions, bool by_groups,
                Rng& rng);

/// Copies the selected rows (with their labels and group ids) into a new set.
LabeledSet take(const LabeledSet& s, std::span<const std::size_t> idx);

/// CSV schema: header `f0,...,f{m-1},label,domain,group`; label is blank for
/// unlabeled rows, domain is `source` or `target` and must be uniform within a
/// file. Doubles are written in shortest round-trip form.
LabeledSet load_csv(const std::filesystem::path& path);
void save_csv(const std::filesystem::path& path, const LabeledSet& s);

}  // namespace dastack
