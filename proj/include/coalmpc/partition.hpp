#pragma once

// Set partitions of {0..M-1}, the refinement partial order, chain
// neighborhoods, and the pairwise same-block indicator. Partitions are kept
// in canonical form: blocks sorted internally and ordered by minimum element,
// which makes the restricted-growth string (and hence the key) unique.

#include <string>
#include <vector>

namespace coalmpc {

struct Partition {
  std::vector<std::vector<int>> blocks;

  Partition() = default;
  explicit Partition(std::vector<std::vector<int>> blks);

  static Partition decentralized(int M);
  static Partition centralized(int M);
  // Inverse of canonical_key for keys produced over the same M.
  static Partition from_key(const std::string& key);

  int num_elements() const;
  int num_blocks() const { return static_cast<int>(blocks.size()); }
  // Block index of element i (position in the canonical block list).
  int block_of(int i) const;

  bool operator==(const Partition& other) const { return blocks == other.blocks; }
};

// All of Pi_M in restricted-growth-string lexicographic order; count = Bell(M).
std::vector<Partition> enumerate_partitions(int M);

// True iff every block of D is contained in some block of C (D refines C).
bool refines(const Partition& D, const Partition& C);

// {D : D comparable to C and | |D| - |C| | <= delta} together with C itself.
std::vector<Partition> delta_neighborhood(const Partition& C, int delta);

// 0 iff i and j share a block; symmetric.
int delta_indicator(const Partition& C, int i, int j);

// Restricted-growth string, one character per element ('0'-'9', then 'a'...).
// Lexicographic comparison of keys is a strict total order on Pi_M.
std::string canonical_key(const Partition& C);

// Number of unordered element pairs sharing a block; the size measure behind
// the reported link-power cost.
int in_block_pairs(const Partition& C);

// Cover relations of the refinement order as (finer_key, coarser_key) pairs,
// i.e. D covered by C when D refines C and |D| = |C| + 1.
std::vector<std::pair<std::string, std::string>> hasse_edges(int M);

}  // namespace coalmpc
