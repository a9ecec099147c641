#include "coalmpc/partition.hpp"

#include <algorithm>
#include <stdexcept>

namespace coalmpc {

namespace {

void canonicalize(std::vector<std::vector<int>>& blocks) {
  for (auto& b : blocks) {
    if (b.empty()) throw std::invalid_argument("Partition: empty block.");
    std::sort(b.begin(), b.end());
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) {
              return a.front() < b.front();
            });
}

}  // namespace

Partition::Partition(std::vector<std::vector<int>> blks) : blocks(std::move(blks)) {
  canonicalize(blocks);
  // Validate: disjoint cover of {0..M-1}.
  std::vector<int> seen;
  for (const auto& b : blocks) seen.insert(seen.end(), b.begin(), b.end());
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < static_cast<int>(seen.size()); ++i) {
    if (seen[i] != i) {
      throw std::invalid_argument("Partition: blocks must disjointly cover {0..M-1}.");
    }
  }
}

Partition Partition::decentralized(int M) {
  if (M < 1) throw std::invalid_argument("Partition: need at least one element.");
  std::vector<std::vector<int>> blks;
  for (int i = 0; i < M; ++i) blks.push_back({i});
  return Partition(std::move(blks));
}

Partition Partition::centralized(int M) {
  if (M < 1) throw std::invalid_argument("Partition: need at least one element.");
  std::vector<int> all(M);
  for (int i = 0; i < M; ++i) all[i] = i;
  return Partition({all});
}

Partition Partition::from_key(const std::string& key) {
  if (key.empty()) throw std::invalid_argument("Partition: empty key.");
  std::vector<std::vector<int>> blks;
  for (int i = 0; i < static_cast<int>(key.size()); ++i) {
    const char c = key[i];
    int b;
    if (c >= '0' && c <= '9') b = c - '0';
    else if (c >= 'a' && c <= 'z') b = 10 + (c - 'a');
    else throw std::invalid_argument("Partition: invalid key character.");
    if (b > static_cast<int>(blks.size())) {
      throw std::invalid_argument("Partition: key is not a restricted-growth string.");
    }
    if (b == static_cast<int>(blks.size())) blks.emplace_back();
    blks[b].push_back(i);
  }
  return Partition(std::move(blks));
}

int Partition::num_elements() const {
  int n = 0;
  for (const auto& b : blocks) n += static_cast<int>(b.size());
  return n;
}

int Partition::block_of(int i) const {
  for (int b = 0; b < num_blocks(); ++b) {
    if (std::binary_search(blocks[b].begin(), blocks[b].end(), i)) return b;
  }
  throw std::out_of_range("Partition: element out of range.");
}

std::vector<Partition> enumerate_partitions(int M) {
  if (M < 1 || M > 12) {
    throw std::invalid_argument("enumerate_partitions: M must be in [1,12].");
  }
  // Generate restricted-growth strings a[0..M-1] in lexicographic order:
  // a[0] = 0 and a[i] <= 1 + max(a[0..i-1]).
  std::vector<Partition> out;
  std::vector<int> a(M, 0);
  std::vector<int> maxima(M, 0);  // maxima[i] = max(a[0..i])
  auto emit = [&]() {
    const int nb = maxima[M - 1] + 1;
    std::vector<std::vector<int>> blks(nb);
    for (int i = 0; i < M; ++i) blks[a[i]].push_back(i);
    out.emplace_back(std::move(blks));
  };
  // Iterative successor walk over the RGS family.
  while (true) {
    for (int i = 1; i < M; ++i) maxima[i] = std::max(maxima[i - 1], a[i]);
    emit();
    int i = M - 1;
    while (i > 0 && a[i] == maxima[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    for (int j = i + 1; j < M; ++j) a[j] = 0;
  }
  return out;
}

bool refines(const Partition& D, const Partition& C) {
  const int M = D.num_elements();
  if (M != C.num_elements()) {
    throw std::invalid_argument("refines: partitions must cover the same set.");
  }
  // D refines C iff elements sharing a D-block always share a C-block.
  std::vector<int> cblock(M);
  for (int i = 0; i < M; ++i) cblock[i] = C.block_of(i);
  for (const auto& b : D.blocks) {
    for (int i : b) {
      if (cblock[i] != cblock[b.front()]) return false;
    }
  }
  return true;
}

std::vector<Partition> delta_neighborhood(const Partition& C, int delta) {
  if (delta < 0) throw std::invalid_argument("delta_neighborhood: delta must be >= 0.");
  const int M = C.num_elements();
  std::vector<Partition> out;
  for (const auto& D : enumerate_partitions(M)) {
    const bool comparable = refines(D, C) || refines(C, D);
    const int diff = std::abs(D.num_blocks() - C.num_blocks());
    if ((comparable && diff <= delta) || D == C) out.push_back(D);
  }
  return out;
}

int delta_indicator(const Partition& C, int i, int j) {
  const int M = C.num_elements();
  if (i < 0 || j < 0 || i >= M || j >= M) {
    throw std::invalid_argument("delta_indicator: indices out of range.");
  }
  return C.block_of(i) == C.block_of(j) ? 0 : 1;
}

std::string canonical_key(const Partition& C) {
  const int M = C.num_elements();
  std::string key(M, '?');
  for (int i = 0; i < M; ++i) {
    const int b = C.block_of(i);
    key[i] = b < 10 ? static_cast<char>('0' + b) : static_cast<char>('a' + (b - 10));
  }
  return key;
}

std::vector<std::pair<std::string, std::string>> hasse_edges(int M) {
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& D : enumerate_partitions(M)) {
    // Covers of D are exactly the merges of two of its blocks.
    for (int p = 0; p < D.num_blocks(); ++p) {
      for (int q = p + 1; q < D.num_blocks(); ++q) {
        std::vector<std::vector<int>> blks;
        std::vector<int> merged = D.blocks[p];
        merged.insert(merged.end(), D.blocks[q].begin(), D.blocks[q].end());
        blks.push_back(std::move(merged));
        for (int r = 0; r < D.num_blocks(); ++r) {
          if (r != p && r != q) blks.push_back(D.blocks[r]);
        }
        edges.emplace_back(canonical_key(D), canonical_key(Partition(std::move(blks))));
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

int in_block_pairs(const Partition& C) {
  int pairs = 0;
  for (const auto& block : C.blocks) {
    const int s = static_cast<int>(block.size());
    pairs += s * (s - 1) / 2;
  }
  return pairs;
}

}  // namespace coalmpc
