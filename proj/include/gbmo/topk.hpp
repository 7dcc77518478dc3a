#pragma once

#include <algorithm>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace gbmo {

/// Indices of the k largest values, returned in ascending index order.
/// Equal values prefer the lower index. Keeps a size-k heap whose top is the
/// weakest retained entry, so the cost is O(d log k).
inline std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  using Entry = std::pair<double, std::size_t>;
  auto better = [](const Entry& a, const Entry& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
  k = std::min(k, values.size());
  if (k == 0) return {};
  for (std::size_t j = 0; j < values.size(); ++j) {
    Entry e{values[j], j};
    if (heap.size() < k) {
      heap.push(e);
    } else if (better(e, heap.top())) {
      heap.pop();
      heap.push(e);
    }
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  while (!heap.empty()) {
    out.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gbmo
