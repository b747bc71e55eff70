#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace coreset {

// Sparse nonnegative weight vector over data indices. Entries are kept sorted
// by index; zero-valued entries may be stored but do not count as support.
class CoresetWeights {
 public:
  using Entry = std::pair<int, double>;

  CoresetWeights(int n_total, std::vector<Entry> entries)
      : n_total_(n_total), entries_(std::move(entries)) {
    if (n_total_ < 0) throw std::invalid_argument("CoresetWeights: n_total < 0");
    std::sort(entries_.begin(), entries_.end());
    int prev = -1;
    sum_ = 0.0;
    for (const auto& [idx, w] : entries_) {
      if (idx < 0 || idx >= n_total_)
        throw std::invalid_argument("CoresetWeights: index out of range");
      if (idx == prev)
        throw std::invalid_argument("CoresetWeights: duplicate index");
      if (!(w >= 0.0) || !std::isfinite(w))
        throw std::invalid_argument("CoresetWeights: weight must be finite and >= 0");
      prev = idx;
      sum_ += w;
    }
  }

  static CoresetWeights ones(int n) {
    std::vector<Entry> e(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) e[static_cast<std::size_t>(i)] = {i, 1.0};
    return CoresetWeights(n, std::move(e));
  }

  static CoresetWeights zeros(int n) { return CoresetWeights(n, {}); }

  static CoresetWeights from_dense(std::span<const double> w) {
    std::vector<Entry> e;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] != 0.0) e.emplace_back(static_cast<int>(i), w[i]);
    return CoresetWeights(static_cast<int>(w.size()), std::move(e));
  }

  int n_total() const { return n_total_; }
  std::span<const Entry> entries() const { return entries_; }
  double sum() const { return sum_; }

  int support_size() const {
    int s = 0;
    for (const auto& [idx, w] : entries_) s += (w > 0.0);
    return s;
  }

  std::vector<int> support() const {
    std::vector<int> s;
    for (const auto& [idx, w] : entries_)
      if (w > 0.0) s.push_back(idx);
    return s;
  }

  double weight(int n) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), n,
                               [](const Entry& e, int k) { return e.first < k; });
    return (it != entries_.end() && it->first == n) ? it->second : 0.0;
  }

  std::vector<double> dense() const {
    std::vector<double> w(static_cast<std::size_t>(n_total_), 0.0);
    for (const auto& [idx, v] : entries_) w[static_cast<std::size_t>(idx)] = v;
    return w;
  }

  CoresetWeights scaled(double alpha) const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw std::invalid_argument("CoresetWeights::scaled: alpha must be finite and >= 0");
    std::vector<Entry> e = entries_;
    for (auto& [idx, w] : e) w *= alpha;
    return CoresetWeights(n_total_, std::move(e));
  }

  void write_csv(std::ostream& os) const {
    os << "index,weight\n";
    char buf[64];
    for (const auto& [idx, w] : entries_) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g\n", idx, w);
      os << buf;
    }
  }

 private:
  int n_total_;
  std::vector<Entry> entries_;
  double sum_;
};

}  // namespace coreset
