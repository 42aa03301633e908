#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdsurv/errors.hpp"
#include "hdsurv/evaluation.hpp"

namespace hdsurv {
namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks < i.
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace

ConcordanceCounts concordance_counts(std::span<const double> scores, std::span<const double> time,
                                     std::span<const int> event) {
  const auto n = scores.size();
  if (time.size() != n || event.size() != n) throw ValidationError("c_index: input lengths differ");

  // Dense ranks of the scores.
  std::vector<double> distinct(scores.begin(), scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), scores[i]) - distinct.begin());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });

  ConcordanceCounts counts;
  Fenwick later(distinct.size());
  std::int64_t inserted = 0;
  std::vector<double> censored_scores;
  for (std::size_t pos = 0; pos < n;) {
    std::size_t end = pos;
    while (end < n && time[order[end]] == time[order[pos]]) ++end;

    censored_scores.clear();
    for (std::size_t k = pos; k < end; ++k) {
      if (!event[order[k]]) censored_scores.push_back(scores[order[k]]);
    }
    std::sort(censored_scores.begin(), censored_scores.end());

    for (std::size_t k = pos; k < end; ++k) {
      const auto i = order[k];
      if (!event[i]) continue;
      // Subjects with strictly later observed times.
      const auto below = later.prefix(rank[i]);
      const auto equal = later.prefix(rank[i] + 1) - below;
      counts.comparable += inserted;
      counts.concordant_halves += 2 * below + equal;
      // Censored subjects tied with this event time.
      const auto lo = std::lower_bound(censored_scores.begin(), censored_scores.end(), scores[i]);
      const auto hi = std::upper_bound(censored_scores.begin(), censored_scores.end(), scores[i]);
      counts.comparable += static_cast<std::int64_t>(censored_scores.size());
      counts.concordant_halves += 2 * (lo - censored_scores.begin()) + (hi - lo);
    }
    for (std::size_t k = pos; k < end; ++k) {
      later.add(rank[order[k]]);
      ++inserted;
    }
    pos = end;
  }
  return counts;
}

double c_index(std::span<const double> scores, std::span<const double> time, std::span<const int> event) {
  const auto counts = concordance_counts(scores, time, event);
  if (counts.comparable == 0) throw NumericalError("C-index undefined: no comparable pairs");
  return counts.value();
}

double c_index(std::span<const double> scores, std::span<const SurvivalRecord> records) {
  std::vector<double> time(records.size());
  std::vector<int> event(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    time[i] = records[i].observed_time;
    event[i] = records[i].event ? 1 : 0;
  }
  return c_index(scores, time, event);
}

CorrelationResult pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("correlation inputs have different lengths");
  if (a.size() < 2) throw ValidationError("correlation needs at least two observations");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  CorrelationResult r;
  const bool a_constant = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
  const bool b_constant = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
  if (a_constant || b_constant || saa == 0.0 || sbb == 0.0) {
    r.undefined_reason = a_constant || saa == 0.0 ? "first input has zero variance" : "second input has zero variance";
    return r;
  }
  r.value = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return r;
}

}  // namespace hdsurv
