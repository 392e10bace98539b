#include "ifial/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ifial/errors.hpp"
#include "ifial/rng.hpp"

namespace ifial {

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::none: return "none";
    case Mechanism::mcar: return "mcar";
    case Mechanism::mnar: return "mnar";
  }
  return "?";
}

Mechanism parse_mechanism(const std::string& s) {
  if (s == "none") return Mechanism::none;
  if (s == "mcar") return Mechanism::mcar;
  if (s == "mnar") return Mechanism::mnar;
  throw ConfigError("unknown mechanism '" + s + "' (expected none|mcar|mnar)");
}

namespace {

// rows of a feature ranked by descending value, ties shuffled by rng
std::vector<int> upper_tail_order(const Dataset& data, int f, Rng& rng) {
  const int n = data.n();
  std::vector<std::uint64_t> tie(n);
  for (auto& t : tie) t = rng.next_u64();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = data.cell(a, f).num;
    const double vb = data.cell(b, f).num;
    if (va != vb) return va > vb;
    if (tie[a] != tie[b]) return tie[a] < tie[b];
    return a < b;
  });
  return order;
}

}  // namespace

Dataset inject(const Dataset& data, const MissingSpec& spec) {
  if (!(spec.rate > 0.0 && spec.rate < 1.0))
    throw ConfigError("missing rate must lie strictly in (0,1), got " + std::to_string(spec.rate));
  if (spec.mechanism == Mechanism::none) return data;

  std::vector<int> targets = spec.target_features;
  if (targets.empty()) {
    targets.resize(data.d());
    std::iota(targets.begin(), targets.end(), 0);
  }
  for (int f : targets) {
    if (f < 0 || f >= data.d()) throw ConfigError("target feature index out of range: " + std::to_string(f));
    for (int r = 0; r < data.n(); ++r) {
      if (data.cell(r, f).is_missing())
        throw DataError("feature '" + data.feature(f).name + "' already has missing cells; refusing to inject");
    }
  }

  const int n = data.n();
  const long quota = std::lround(spec.rate * n);  // exact-count masking, not Bernoulli

  auto cells = data.feature_cells();
  for (int f : targets) {
    if (quota == 0) continue;
    Rng rng(mix_seed(spec.seed, mechanism_name(spec.mechanism), static_cast<std::uint64_t>(f)));
    std::vector<int> victims;
    if (spec.mechanism == Mechanism::mcar) {
      // partial Fisher-Yates draw of `quota` distinct rows; value-blind
      std::vector<int> pool(n);
      std::iota(pool.begin(), pool.end(), 0);
      for (long i = 0; i < quota; ++i) {
        const auto j = i + static_cast<long>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[i], pool[j]);
        victims.push_back(pool[i]);
      }
    } else if (data.feature(f).kind == FeatureKind::numerical) {
      auto order = upper_tail_order(data, f, rng);
      victims.assign(order.begin(), order.begin() + quota);
    } else {
      // categorical: most frequent category first, overflow downward
      const int ncat = static_cast<int>(data.feature(f).categories.size());
      std::vector<std::vector<int>> by_cat(ncat);
      for (int r = 0; r < n; ++r) by_cat[data.cell(r, f).cat].push_back(r);
      std::vector<int> cat_order(ncat);
      std::iota(cat_order.begin(), cat_order.end(), 0);
      std::sort(cat_order.begin(), cat_order.end(), [&](int a, int b) {
        if (by_cat[a].size() != by_cat[b].size()) return by_cat[a].size() > by_cat[b].size();
        return a < b;
      });
      for (int c : cat_order) {
        if (static_cast<long>(victims.size()) >= quota) break;
        auto rows = by_cat[c];
        rng.shuffle(rows);
        for (int r : rows) {
          if (static_cast<long>(victims.size()) >= quota) break;
          victims.push_back(r);
        }
      }
    }
    for (int r : victims) cells[f][r] = Cell::make_missing();
  }
  return Dataset(data.columns(), std::move(cells), data.labels());
}

}  // namespace ifial
