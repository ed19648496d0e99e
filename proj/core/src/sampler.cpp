#include "patchdrop/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchdrop/ops.hpp"
#include "patchdrop/rng.hpp"

namespace patchdrop {

namespace {

// Guards against 3.0 evaluating as 2.9999999999999996 before floor/ceil.
constexpr double kGridEps = 1e-9;

std::size_t floor_count(double v) {
  return static_cast<std::size_t>(std::floor(v + kGridEps));
}

std::size_t ceil_count(double v) {
  return static_cast<std::size_t>(std::ceil(v - kGridEps));
}

void check_rate(double r) {
  if (!(r > 0.0) || r > 1.0) {
    throw InvalidRate("keep rate " + std::to_string(r) +
                      " outside (0, 1]");
  }
}

// m values evenly spread over [0, n) with fractional phase in [0, 1).
std::vector<std::size_t> spread_axis(std::size_t m, std::size_t n,
                                     double phase) {
  std::vector<std::size_t> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = static_cast<std::size_t>(
        std::floor((static_cast<double>(i) + phase) * static_cast<double>(n) /
                   static_cast<double>(m)));
  }
  return out;
}

// Drops excess entries at evenly spaced positions so exactly k remain.
void trim_evenly(std::vector<std::size_t>& cells, std::size_t k, Rng& rng) {
  const std::size_t m = cells.size();
  if (m <= k) return;
  const std::size_t excess = m - k;
  const double phase = rng.next_double();
  std::vector<bool> drop(m, false);
  for (std::size_t t = 0; t < excess; ++t) {
    std::size_t pos = static_cast<std::size_t>(
        std::floor((static_cast<double>(t) + phase) * static_cast<double>(m) /
                   static_cast<double>(excess)));
    while (drop[pos]) pos = (pos + 1) % m;  // phase collisions, rare
    drop[pos] = true;
  }
  std::vector<std::size_t> kept;
  kept.reserve(k);
  for (std::size_t i = 0; i < m; ++i) {
    if (!drop[i]) kept.push_back(cells[i]);
  }
  cells = std::move(kept);
}

std::vector<std::size_t> sample_without_replacement(std::size_t k,
                                                    std::size_t n, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> draw_random(std::size_t k, std::size_t n, Rng& rng) {
  return sample_without_replacement(k, n, rng);
}

std::vector<std::size_t> draw_uniform(std::size_t k, std::size_t rows,
                                      std::size_t cols, Rng& rng) {
  const std::size_t n = rows * cols;
  const double frac = std::sqrt(static_cast<double>(k) /
                                static_cast<double>(n));
  std::size_t kr = static_cast<std::size_t>(
      std::llround(frac * static_cast<double>(rows)));
  kr = std::clamp<std::size_t>(kr, 1, rows);
  std::size_t kc = ceil_count(static_cast<double>(k) / static_cast<double>(kr));
  if (kc > cols) {
    kc = cols;
    kr = ceil_count(static_cast<double>(k) / static_cast<double>(kc));
  }
  const double phase_r = rng.next_double();
  const double phase_c = rng.next_double();
  const auto row_sel = spread_axis(kr, rows, phase_r);
  const auto col_sel = spread_axis(kc, cols, phase_c);
  std::vector<std::size_t> cells;
  cells.reserve(kr * kc);
  for (std::size_t r : row_sel) {
    for (std::size_t c : col_sel) cells.push_back(r * cols + c);
  }
  trim_evenly(cells, k, rng);
  return cells;
}

std::vector<std::size_t> draw_structured(std::size_t k, std::size_t rows,
                                         std::size_t cols, double rate,
                                         Rng& rng) {
  std::size_t nr = ceil_count(std::sqrt(rate) * static_cast<double>(rows));
  nr = std::clamp<std::size_t>(nr, 1, rows);
  std::size_t nc = ceil_count(static_cast<double>(k) / static_cast<double>(nr));
  if (nc > cols) {
    nc = cols;
    nr = ceil_count(static_cast<double>(k) / static_cast<double>(nc));
  }
  auto row_sel = sample_without_replacement(nr, rows, rng);
  auto col_sel = sample_without_replacement(nc, cols, rng);
  std::sort(row_sel.begin(), row_sel.end());
  std::sort(col_sel.begin(), col_sel.end());
  std::vector<std::size_t> cells;
  cells.reserve(nr * nc);
  for (std::size_t r : row_sel) {
    for (std::size_t c : col_sel) cells.push_back(r * cols + c);
  }
  trim_evenly(cells, k, rng);
  return cells;
}

std::vector<std::size_t> draw_cropping(std::size_t k, std::size_t rows,
                                       std::size_t cols, Rng& rng) {
  // Near-square rectangle covering at least k cells.
  std::size_t a = static_cast<std::size_t>(std::llround(
      std::sqrt(static_cast<double>(k) * static_cast<double>(rows) /
                static_cast<double>(cols))));
  a = std::clamp<std::size_t>(a, 1, rows);
  std::size_t b = ceil_count(static_cast<double>(k) / static_cast<double>(a));
  if (b > cols) {
    b = cols;
    a = ceil_count(static_cast<double>(k) / static_cast<double>(b));
  }
  const std::size_t r0 = static_cast<std::size_t>(rng.next_below(rows - a + 1));
  const std::size_t c0 = static_cast<std::size_t>(rng.next_below(cols - b + 1));
  std::vector<std::size_t> cells;
  cells.reserve(a * b);
  for (std::size_t r = 0; r < a && cells.size() < k; ++r) {
    for (std::size_t c = 0; c < b && cells.size() < k; ++c) {
      cells.push_back((r0 + r) * cols + (c0 + c));
    }
  }
  return cells;
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kUniform: return "uniform";
    case Strategy::kStructured: return "structured";
    case Strategy::kCropping: return "cropping";
  }
  throw Error("unknown strategy");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "random") return Strategy::kRandom;
  if (name == "uniform") return Strategy::kUniform;
  if (name == "structured") return Strategy::kStructured;
  if (name == "cropping") return Strategy::kCropping;
  throw Error("unknown sampling strategy '" + name + "'");
}

SamplingSpec SamplingSpec::fixed(Strategy s, double rate, std::uint64_t seed,
                                 std::size_t grid_rows,
                                 std::size_t grid_cols) {
  SamplingSpec spec;
  spec.strategy = s;
  spec.keep_rate = rate;
  spec.seed = seed;
  spec.grid_rows = grid_rows;
  spec.grid_cols = grid_cols;
  spec.validate();
  return spec;
}

SamplingSpec SamplingSpec::interval(Strategy s, double lo, double hi,
                                    std::uint64_t seed, std::size_t grid_rows,
                                    std::size_t grid_cols) {
  SamplingSpec spec;
  spec.strategy = s;
  spec.rate_interval = {lo, hi};
  spec.seed = seed;
  spec.grid_rows = grid_rows;
  spec.grid_cols = grid_cols;
  spec.validate();
  return spec;
}

void SamplingSpec::validate() const {
  if (keep_rate.has_value() == rate_interval.has_value()) {
    throw Error("exactly one of keep_rate / rate_interval must be set");
  }
  if (keep_rate) check_rate(*keep_rate);
  if (rate_interval) {
    check_rate(rate_interval->first);
    check_rate(rate_interval->second);
    if (rate_interval->first > rate_interval->second) {
      throw InvalidRate("rate interval lower bound exceeds upper bound");
    }
  }
  if (grid_rows == 0 || grid_cols == 0) {
    throw Error("sampling grid must be non-empty");
  }
}

std::size_t kept_count(double rate, std::size_t n_patches) {
  check_rate(rate);
  const std::size_t k = floor_count(rate * static_cast<double>(n_patches));
  return std::max<std::size_t>(1, k);
}

KeepSet draw_keep_set(const SamplingSpec& spec, std::uint64_t step,
                      std::uint64_t sample,
                      std::optional<double> rate_override) {
  spec.validate();
  double rate;
  if (rate_override) {
    rate = *rate_override;
  } else if (spec.keep_rate) {
    rate = *spec.keep_rate;
  } else {
    throw IntervalInactive(
        "interval spec requires an explicit per-step rate (draw_rate first)");
  }
  check_rate(rate);

  const std::size_t rows = spec.grid_rows, cols = spec.grid_cols;
  const std::size_t n = rows * cols;
  const std::size_t k = kept_count(rate, n);
  Rng rng = rng_at(spec.seed, Stream::kKeepSet, step, sample);

  std::vector<std::size_t> cells;
  if (k == n) {
    cells.resize(n);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
  } else {
    switch (spec.strategy) {
      case Strategy::kRandom: cells = draw_random(k, n, rng); break;
      case Strategy::kUniform: cells = draw_uniform(k, rows, cols, rng); break;
      case Strategy::kStructured:
        cells = draw_structured(k, rows, cols, rate, rng);
        break;
      case Strategy::kCropping: cells = draw_cropping(k, rows, cols, rng); break;
    }
  }
  std::sort(cells.begin(), cells.end());

  KeepSet keep;
  keep.indices = std::move(cells);
  keep.effective_rate =
      static_cast<double>(keep.indices.size()) / static_cast<double>(n);
  return keep;
}

double draw_rate(const SamplingSpec& spec, std::uint64_t step) {
  if (!spec.rate_interval) {
    throw IntervalInactive("draw_rate requires an active rate interval");
  }
  const auto [lo, hi] = *spec.rate_interval;
  Rng rng = rng_at(spec.seed, Stream::kRate, step);
  return lo + rng.next_double() * (hi - lo);
}

namespace {

TokenBatch apply_dropout_lists(
    const TokenBatch& tokens,
    const std::vector<const KeepSet*>& keeps) {
  if (!tokens.has_cls) {
    throw Error("dropout requires a CLS token at position 0");
  }
  if (tokens.kept_indices) {
    throw DoubleDropout("dropout already applied to this token batch");
  }
  const std::size_t n = tokens.patch_count();
  if (tokens.seq_len() != n + 1) {
    throw ShapeMismatch("token batch length does not match its grid");
  }
  const std::size_t k = keeps[0]->size();

  std::vector<std::vector<std::size_t>> rows(keeps.size());
  std::vector<std::vector<std::size_t>> kept(keeps.size());
  for (std::size_t b = 0; b < keeps.size(); ++b) {
    if (keeps[b]->size() != k) {
      throw ShapeMismatch("keep sets in a batch must have equal size");
    }
    auto& r = rows[b];
    r.reserve(k + 1);
    r.push_back(0);  // CLS always survives
    for (std::size_t idx : keeps[b]->indices) r.push_back(idx + 1);
    kept[b] = keeps[b]->indices;
  }

  TokenBatch out;
  out.tokens = keeps.size() == 1 ? ops::gather_rows(tokens.tokens, rows[0])
                                 : ops::gather_rows(tokens.tokens, rows);
  out.grid_rows = tokens.grid_rows;
  out.grid_cols = tokens.grid_cols;
  out.has_cls = true;
  out.kept_indices = std::move(kept);
  return out;
}

}  // namespace

TokenBatch apply_dropout(const TokenBatch& tokens, const KeepSet& keep) {
  return apply_dropout_lists(tokens, {&keep});
}

TokenBatch apply_dropout(const TokenBatch& tokens,
                         const std::vector<KeepSet>& keeps) {
  if (keeps.empty()) throw Error("apply_dropout: no keep sets");
  if (keeps.size() != tokens.tokens.extent(0)) {
    throw ShapeMismatch("need one keep set per batch element");
  }
  std::vector<const KeepSet*> ptrs;
  ptrs.reserve(keeps.size());
  for (const auto& ks : keeps) ptrs.push_back(&ks);
  return apply_dropout_lists(tokens, ptrs);
}

}  // namespace patchdrop
