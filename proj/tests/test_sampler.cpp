#include <doctest.h>

#include <algorithm>
#include <set>

#include "patchdrop/sampler.hpp"
#include "test_util.hpp"

using namespace patchdrop;

namespace {

bool sorted_unique_in_range(const KeepSet& ks, std::size_t n) {
  if (!std::is_sorted(ks.indices.begin(), ks.indices.end())) return false;
  std::set<std::size_t> uniq(ks.indices.begin(), ks.indices.end());
  if (uniq.size() != ks.indices.size()) return false;
  return ks.indices.empty() || *uniq.rbegin() < n;
}

}  // namespace

TEST_SUITE_BEGIN("sampler");

TEST_CASE("rate 1.0 keeps every patch for every strategy") {
  for (Strategy s : {Strategy::kRandom, Strategy::kUniform,
                     Strategy::kStructured, Strategy::kCropping}) {
    SamplingSpec spec = SamplingSpec::fixed(s, 1.0, 9, 14, 14);
    KeepSet ks = draw_keep_set(spec, 0);
    CHECK(ks.size() == 196);
    for (std::size_t i = 0; i < 196; ++i) CHECK(ks.indices[i] == i);
    CHECK(ks.effective_rate == 1.0);
  }
}

TEST_CASE("random draw sizes") {
  SamplingSpec spec = SamplingSpec::fixed(Strategy::kRandom, 0.25, 1, 14, 14);
  KeepSet ks = draw_keep_set(spec, 0);
  CHECK(ks.size() == 49);
  CHECK(sorted_unique_in_range(ks, 196));

  SamplingSpec big = SamplingSpec::fixed(Strategy::kRandom, 0.05, 1, 56, 56);
  KeepSet ks2 = draw_keep_set(big, 0);
  CHECK(ks2.size() == 156);  // floor(156.8)
}

TEST_CASE("structured r=0.25 on a 14x14 grid is a 7x7 lattice") {
  SamplingSpec spec =
      SamplingSpec::fixed(Strategy::kStructured, 0.25, 33, 14, 14);
  KeepSet ks = draw_keep_set(spec, 0);
  CHECK(ks.size() == 49);
  std::set<std::size_t> rows, cols;
  for (std::size_t idx : ks.indices) {
    rows.insert(idx / 14);
    cols.insert(idx % 14);
  }
  CHECK(rows.size() == 7);
  CHECK(cols.size() == 7);
  // Full Cartesian product of the chosen rows and columns.
  for (std::size_t r : rows) {
    for (std::size_t c : cols) {
      CHECK(std::binary_search(ks.indices.begin(), ks.indices.end(),
                               r * 14 + c));
    }
  }
}

TEST_CASE("size law holds for every strategy at arbitrary rates") {
  const std::vector<std::pair<std::size_t, std::size_t>> grids{
      {14, 14}, {8, 8}, {7, 5}, {56, 56}, {1, 9}};
  Rng rate_rng = rng_at(2024, Stream::kDataGen);
  for (auto [gr, gc] : grids) {
    const std::size_t n = gr * gc;
    for (Strategy s : {Strategy::kRandom, Strategy::kUniform,
                       Strategy::kStructured, Strategy::kCropping}) {
      for (int trial = 0; trial < 8; ++trial) {
        const double rate = 0.02 + rate_rng.next_double() * 0.98;
        SamplingSpec spec = SamplingSpec::fixed(s, rate, 7, gr, gc);
        KeepSet ks = draw_keep_set(spec, trial);
        CHECK(ks.size() == kept_count(rate, n));
        CHECK(sorted_unique_in_range(ks, n));
      }
    }
  }
}

TEST_CASE("draws are deterministic in (spec, step, sample)") {
  SamplingSpec spec = SamplingSpec::fixed(Strategy::kRandom, 0.5, 12, 14, 14);
  KeepSet a = draw_keep_set(spec, 5, 2);
  KeepSet b = draw_keep_set(spec, 5, 2);
  CHECK(a.indices == b.indices);

  SamplingSpec other = spec;
  other.seed = 13;
  KeepSet c = draw_keep_set(other, 5, 2);
  CHECK(a.indices != c.indices);

  KeepSet d = draw_keep_set(spec, 6, 2);
  CHECK(a.indices != d.indices);
}

TEST_CASE("draw_rate semantics") {
  SamplingSpec degenerate =
      SamplingSpec::interval(Strategy::kRandom, 0.7, 0.7, 3, 14, 14);
  for (int step = 0; step < 5; ++step) {
    CHECK(draw_rate(degenerate, step) == 0.7);
  }

  SamplingSpec spec =
      SamplingSpec::interval(Strategy::kRandom, 0.5, 1.0, 3, 14, 14);
  double sum = 0.0;
  for (int step = 0; step < 100000; ++step) sum += draw_rate(spec, step);
  const double mean = sum / 100000.0;
  CHECK(std::abs(mean - 0.75) < 0.005);

  CHECK(draw_rate(spec, 0) != draw_rate(spec, 1));

  SamplingSpec fixed = SamplingSpec::fixed(Strategy::kRandom, 0.5, 3, 14, 14);
  CHECK_THROWS_AS(draw_rate(fixed, 0), IntervalInactive);
  CHECK_THROWS_AS(draw_keep_set(spec, 0), IntervalInactive);
}

TEST_CASE("invalid rates are rejected") {
  CHECK_THROWS_AS(SamplingSpec::fixed(Strategy::kRandom, 0.0, 1, 2, 2),
                  InvalidRate);
  CHECK_THROWS_AS(SamplingSpec::fixed(Strategy::kRandom, 1.5, 1, 2, 2),
                  InvalidRate);
  CHECK_THROWS_AS(kept_count(-0.1, 10), InvalidRate);
}

TEST_CASE("random strategy keeps each patch uniformly (chi-square)") {
  // 10^4 draws at r=0.25 on 196 patches; Pearson statistic against the
  // binomial null must stay below the 99% quantile of chi2 with 195 dof.
  const std::size_t draws = 10000;
  const double p = 0.25;
  SamplingSpec spec = SamplingSpec::fixed(Strategy::kRandom, p, 97, 14, 14);
  std::vector<std::size_t> counts(196, 0);
  for (std::size_t step = 0; step < draws; ++step) {
    KeepSet ks = draw_keep_set(spec, step);
    for (std::size_t idx : ks.indices) ++counts[idx];
  }
  const double expected = draws * p;
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    chi2 += d * d / (expected * (1.0 - p));
  }
  // chi2inv(0.99, 195) = 243.8595...
  CHECK(chi2 < 243.8595291890831);
}

TEST_CASE("apply_dropout basics") {
  Tensor tokens = Tensor::zeros({1, 5, 2});
  for (std::size_t i = 0; i < 10; ++i) {
    tokens.values_mut()[i] = static_cast<double>(i);
  }
  TokenBatch tb;
  tb.tokens = tokens;
  tb.grid_rows = 2;
  tb.grid_cols = 2;
  tb.has_cls = true;

  SUBCASE("keeping everything is bitwise identity") {
    KeepSet all;
    all.indices = {0, 1, 2, 3};
    all.effective_rate = 1.0;
    TokenBatch out = apply_dropout(tb, all);
    CHECK(out.seq_len() == 5);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(out.tokens.values()[i] == tokens.values()[i]);
    }
  }

  SUBCASE("subset keeps CLS plus selected patches in order") {
    KeepSet keep;
    keep.indices = {1, 3};
    keep.effective_rate = 0.5;
    TokenBatch out = apply_dropout(tb, keep);
    CHECK(out.seq_len() == 3);
    CHECK(out.tokens.at({0, 0, 0}) == 0.0);   // cls row
    CHECK(out.tokens.at({0, 1, 0}) == 4.0);   // patch 1 -> token row 2
    CHECK(out.tokens.at({0, 2, 0}) == 8.0);   // patch 3 -> token row 4
    CHECK(out.kept_for(0) == std::vector<std::size_t>{1, 3});

    CHECK_THROWS_AS(apply_dropout(out, keep), DoubleDropout);
  }
}

TEST_SUITE_END();
