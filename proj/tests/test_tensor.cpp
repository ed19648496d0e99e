#include <doctest.h>

#include "patchdrop/flops.hpp"
#include "patchdrop/ops.hpp"
#include "test_util.hpp"

using namespace patchdrop;
using testutil::random_tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape and data lengths agree") {
  Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.values().size() == 24);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeMismatch);
}

TEST_CASE("gradient buffers allocate lazily to zero") {
  Tensor t = Tensor::zeros({3}, true);
  CHECK_FALSE(t.grad_allocated());
  auto g = t.grad_mut();
  CHECK(g.size() == 3);
  CHECK(g[0] == 0.0);
  g[1] = 5.0;
  t.zero_grad();
  CHECK(t.grad()[1] == 0.0);
}

TEST_CASE("matmul identity") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor out = ops::matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out.values()[i] == m.values()[i]);
  }
}

TEST_CASE("matmul hand arithmetic") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor c = ops::matmul(a, b);
  CHECK(c.values()[0] == 19);
  CHECK(c.values()[1] == 22);
  CHECK(c.values()[2] == 43);
  CHECK(c.values()[3] == 50);
}

TEST_CASE("matmul rejects mismatched inner extents") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(ops::matmul(a, b), ShapeMismatch);
}

TEST_CASE("matmul batched variants agree with flattening") {
  Rng rng = rng_at(11, Stream::kDataGen);
  Tensor a = random_tensor({3, 4, 5}, rng, false);
  Tensor b = random_tensor({5, 2}, rng, false);
  Tensor out = ops::matmul(a, b);
  CHECK(out.shape() == Shape{3, 4, 2});
  Tensor flat = ops::matmul(ops::reshape(a, {12, 5}), b);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    CHECK(out.values()[i] == flat.values()[i]);
  }
}

TEST_CASE("softmax trivial cases") {
  Tensor x = Tensor::from({3}, {0, 0, 0});
  Tensor y = ops::softmax(x, 0);
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Tensor big = Tensor::from({2}, {1000, 1000});
  Tensor yb = ops::softmax(big, -1);
  CHECK(yb.values()[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::isfinite(yb.values()[0]));
}

TEST_CASE("softmax matches extended-precision oracle") {
  // Frozen from an extended-precision evaluation of exp(x_i)/sum exp(x_j).
  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tensor y = ops::softmax(x, 0);
  CHECK(std::abs(y.values()[0] - 0.090030573170380457998) < 1e-12);
  CHECK(std::abs(y.values()[1] - 0.24472847105479765247) < 1e-12);
  CHECK(std::abs(y.values()[2] - 0.66524095577482188953) < 1e-12);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng = rng_at(3, Stream::kDataGen);
  Tensor x = random_tensor({2, 3, 4, 5}, rng, false, -30.0, 30.0);
  Tensor y = ops::softmax(x, -1);
  const double* p = y.values().data();
  for (std::size_t row = 0; row < 24; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += p[row * 5 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("layer_norm constant row maps to bias") {
  Tensor x = Tensor::from({1, 4}, {3, 3, 3, 3});
  Tensor g = Tensor::full({4}, 1.0);
  Tensor b = Tensor::zeros({4});
  Tensor y = ops::layer_norm(x, g, b, 1e-6);
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("layer_norm symmetric pair") {
  Tensor x = Tensor::from({1, 2}, {1, 3});
  Tensor g = Tensor::full({2}, 1.0);
  Tensor b = Tensor::zeros({2});
  Tensor y = ops::layer_norm(x, g, b, 1e-12);
  CHECK(y.values()[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gather_rows semantics and errors") {
  Tensor x = Tensor::from({1, 3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor id = ops::gather_rows(x, std::vector<std::size_t>{0, 1, 2});
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(id.values()[i] == x.values()[i]);
  }
  Tensor sel = ops::gather_rows(x, std::vector<std::size_t>{2, 0});
  CHECK(sel.values()[0] == 20);
  CHECK(sel.values()[1] == 21);
  CHECK(sel.values()[2] == 0);
  CHECK(sel.values()[3] == 1);
  CHECK_THROWS_AS(ops::gather_rows(x, std::vector<std::size_t>{3}),
                  IndexOutOfRange);
  CHECK_THROWS_AS(ops::gather_rows(x, std::vector<std::size_t>{1, 1}),
                  DuplicateIndex);
}

TEST_CASE("flop meter is additive and resettable") {
  flops::reset();
  CHECK(flops::count() == 0);
  Tensor a = Tensor::zeros({3, 4});
  Tensor b = Tensor::zeros({4, 5});
  ops::matmul(a, b);
  const std::uint64_t first = flops::count();
  CHECK(first == 3 * 4 * 5);
  Tensor c = Tensor::zeros({5, 2});
  ops::matmul(ops::matmul(a, b), c);
  CHECK(flops::count() == first + 3 * 4 * 5 + 3 * 5 * 2);
  flops::reset();
  CHECK(flops::count() == 0);
}

TEST_CASE("forward results are deterministic") {
  auto run = [] {
    Rng rng = rng_at(17, Stream::kDataGen);
    Tensor a = random_tensor({4, 6}, rng, false);
    Tensor b = random_tensor({6, 3}, rng, false);
    return ops::softmax(ops::matmul(a, b), -1);
  };
  Tensor y1 = run();
  Tensor y2 = run();
  for (std::size_t i = 0; i < y1.numel(); ++i) {
    CHECK(y1.values()[i] == y2.values()[i]);
  }
}

TEST_CASE("count-only mode ticks the meter identically") {
  auto pipeline = [](bool hollow) {
    Tensor a = hollow ? Tensor::hollow({2, 7, 5}) : Tensor::zeros({2, 7, 5});
    Tensor b = hollow ? Tensor::hollow({5, 6}) : Tensor::zeros({5, 6});
    Tensor g = hollow ? Tensor::hollow({6}) : Tensor::full({6}, 1.0);
    Tensor bias = hollow ? Tensor::hollow({6}) : Tensor::zeros({6});
    Tensor h = ops::layer_norm(ops::matmul(a, b), g, bias, 1e-6);
    h = ops::softmax(ops::gelu(h), -1);
    return ops::matmul(h, hollow ? Tensor::hollow({6, 4})
                                 : Tensor::zeros({6, 4}));
  };
  flops::reset();
  pipeline(false);
  const std::uint64_t real = flops::count();
  flops::reset();
  std::uint64_t counted;
  {
    flops::CountOnlyScope scope;
    Tensor out = pipeline(true);
    CHECK_FALSE(out.has_storage());
    CHECK(out.shape() == Shape{2, 7, 4});
    counted = flops::count();
  }
  CHECK(counted == real);
  flops::reset();
}

TEST_CASE("backward visits each recorded op exactly once") {
  Rng rng = rng_at(5, Stream::kDataGen);
  Tensor a = random_tensor({3, 3}, rng, true);
  Tensor b = random_tensor({3, 3}, rng, true);
  Tape tape;
  Tensor out;
  {
    TapeScope scope(tape);
    out = ops::mean_all(ops::gelu(ops::matmul(a, b)));
  }
  CHECK(tape.size() == 3);
  CHECK(tape.backward(out) == 3);
}

TEST_SUITE_END();
