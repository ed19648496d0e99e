#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "patchdrop/ops.hpp"
#include "patchdrop/rng.hpp"
#include "patchdrop/tensor.hpp"

namespace testutil {

using patchdrop::Rng;
using patchdrop::Shape;
using patchdrop::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values_mut()) v = lo + rng.next_double() * (hi - lo);
  return t;
}

/// Normwise relative error between two gradient buffers.
inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    da += a[i] * a[i];
    db += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(da), std::sqrt(db), 1e-12});
  return std::sqrt(num) / denom;
}

/// Central finite differences d(forward())/d(input[i]) for every element of
/// every input, compared normwise against the reverse-mode gradients.
/// `forward` must return a scalar tensor and re-read the inputs on each call.
inline double max_gradient_error(std::vector<Tensor> inputs,
                                 const std::function<Tensor()>& forward,
                                 double h = 1e-5) {
  patchdrop::Tape tape;
  Tensor out;
  {
    patchdrop::TapeScope scope(tape);
    out = forward();
  }
  tape.backward(out);

  double worst = 0.0;
  for (Tensor& input : inputs) {
    std::vector<double> analytic(input.grad().begin(), input.grad().end());
    std::vector<double> fd(input.numel());
    auto vals = input.values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = forward().item();
      vals[i] = keep - h;
      const double down = forward().item();
      vals[i] = keep;
      fd[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, rel_error(analytic, fd));
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("patchdrop_test_" + tag + "_" + std::to_string(counter++) +
                    "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

inline std::size_t count_substr(const std::string& text,
                                const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace testutil
