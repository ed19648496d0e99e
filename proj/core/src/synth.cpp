#include "patchdrop/synth.hpp"

#include <algorithm>
#include <cmath>

#include "patchdrop/rng.hpp"

namespace patchdrop::synth {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

std::uint8_t quantize(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

void assign_splits(Dataset& d, std::size_t train, std::size_t val,
                   std::size_t test) {
  d.train_split.resize(train);
  d.val_split.resize(val);
  d.test_split.resize(test);
  std::uint32_t idx = 0;
  for (auto& v : d.train_split) v = idx++;
  for (auto& v : d.val_split) v = idx++;
  for (auto& v : d.test_split) v = idx++;
}

}  // namespace

Dataset texture_benchmark(std::size_t train, std::size_t val, std::size_t test,
                          std::size_t image_size, std::uint64_t seed) {
  const std::size_t count = train + val + test;
  Dataset d;
  d.height = image_size;
  d.width = image_size;
  d.channels = 1;
  d.classes = 4;
  d.pixels.resize(count * image_size * image_size);
  d.labels.resize(count);

  const double s = static_cast<double>(image_size);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = rng_at(seed, Stream::kDataGen, i);
    const std::uint16_t label = static_cast<std::uint16_t>(i % 4);
    d.labels[i] = label;

    const double freq = 2.5 + rng.next_double() * 2.5;  // cycles per image
    const double phase = rng.next_double() * kTau;
    const double phase2 = rng.next_double() * kTau;
    const double amp = 0.30 + rng.next_double() * 0.15;
    const double bias = 0.45 + rng.next_double() * 0.10;
    const double noise_sd = 0.08;
    const bool anti_diagonal = rng.next_double() < 0.5;

    std::uint8_t* img = d.pixels.data() + i * image_size * image_size;
    for (std::size_t y = 0; y < image_size; ++y) {
      for (std::size_t x = 0; x < image_size; ++x) {
        const double xf = static_cast<double>(x);
        const double yf = static_cast<double>(y);
        double v = bias;
        switch (label) {
          case 0:  // horizontal bands
            v += amp * std::sin(kTau * freq * yf / s + phase);
            break;
          case 1:  // vertical bands
            v += amp * std::sin(kTau * freq * xf / s + phase);
            break;
          case 2:  // plaid
            v += amp * std::sin(kTau * freq * xf / s + phase) *
                 std::sin(kTau * freq * yf / s + phase2);
            break;
          default: {  // diagonal bands, either orientation
            const double proj = anti_diagonal ? (xf - yf) : (xf + yf);
            v += amp * std::sin(kTau * freq * proj / (s * 1.4142135623730951) +
                                phase);
            break;
          }
        }
        v += noise_sd * rng.next_gaussian();
        img[y * image_size + x] = quantize(v);
      }
    }
  }
  assign_splits(d, train, val, test);
  return d;
}

Dataset separable_pair(std::size_t train, std::size_t val, std::size_t test,
                       std::size_t image_size, std::uint64_t seed) {
  const std::size_t count = train + val + test;
  Dataset d;
  d.height = image_size;
  d.width = image_size;
  d.channels = 1;
  d.classes = 2;
  d.pixels.resize(count * image_size * image_size);
  d.labels.resize(count);

  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = rng_at(seed, Stream::kDataGen, i);
    const std::uint16_t label = static_cast<std::uint16_t>(i % 2);
    d.labels[i] = label;
    std::uint8_t* img = d.pixels.data() + i * image_size * image_size;
    for (std::size_t y = 0; y < image_size; ++y) {
      for (std::size_t x = 0; x < image_size; ++x) {
        const bool bright_half =
            (label == 0) ? (x < image_size / 2) : (x >= image_size / 2);
        double v = bright_half ? 0.75 : 0.25;
        v += 0.05 * rng.next_gaussian();
        img[y * image_size + x] = quantize(v);
      }
    }
  }
  assign_splits(d, train, val, test);
  return d;
}

}  // namespace patchdrop::synth
