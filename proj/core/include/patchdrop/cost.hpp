#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchdrop/model.hpp"

namespace patchdrop::cost {

/// Side-by-side theoretical and instrumented cost of one configuration.
struct CostReport {
  std::string config_id;
  std::size_t n_patches = 0;       // N
  std::size_t kept_patches = 0;    // k
  std::size_t token_count = 0;     // T = k + 1
  std::uint64_t theoretical_flops = 0;
  std::uint64_t empirical_flops = 0;
  double relative_theoretical = 0.0;  // vs keep-rate-1 baseline
  double relative_empirical = 0.0;
  std::uint64_t activation_elements = 0;
  std::size_t parameter_count = 0;
};

/// Block-stack cost 2*L*N^2*d + 4*L*N*d^2 per image.
std::uint64_t theoretical_flops(std::size_t depth, std::size_t tokens,
                                std::size_t width);

/// Closed-form relative block cost at keep rate r (floor-free):
/// r * (r*N + 2d) / (N + 2d). Tends to r^2 as N grows.
double relative_compute(double rate, std::size_t tokens, std::size_t width);

/// One instrumented forward pass at sequence length k+1, read off the MAC
/// meter. Includes the patch projection over all N patches (embedding runs
/// before sampling) and the classification head. Count-only execution, so
/// arbitrarily large configurations cost milliseconds.
std::uint64_t empirical_flops(const ModelConfig& config,
                              std::size_t kept_patches);

/// Analytic count of stored forward activations for a batch of B images:
/// pre-dropout patchify and embedding buffers at full N, plus per block
/// c1*T*d + c2*T^2 elements with c1 = 10 (qkv, attention output, two MLP
/// buffers, norms) and c2 = 1 (one attention-map workspace per block).
std::uint64_t activation_elements(const ModelConfig& config,
                                  std::size_t kept_patches, std::size_t batch);

/// Full report for one configuration at keep rate `rate`.
CostReport report(const ModelConfig& config, double rate,
                  const std::string& config_id);

/// CSV rows (one per report) with the stable header used by the `cost`
/// subcommand and the savings plots.
std::string csv_header();
std::string csv_row(const CostReport& r);

}  // namespace patchdrop::cost
