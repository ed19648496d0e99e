#pragma once

#include <cstdint>

namespace patchdrop::flops {

// Global multiply-accumulate meter. One MAC = one FLOP, the convention used
// by mainstream model profilers, so readouts are comparable with published
// GFLOPs tables. Only matrix products tick the meter; softmax, layer norm,
// GELU and residual adds are free by design.
//
// The meter belongs to a single run at a time: reset it, execute, read it.

std::uint64_t count();
void reset();
void add(std::uint64_t macs);

// Count-only execution: ops propagate shapes and tick the meter but skip all
// arithmetic and allocate no element storage. This is how multi-hundred-GFLOP
// configurations are counted in milliseconds. The count is identical to a
// real run because it depends only on operand shapes.
bool count_only();

class CountOnlyScope {
 public:
  CountOnlyScope();
  ~CountOnlyScope();
  CountOnlyScope(const CountOnlyScope&) = delete;
  CountOnlyScope& operator=(const CountOnlyScope&) = delete;

 private:
  bool previous_;
};

}  // namespace patchdrop::flops
