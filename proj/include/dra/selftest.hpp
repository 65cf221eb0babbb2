#pragma once

#include <iosfwd>

namespace dra {

// Runs the quick oracle and invariant suite (MIL pooling, deviation-loss
// gradients, cutmix bookkeeping, AUC, protocol set logic, residual
// machinery), printing one line per check. Returns the number of failures.
int run_selftest(std::ostream& out);

} // namespace dra
