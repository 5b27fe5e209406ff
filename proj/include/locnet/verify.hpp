#ifndef LOCNET_VERIFY_HPP
#define LOCNET_VERIFY_HPP

#include <iosfwd>
#include <string>

#include "locnet/common.hpp"

namespace locnet {

/// Run the invariant suites at desk scale; prints one pass/fail line per
/// property with the measured error. Returns the number of failed properties.
/// `mutate` injects a deliberate fault for self-testing ("dopt-sign" flips
/// the analytic D-Opt gradient sign inside the check).
int run_verification(uint64_t seed, const std::string& mutate, std::ostream& os);

}  // namespace locnet

#endif
