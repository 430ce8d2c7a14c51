#pragma once

#include <iosfwd>

namespace choicematch {

/// Checks hand-computable facts of every module (matching arithmetic,
/// aggregation, episode invariants, the restore law, gradient agreement with
/// finite differences, triplet pipeline). Prints one line per check and
/// returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace choicematch
