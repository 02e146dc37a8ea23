#include <cstdint>
#include <cstdlib>
#include <iostream>

#include "reshlab/verify.hpp"

// Standalone acceptance gate.  Runs every declared criterion against its
// independently derived expectation and prints one [PASS]/[FAIL] line per
// criterion.  Exits nonzero when any criterion fails.

int main(int argc, char** argv) {
    std::uint64_t seed = 1234;
    if (argc > 1) seed = std::strtoull(argv[1], nullptr, 10);
    const reshlab::AcceptanceOutcome outcome = reshlab::run_acceptance(seed);
    reshlab::print_acceptance(std::cout, outcome);
    return outcome.all_pass ? 0 : 1;
}
