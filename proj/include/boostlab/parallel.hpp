#pragma once

namespace boostlab {

/// Sets the worker count for data-parallel loops. 0 selects the OpenMP
/// default. Results never depend on this value: parallel loops only write
/// disjoint slots and every reduction runs serially in a fixed order.
void set_thread_count(int threads);
int thread_count();

/// Reads BOOSTLAB_THREADS; returns 0 (auto) when unset or malformed.
int thread_count_from_env();

}  // namespace boostlab
