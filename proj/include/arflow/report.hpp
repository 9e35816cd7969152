#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "arflow/bound.hpp"
#include "arflow/metrics.hpp"
#include "arflow/sampler.hpp"

namespace arflow {

// Round-trip-precision decimal form ("%.17g"), stable across runs.
std::string format_double(double v);

// One row per sampler event: kind, chunk, step, codec-pass deltas by
// bucket, wall nanoseconds.
void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRow>& rows);

// Per-step rows followed by one summary row per verified case.
void write_bound_csv(const std::filesystem::path& path,
                     const std::vector<BoundReport>& reports);

// Plain "key=value" lines.  The manifest is written when a command starts;
// "status=ok" is appended only on clean completion, so an interrupted run
// is distinguishable from a finished one.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& kv);
void append_manifest_status(const std::filesystem::path& path,
                            const std::string& status);

}  // namespace arflow
