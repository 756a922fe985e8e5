#pragma once

#include <string>

#include "dpin/sim.hpp"

namespace dpin::logio {

// Line-delimited offline log. Line 1 is a schema header carrying the version
// and the full simulator config (so readers can rebuild the item catalog);
// every following line is one transition. History sequences inside state
// snapshots are capped to the most recent kHistoryCap pages per feedback
// kind; the untruncated lengths are stored alongside.
inline constexpr int kSchemaVersion = 1;
inline constexpr int kHistoryCap = 32;

void write_offline_log(const sim::OfflineLog& log, const std::string& path);
sim::OfflineLog read_offline_log(const std::string& path);

// Canonical JSON snapshot of a state (also used to key reachable-state
// enumerations in tests).
std::string state_json(const feat::State& s);

}  // namespace dpin::logio
