#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mlfuzz/solver.hpp"

namespace mlfuzz::io {

// Shortest round-trip decimal form, independent of the global locale.
std::string format_double(double v);

// Columns: t, l_0, u_0, ..., l_K, u_K, norm. Vector states repeat the level
// columns per component with a component suffix (l_0_c1, ...).
void write_trajectory_csv(std::ostream& out, const FuzzyTrajectory& traj);

// Columns: t, moment, stderr.
void write_moment_csv(std::ostream& out, const MomentTrajectory& traj);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Reads a numeric CSV with one header line. Throws DomainError on malformed
// input.
CsvTable read_csv(std::istream& in);

}  // namespace mlfuzz::io
