#include "mlfuzz/io.hpp"

#include <array>
#include <charconv>
#include <istream>
#include <ostream>

#include "mlfuzz/error.hpp"

namespace mlfuzz::io {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_trajectory_csv(std::ostream& out, const FuzzyTrajectory& traj) {
  const std::size_t n = traj.dimension();
  const std::size_t L = n ? traj.states.front().front().size() : 0;
  out << "t";
  for (std::size_t c = 0; c < n; ++c) {
    const std::string suffix = n > 1 ? "_c" + std::to_string(c + 1) : "";
    for (std::size_t k = 0; k < L; ++k) out << ",l_" << k << suffix << ",u_" << k << suffix;
  }
  out << ",norm\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << format_double(traj.times[i]);
    for (const auto& u : traj.states[i]) {
      for (std::size_t k = 0; k < L; ++k) out << ',' << format_double(u.lower()[k]) << ',' << format_double(u.upper()[k]);
    }
    out << ',' << format_double(traj.norm[i]) << '\n';
  }
}

void write_moment_csv(std::ostream& out, const MomentTrajectory& traj) {
  out << "t,moment,stderr\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << format_double(traj.times[i]) << ',' << format_double(traj.moment[i]) << ','
        << format_double(traj.std_error[i]) << '\n';
  }
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DomainError("CSV input is empty");
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    table.header.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw DomainError("CSV line " + std::to_string(lineno) + ": malformed number");
      row.push_back(v);
      p = res.ptr;
      if (p == end) break;
      if (*p != ',') throw DomainError("CSV line " + std::to_string(lineno) + ": expected ','");
      ++p;
    }
    if (row.size() != table.header.size()) {
      throw DomainError("CSV line " + std::to_string(lineno) + ": expected " + std::to_string(table.header.size()) +
                        " fields");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace mlfuzz::io
