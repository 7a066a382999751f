#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pathfair::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position, or -1.
  long column(const std::string& name) const;
};

/// RFC 4180 style reader: comma separated, double-quote escaping, header row required.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace pathfair::csv
