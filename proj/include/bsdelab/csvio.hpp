// CSV and config plumbing shared by the CLI and tests.
//
// Numeric fields use shortest round-trip decimal formatting (std::to_chars),
// so identical doubles serialize to identical bytes on every run: the
// determinism contract rests on this plus the seeded generator.
#pragma once

#include <map>
#include <string>
#include <vector>

namespace bsdelab {

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Writes header + rows, comma separated, '\n' line endings, no trailing
// whitespace.  Throws std::runtime_error on I/O failure.
void write_csv(const std::string& path, const CsvTable& table);

// Writes the sidecar metadata file `path + ".meta"`: sorted key=value lines.
// The sidecar carries the config echo, version and wall time and is NOT part
// of the byte-determinism contract.
void write_sidecar(const std::string& path,
                   const std::map<std::string, std::string>& meta);

// Parses a flat key=value config file ('#' comments, blank lines ignored).
// Throws std::runtime_error with a line diagnostic on malformed input.
std::map<std::string, std::string> parse_config(const std::string& path);

}  // namespace bsdelab
