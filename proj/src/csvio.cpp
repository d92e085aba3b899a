#include "bsdelab/csvio.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace bsdelab {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void write_line(std::ofstream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);  // binary keeps '\n' endings
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_line(out, table.header);
  for (const auto& row : table.rows) write_line(out, row);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_sidecar(const std::string& path,
                   const std::map<std::string, std::string>& meta) {
  const std::string side = path + ".meta";
  std::ofstream out(side, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + side + " for writing");
  for (const auto& [key, value] : meta) out << key << '=' << value << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + side);
}

std::map<std::string, std::string> parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty key");
    out[key] = value;
  }
  return out;
}

}  // namespace bsdelab
