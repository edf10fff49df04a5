#include "relboltz/errors.hpp"
#include "relboltz/harness.hpp"

#include <openssl/evp.h>

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <system_error>

namespace relboltz {

namespace {

std::string axis_names(char prefix, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ',';
    out += prefix;
    out += std::to_string(i);
  }
  return out;
}

void append_row(std::string& out, const Vec& a, const Vec* b, double value) {
  for (int i = 0; i < a.size(); ++i) out += format_value(a[i]) + ',';
  if (b)
    for (int i = 0; i < b->size(); ++i) out += format_value((*b)[i]) + ',';
  out += format_value(value);
  out += '\n';
}

std::string grid_csv(const PhaseGrid& grid, const std::vector<double>& values) {
  if (values.size() != grid.size()) throw DomainError("grid and value counts differ");
  std::string out = phase_grid_header(grid.dim()) + '\n';
  for (std::size_t k = 0; k < values.size(); ++k) {
    PhaseState s = grid.node(k);
    append_row(out, s.x, &s.p, values[k]);
  }
  return out;
}

[[noreturn]] void io_failure(const std::filesystem::path& path, const char* what) {
  throw std::system_error(errno, std::generic_category(), std::string(what) + " " + path.string());
}

}  // namespace

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

std::string phase_grid_header(int n) { return axis_names('x', n) + ',' + axis_names('p', n) + ",value"; }

std::string measurement_header(int n) { return axis_names('x', n) + ",S_value"; }

void export_grid(const PhaseDensity& f, const PhaseGrid& grid, const std::filesystem::path& path) {
  if (f.dim() != grid.dim() && !f.is_zero()) throw DomainError("density and grid dimensions differ");
  write_file(path, grid_csv(grid, sample_on_grid(f, grid)));
}

void export_grid_values(const GridValues& g, const std::filesystem::path& path) {
  write_file(path, grid_csv(g.grid, g.values));
}

void export_measurement(const Measurement& m, const std::filesystem::path& path) {
  if (m.values.size() != m.grid.size()) throw DomainError("measurement and grid sizes differ");
  std::string out = measurement_header(static_cast<int>(m.grid.centre.size())) + '\n';
  for (std::size_t k = 0; k < m.values.size(); ++k) append_row(out, m.grid.node(k), nullptr, m.values[k]);
  write_file(path, out);
}

CsvTable import_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DomainError("empty CSV file " + path.string());
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) table.header.push_back(cell);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> values;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) throw DomainError("bad number in " + path.string() + " row " + std::to_string(row));
      values.push_back(v);
      if (next == end) break;
      if (*next != ',') throw DomainError("bad separator in " + path.string() + " row " + std::to_string(row));
      p = next + 1;
    }
    if (values.size() != table.header.size())
      throw DomainError("column count mismatch in " + path.string() + " row " + std::to_string(row));
    table.rows.push_back(std::move(values));
  }
  return table;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  errno = 0;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_failure(path, "cannot open");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) io_failure(path, "cannot write");
}

std::string read_file(const std::filesystem::path& path) {
  errno = 0;
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) io_failure(path, "cannot read");
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace relboltz
