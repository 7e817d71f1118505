#include "softsense/common/table.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace softsense {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'C', 'O', 'L', 'B', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("columnar file truncated");
  return to_little(v);
}

}  // namespace

std::optional<std::size_t> Table::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

const std::vector<double>& Table::col(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw std::out_of_range("missing column: " + std::string(name));
  return columns[*i];
}

std::vector<double>& Table::col(std::string_view name) {
  auto i = index_of(name);
  if (!i) throw std::out_of_range("missing column: " + std::string(name));
  return columns[*i];
}

void Table::add_column(std::string name, std::vector<double> values) {
  if (!columns.empty() && values.size() != rows())
    throw std::invalid_argument("column '" + name + "' has " + std::to_string(values.size()) +
                                " rows, table has " + std::to_string(rows()));
  if (index_of(name)) throw std::invalid_argument("duplicate column: " + name);
  names.push_back(std::move(name));
  columns.push_back(std::move(values));
}

Table Table::subsample(std::size_t stride) const {
  if (stride == 0) throw std::invalid_argument("subsample stride must be >= 1");
  Table out;
  out.names = names;
  out.t0 = t0;
  out.dt = dt * static_cast<double>(stride);
  for (const auto& c : columns) {
    std::vector<double> v;
    v.reserve(c.size() / stride + 1);
    for (std::size_t i = 0; i < c.size(); i += stride) v.push_back(c[i]);
    out.columns.push_back(std::move(v));
  }
  return out;
}

void write_columnar(const std::filesystem::path& path, const Table& table) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(table.cols()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(table.rows()));
  put<double>(os, table.t0);
  put<double>(os, table.dt);
  for (const auto& n : table.names) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(n.size()));
    os.write(n.data(), static_cast<std::streamsize>(n.size()));
  }
  for (const auto& c : table.columns)
    for (double v : c) put<double>(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Table read_columnar(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a columnar file: " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported columnar version " + std::to_string(version));
  const auto ncols = get<std::uint32_t>(is);
  const auto nrows = get<std::uint64_t>(is);
  Table t;
  t.t0 = get<double>(is);
  t.dt = get<double>(is);
  for (std::uint32_t i = 0; i < ncols; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    t.names.push_back(std::move(name));
  }
  t.columns.assign(ncols, std::vector<double>(nrows));
  for (auto& c : t.columns)
    for (auto& v : c) v = get<double>(is);
  return t;
}

void write_csv(const std::filesystem::path& path, const Table& table, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("csv stride must be >= 1");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t j = 0; j < table.cols(); ++j) os << (j ? "," : "") << table.names[j];
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < table.rows(); i += stride) {
    for (std::size_t j = 0; j < table.cols(); ++j) os << (j ? "," : "") << table.columns[j][i];
    os << '\n';
  }
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty csv: " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.names.push_back(cell);
  }
  t.columns.resize(t.names.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t j = 0;
    while (std::getline(ss, cell, ',')) {
      if (j >= t.columns.size()) throw std::runtime_error("ragged csv row in " + path.string());
      t.columns[j++].push_back(std::stod(cell));
    }
    if (j != t.columns.size()) throw std::runtime_error("ragged csv row in " + path.string());
  }
  return t;
}

}  // namespace softsense
