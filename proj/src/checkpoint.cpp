#include "fblab/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace fblab {

namespace {

constexpr const char* kMagic = "FBLAB1";

std::string join_ints(const Index3& v, int dim) {
  std::string s;
  for (int a = 0; a < dim; ++a) {
    if (a) s += ',';
    s += std::to_string(v[a]);
  }
  return s;
}

std::string join_doubles(const Point& p) {
  std::string s;
  for (int a = 0; a < p.size(); ++a) {
    if (a) s += ',';
    s += format_double(p[a]);
  }
  return s;
}

void write_header(std::ostream& out, const Grid& g) {
  out << kMagic << '\n'
      << "n=" << g.dim() << '\n'
      << "shape=" << join_ints(g.shape(), g.dim()) << '\n'
      << "origin=" << join_doubles(g.origin()) << '\n'
      << "h=" << format_double(g.spacing()) << '\n';
}

void write_le(std::ostream& out, const double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (std::size_t k = 0; k < count; ++k) {
      auto bits = std::bit_cast<std::uint64_t>(data[k]);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(bytes, 8);
    }
  }
}

std::vector<double> read_le(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  std::vector<unsigned char> raw(count * 8);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw FormatError("checkpoint payload is truncated");
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[k * 8 + b]) << (8 * b);
    values[k] = std::bit_cast<double>(bits);
  }
  return values;
}

std::string expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint header is truncated");
  if (line.rfind(key + "=", 0) != 0) throw FormatError("checkpoint header expected '" + key + "='");
  return line.substr(key.size() + 1);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "' in checkpoint");
  return v;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

struct Opened {
  std::ifstream in;
  FieldHeader header;
  std::size_t payload_bytes = 0;
};

Opened open_checkpoint(const std::filesystem::path& path) {
  Opened o;
  o.in.open(path, std::ios::binary);
  if (!o.in) throw FormatError("cannot open checkpoint " + path.string());
  std::string magic;
  if (!std::getline(o.in, magic) || magic != kMagic) throw FormatError("bad checkpoint magic in " + path.string());
  FieldHeader& h = o.header;
  const std::string n = expect_line(o.in, "n");
  if (n != "2" && n != "3") throw FormatError("checkpoint dimension must be 2 or 3");
  h.dim = n[0] - '0';
  const auto shape = split(expect_line(o.in, "shape"));
  const auto origin = split(expect_line(o.in, "origin"));
  if (static_cast<int>(shape.size()) != h.dim || static_cast<int>(origin.size()) != h.dim)
    throw FormatError("checkpoint shape/origin do not match dimension");
  h.origin = Point(h.dim);
  for (int a = 0; a < h.dim; ++a) {
    int v = 0;
    const auto& s = shape[a];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 4) throw FormatError("bad checkpoint shape");
    h.shape[a] = v;
    h.origin[a] = parse_double(origin[a]);
  }
  h.spacing = parse_double(expect_line(o.in, "h"));
  if (!(h.spacing > 0.0)) throw FormatError("checkpoint spacing must be positive");

  const auto start = o.in.tellg();
  o.in.seekg(0, std::ios::end);
  o.payload_bytes = static_cast<std::size_t>(o.in.tellg() - start);
  o.in.seekg(start);

  std::size_t nodes = 1;
  for (int a = 0; a < h.dim; ++a) nodes *= static_cast<std::size_t>(h.shape[a]);
  if (o.payload_bytes == nodes * 8)
    h.components = 1;
  else if (o.payload_bytes == nodes * 8 * symmetric_entries(h.dim))
    h.components = symmetric_entries(h.dim);
  else
    throw FormatError("checkpoint payload size does not match its shape");
  return o;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

void save_field(const std::filesystem::path& path, const ScalarField& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  write_header(out, f.grid());
  write_le(out, f.values().data(), static_cast<std::size_t>(f.values().size()));
}

void save_field(const std::filesystem::path& path, const CoefficientField& A) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  write_header(out, A.grid());
  write_le(out, A.entries().data(), static_cast<std::size_t>(A.entries().size()));
}

FieldHeader read_field_header(const std::filesystem::path& path) { return open_checkpoint(path).header; }

ScalarField load_scalar_field(const std::filesystem::path& path) {
  Opened o = open_checkpoint(path);
  if (o.header.components != 1) throw FormatError("checkpoint holds a matrix field, not a scalar field");
  const Grid grid = o.header.grid();
  const auto raw = read_le(o.in, grid.node_count());
  ScalarField::Vector v = Eigen::Map<const ScalarField::Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  return ScalarField(grid, std::move(v));
}

CoefficientField load_coefficient_field(const std::filesystem::path& path, double hoelder_exponent,
                                        double hoelder_seminorm) {
  Opened o = open_checkpoint(path);
  if (o.header.components == 1) throw FormatError("checkpoint holds a scalar field, not a matrix field");
  const Grid grid = o.header.grid();
  const int comps = o.header.components;
  const auto raw = read_le(o.in, grid.node_count() * comps);
  CoefficientField::Storage s =
      Eigen::Map<const CoefficientField::Storage>(raw.data(), static_cast<Eigen::Index>(grid.node_count()), comps);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(CoefficientField::unpack(grid.dim(), s.row(k)), Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  return CoefficientField(grid, std::move(s), {lo, hi, hoelder_exponent, hoelder_seminorm});
}

}  // namespace fblab
