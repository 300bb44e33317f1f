#include "fblab/report.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace fblab {

nlohmann::json to_json(const Point& p) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.size(); ++i) a.push_back(p[i]);
  return a;
}

nlohmann::json to_json(const MinimalityCertificate& c) {
  nlohmann::json probes = nlohmann::json::array(), skipped = nlohmann::json::array();
  for (const auto& p : c.probes)
    probes.push_back({{"x", to_json(p.x)}, {"r", p.r}, {"competitor", p.competitor}, {"gap", p.gap}, {"raw_gap", p.raw_gap}});
  for (const auto& s : c.skipped) skipped.push_back({{"x", to_json(s.x)}, {"r", s.r}, {"reason", s.reason}});
  return {{"kappa_hat", c.kappa_hat}, {"alpha", c.alpha}, {"probes", probes}, {"skipped", skipped}};
}

nlohmann::json to_json(const AcfSweep& s) {
  nlohmann::json radii = nlohmann::json::array();
  for (std::size_t i = 0; i < s.radii.size(); ++i)
    radii.push_back({{"r", s.radii[i]},
                     {"phi_plus", s.values[i].phi_plus},
                     {"phi_minus", s.values[i].phi_minus},
                     {"phi", s.values[i].phi}});
  nlohmann::json out = {{"anchor", to_json(s.anchor)},
                        {"anchor_value", s.anchor_value},
                        {"anchor_tolerance", s.anchor_tolerance},
                        {"delta", s.delta},
                        {"alpha", s.alpha},
                        {"fitted_constant", s.fitted_constant},
                        {"constant_proxy", s.constant_proxy},
                        {"convention_extended", s.convention_extended},
                        {"sweep", radii}};
  out["kernel_normalization"] = s.kernel_normalization ? nlohmann::json(*s.kernel_normalization) : nlohmann::json();
  return out;
}

nlohmann::json to_json(const LogGrowth& g) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : g.rows) rows.push_back({{"s", r.s}, {"omega", r.omega}, {"margin", r.margin}});
  return {{"fitted_constant", g.fitted_constant}, {"rows", rows}};
}

nlohmann::json to_json(const HolderReport& r) {
  return {{"center", to_json(r.center)},         {"radius", r.radius},
          {"target_exponent", r.target_exponent}, {"fitted_exponent", r.fitted_exponent},
          {"seminorm", r.seminorm},               {"constant_gradient", r.constant_gradient},
          {"pass", r.pass}};
}

nlohmann::json to_json(const LipschitzReport& r) {
  return {{"lipschitz", r.lipschitz}, {"omega_2r0", r.omega_2r0}, {"ratio", r.ratio}};
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRow>& rows, double delta) {
  const int dim = rows.empty() ? 2 : static_cast<int>(rows.front().probe.x.size());
  for (int a = 0; a < dim; ++a) out << 'x' << a << ',';
  out << "r,omega,b,b_plus,g_member,margin1,margin2,margin3,tau,c0,c1,r0,delta,alpha,applicable,notes\n";
  for (const auto& row : rows) {
    for (int a = 0; a < dim; ++a) out << format_number(row.probe.x[a]) << ',';
    const auto& g = row.g;
    const auto& p = row.params;
    out << format_number(row.probe.r) << ',' << format_number(row.omega) << ',' << format_number(row.b) << ','
        << format_number(row.b_plus) << ',' << (g.member ? 1 : 0) << ',' << format_number(g.containment_margin)
        << ',' << format_number(g.b_margin) << ',' << format_number(g.b_plus_margin) << ','
        << format_number(p.tau) << ',' << format_number(p.c0) << ',' << format_number(p.c1) << ','
        << format_number(p.r0) << ',' << format_number(delta) << ',' << format_number(p.alpha) << ','
        << (g.applicable ? 1 : 0) << ',' << csv_field(row.notes) << '\n';
  }
}

}  // namespace fblab
