#pragma once

// JSON and CSV forms of certificates, ACF sweeps and diagnostics rows.

#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "fblab/diagnostics.hpp"

namespace fblab {

nlohmann::json to_json(const Point& p);
nlohmann::json to_json(const MinimalityCertificate& c);
nlohmann::json to_json(const AcfSweep& s);
nlohmann::json to_json(const LogGrowth& g);
nlohmann::json to_json(const HolderReport& r);
nlohmann::json to_json(const LipschitzReport& r);

/// Shortest decimal that reads back to the same double; "inf", "-inf", "nan" otherwise.
std::string format_number(double v);

/// Header x0,x1[,x2],r,omega,b,b_plus,g_member,margin1,margin2,margin3 followed by the
/// parameters tau,c0,c1,r0,delta,alpha and applicable,notes.  margin1 is the containment
/// margin, margin2 the b test, margin3 the b^+ test.
void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRow>& rows, double delta);

}  // namespace fblab
