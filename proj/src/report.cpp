#include "fuelgrid/verify.hpp"

#include "fuelgrid/config.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>

namespace fuelgrid {

namespace {

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

void write_suite_json(std::ostream& os, const VerificationSuiteReport& report, const std::string& timestamp) {
  Json entries = Json::array();
  Json runtimes = Json::object();
  for (const auto& e : report.entries) {
    entries.push_back({{"name", e.name},
                       {"instance", e.instance},
                       {"statistic", finite_or_null(e.statistic)},
                       {"tolerance", finite_or_null(e.tolerance)},
                       {"pass", e.pass},
                       {"detail", e.detail}});
    runtimes[e.instance + "/" + e.name] = e.runtime_seconds;
  }
  Json out{{"passed", report.passed()},
           {"entries", entries},
           {"metadata", {{"timestamp", timestamp}, {"runtime_seconds", runtimes}}}};
  os << out.dump(2) << '\n';
}

void write_suite_table(std::ostream& os, const VerificationSuiteReport& report) {
  std::size_t wn = 4, wi = 8;
  for (const auto& e : report.entries) {
    wn = std::max(wn, e.name.size());
    wi = std::max(wi, e.instance.size());
  }
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return std::string(buf);
  };
  os << std::left << std::setw(static_cast<int>(wi)) << "instance" << "  " << std::setw(static_cast<int>(wn)) << "test"
     << "  " << std::setw(11) << "statistic" << "  " << std::setw(11) << "tolerance" << "  result\n";
  for (const auto& e : report.entries)
    os << std::left << std::setw(static_cast<int>(wi)) << e.instance << "  " << std::setw(static_cast<int>(wn))
       << e.name << "  " << std::setw(11) << num(e.statistic) << "  " << std::setw(11) << num(e.tolerance) << "  "
       << (e.pass ? "pass" : "FAIL") << (e.detail.empty() ? "" : "  " + e.detail) << '\n';
  os << (report.passed() ? "suite passed" : "suite FAILED") << " (" << report.entries.size() << " checks)\n";
}

}  // namespace fuelgrid
