#pragma once

// Trace files and run reports.
//
// A trace file has the header line
//   IterNo ObjVal theta_res z_res gam_res prim_res
// followed by one whitespace-separated row per recorded iteration. Numbers
// use the shortest representation that round-trips.

#include <cstddef>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "loadshed/caseio.hpp"
#include "loadshed/error.hpp"
#include "loadshed/palm.hpp"

namespace loadshed {

inline constexpr const char* kTraceHeader = "IterNo ObjVal theta_res z_res gam_res prim_res";

inline void write_trace(std::ostream& os, const std::vector<IterationRecord>& trace) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace) {
    os << r.iter << ' ' << detail::format_number(r.obj) << ' ' << detail::format_number(r.theta_res) << ' '
       << detail::format_number(r.z_res) << ' ' << detail::format_number(r.gam_res) << ' '
       << detail::format_number(r.prim_res) << '\n';
  }
}

inline std::vector<IterationRecord> read_trace(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line) != kTraceHeader) throw ParseError("missing trace header", lineno);

  std::vector<IterationRecord> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::istringstream row(line);
    std::string tok[6];
    for (auto& t : tok)
      if (!(row >> t)) throw ParseError("trace row needs 6 columns", lineno);
    std::string extra;
    if (row >> extra) throw ParseError("trace row has more than 6 columns", lineno);
    IterationRecord r;
    double iter = 0.0;
    double* fields[6] = {&iter, &r.obj, &r.theta_res, &r.z_res, &r.gam_res, &r.prim_res};
    for (int i = 0; i < 6; ++i)
      if (!detail::parse_number(tok[i], *fields[i])) throw ParseError("bad number '" + tok[i] + "'", lineno);
    if (iter < 0.0 || iter != static_cast<double>(static_cast<std::size_t>(iter)))
      throw ParseError("IterNo must be a nonnegative integer", lineno);
    r.iter = static_cast<std::size_t>(iter);
    out.push_back(r);
  }
  return out;
}

// One row of the summary table.
struct ShedRow {
  std::size_t k = 0;
  double rho = 0.0;
  double shed_mw = 0.0;
  std::optional<double> percent;
  std::vector<std::size_t> lines;  // 1-based branch-table rows
  bool feasible = false;
};

// Branch-table rows (1-based) of the removed lines, ascending.
inline std::vector<std::size_t> removed_branch_rows(const CaseNetwork& cn, const SolveReport& rep) {
  std::vector<std::size_t> rows;
  for (std::size_t l : rep.removed_lines) rows.push_back(cn.line_rows.at(l) + 1);
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline ShedRow make_row(const CaseNetwork& cn, const SolveReport& rep) {
  return {rep.config.k, rep.config.rho, rep.shed.mw, rep.shed.percent, removed_branch_rows(cn, rep),
          rep.feasibility.feasible};
}

inline void write_table(std::ostream& os, const std::vector<ShedRow>& rows) {
  os << std::left << std::setw(4) << "K" << std::setw(10) << "rho" << std::setw(14) << "Shed (MW)"
     << std::setw(10) << "Shed (%)" << "Lines removed\n";
  for (const auto& r : rows) {
    std::ostringstream mw, pct, rho, lines;
    mw << std::fixed << std::setprecision(2) << r.shed_mw;
    if (r.percent) pct << std::fixed << std::setprecision(2) << *r.percent;
    else pct << "n/a";
    rho << std::setprecision(3) << r.rho;
    for (std::size_t i = 0; i < r.lines.size(); ++i) lines << (i ? ", " : "") << r.lines[i];
    if (r.lines.empty()) lines << "-";
    if (!r.feasible) lines << "  (infeasible)";
    os << std::left << std::setw(4) << r.k << std::setw(10) << rho.str() << std::setw(14) << mw.str()
       << std::setw(10) << pct.str() << lines.str() << '\n';
  }
}

inline nlohmann::ordered_json config_json(const SolverConfig& cfg) {
  nlohmann::ordered_json j;
  j["k"] = cfg.k;
  j["rho"] = cfg.rho;
  j["r1"] = cfg.r1;
  j["r2"] = cfg.r2;
  j["r3"] = cfg.r3;
  j["max_iters"] = cfg.max_iters;
  j["primal_tol"] = cfg.primal_tol;
  j["dual_tol"] = cfg.dual_tol;
  j["inner_tol"] = cfg.inner_tol;
  j["init"] = cfg.initial ? std::string("custom") : to_string(cfg.init);
  j["rebalance"] = to_string(cfg.rebalance);
  j["trace_every"] = cfg.trace_every;
  return j;
}

inline nlohmann::ordered_json report_json(const std::string& case_name, const CaseNetwork& cn,
                                          const SolveReport& rep) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["case"] = case_name;
  j["config"] = config_json(rep.config);
  j["total_load_mw"] = cn.net.total_load() * cn.net.base_mva();
  j["shed_mw"] = rep.shed.mw;
  j["shed_percent"] = rep.shed.percent ? ordered_json(*rep.shed.percent) : ordered_json(nullptr);
  j["removed_lines"] = removed_branch_rows(cn, rep);
  ordered_json branches = ordered_json::array();
  for (std::size_t l : rep.removed_lines) {
    const Line& ln = cn.net.lines()[l];
    branches.push_back({{"line", cn.line_rows[l] + 1},
                        {"from_bus", cn.bus_ids[ln.from]},
                        {"to_bus", cn.bus_ids[ln.to]}});
  }
  j["removed_branches"] = branches;
  j["objective"] = rep.objective;
  j["iterations"] = rep.iterations;
  j["stopped_on_tolerance"] = rep.stopped_on_tolerance;
  j["inner_nonconverged"] = rep.inner_nonconverged;
  ordered_json viol = ordered_json::array();
  for (const auto& v : rep.feasibility.violations)
    viol.push_back({{"constraint", v.constraint}, {"magnitude", v.magnitude}});
  j["feasibility"] = {{"feasible", rep.feasibility.feasible}, {"violations", viol}};
  j["final_state"] = {{"bus_ids", cn.bus_ids},
                      {"gamma", rep.final_state.gamma},
                      {"z", rep.final_state.z},
                      {"theta", rep.final_state.theta}};
  ordered_json tr;
  for (const char* key : {"IterNo", "ObjVal", "theta_res", "z_res", "gam_res", "prim_res"})
    tr[key] = ordered_json::array();
  for (const auto& r : rep.trace) {
    tr["IterNo"].push_back(r.iter);
    tr["ObjVal"].push_back(r.obj);
    tr["theta_res"].push_back(r.theta_res);
    tr["z_res"].push_back(r.z_res);
    tr["gam_res"].push_back(r.gam_res);
    tr["prim_res"].push_back(r.prim_res);
  }
  j["trace"] = tr;
  return j;
}

}  // namespace loadshed
