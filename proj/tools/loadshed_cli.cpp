// loadshed: worst-case load-shedding solver front end.
//
//   loadshed run --case ieee14 --k 1..5 --out results
//   loadshed validate ieee118
//   loadshed convert data/case14.m data/ieee14.json --provenance "..."

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "loadshed/caseio.hpp"
#include "loadshed/palm.hpp"
#include "loadshed/report.hpp"

namespace fs = std::filesystem;
using namespace loadshed;

namespace {

#ifndef LOADSHED_DATA_DIR
#define LOADSHED_DATA_DIR "data"
#endif

const std::vector<std::string> kBundled = {"ieee14", "ieee118", "toy2bus", "synth4bus"};

// A bundled name maps to <data dir>/<name>.json; anything else is a path.
std::string resolve_case(const std::string& arg) {
  if (std::find(kBundled.begin(), kBundled.end(), arg) == kBundled.end()) return arg;
  const char* env = std::getenv("LOADSHED_DATA_DIR");
  const fs::path dir = env && *env ? fs::path(env) : fs::path(LOADSHED_DATA_DIR);
  return (dir / (arg + ".json")).string();
}

std::string case_label(const std::string& arg) {
  if (std::find(kBundled.begin(), kBundled.end(), arg) != kBundled.end()) return arg;
  return fs::path(arg).stem().string();
}

std::size_t parse_count(const std::string& s) {
  std::size_t pos = 0;
  long long v = -1;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
  }
  if (v < 0 || pos != s.size()) throw Error("bad K value '" + s + "'");
  return static_cast<std::size_t>(v);
}

// "5", "1..5" or "1,3,5".
std::vector<std::size_t> parse_k_list(const std::string& spec) {
  std::vector<std::size_t> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_count(item));
      continue;
    }
    const std::size_t lo = parse_count(item.substr(0, dots));
    const std::size_t hi = parse_count(item.substr(dots + 2));
    if (hi < lo) throw Error("empty K range '" + item + "'");
    for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
  }
  if (out.empty()) throw Error("no K values given");
  return out;
}

std::vector<double> parse_rho_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!detail::parse_number(detail::trim(item), v) || !(v > 0.0))
      throw Error("bad rho value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error("no rho values given");
  return out;
}

struct RunOptions {
  std::string case_arg;
  std::string k_spec = "1";
  std::string rho_spec = "1e5";
  SolverConfig cfg;
  std::string rebalance = "proportional";
  std::string init = "flat";
  std::string out_dir = ".";
  std::vector<std::string> formats = {"trace", "table", "json"};
  unsigned jobs = 1;
  bool quiet = false;
};

struct Job {
  std::size_t k = 0;
  double rho = 0.0;
  std::string stem;
  std::optional<SolveReport> report;
  std::string error;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

int run(const RunOptions& opt) {
  const auto ks = parse_k_list(opt.k_spec);
  const auto rhos = parse_rho_list(opt.rho_spec);
  const RebalancePolicy policy = parse_rebalance_policy(opt.rebalance);
  const std::string label = case_label(opt.case_arg);
  const CaseNetwork cn = build_network(load_case_file(resolve_case(opt.case_arg)), policy);
  for (std::size_t k : ks)
    if (k > cn.net.num_lines())
      throw Error("K = " + std::to_string(k) + " exceeds the " + std::to_string(cn.net.num_lines()) + " lines");

  const auto want = [&](const char* f) {
    return std::find(opt.formats.begin(), opt.formats.end(), f) != opt.formats.end();
  };
  const fs::path out_dir(opt.out_dir);
  fs::create_directories(out_dir);

  std::vector<Job> jobs;
  for (double rho : rhos)
    for (std::size_t k : ks) {
      std::string stem = label + "_k" + std::to_string(k);
      if (rhos.size() > 1) stem += "_rho" + detail::format_number(rho);
      jobs.push_back({k, rho, stem, std::nullopt, {}});
    }

  std::mutex log_mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        SolverConfig cfg = opt.cfg;
        cfg.k = job.k;
        cfg.rho = job.rho;
        cfg.rebalance = policy;
        cfg.init = parse_init_policy(opt.init);
        SolveReport rep = solve(cn.net, cfg);
        if (want("trace")) {
          std::ostringstream ss;
          write_trace(ss, rep.trace);
          write_file(out_dir / (job.stem + ".txt"), ss.str());
        }
        if (want("json")) write_file(out_dir / (job.stem + ".json"), report_json(label, cn, rep).dump(2) + "\n");
        job.report = std::move(rep);
      } catch (const std::exception& e) {
        job.error = e.what();
      }
      if (!opt.quiet) {
        std::lock_guard lock(log_mu);
        std::cerr << job.stem << ": " << (job.error.empty() ? "done" : "FAILED: " + job.error) << '\n';
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<ShedRow> rows;
  int status = 0;
  for (const Job& job : jobs) {
    if (!job.report) {
      std::cerr << "error: " << job.stem << ": " << job.error << '\n';
      status = 1;
      continue;
    }
    rows.push_back(make_row(cn, *job.report));
  }
  std::ostringstream table;
  table << "case: " << label << "  buses: " << cn.net.num_buses() << "  lines: " << cn.net.num_lines()
        << "  total load: " << cn.net.total_load() * cn.net.base_mva() << " MW  rebalance: " << opt.rebalance
        << "  init: " << opt.init << "  iterations: " << opt.cfg.max_iters << '\n';
  write_table(table, rows);
  std::cout << table.str();
  if (want("table")) write_file(out_dir / (label + "_table.txt"), table.str());
  return status;
}

int validate(const std::string& case_arg, const std::string& rebalance) {
  const RawCase raw = load_case_file(resolve_case(case_arg));
  const CaseSummary sum = summarize(raw);
  const RebalancePolicy policy = parse_rebalance_policy(rebalance);
  const CaseNetwork cn = build_network(raw, policy);
  std::cout << cn.net.num_buses() << " buses, " << cn.net.num_lines() << " lines\n"
            << "branch rows: " << sum.branches << " (" << sum.in_service_branches << " in service)\n"
            << "generator buses: " << sum.generator_buses << ", load buses: " << sum.load_buses << '\n'
            << "total load: " << cn.net.total_load() * cn.net.base_mva() << " MW\n"
            << "balance residual before rebalancing: " << cn.raw_imbalance * cn.net.base_mva() << " MW\n"
            << "balance residual after " << rebalance << " rebalancing: "
            << loadshed::sum(cn.net.injection()) * cn.net.base_mva() << " MW\n";
  return 0;
}

int convert(const std::string& in, const std::string& out, const std::string& provenance) {
  const RawCase raw = load_case_file(in);
  const bool json = out.size() >= 5 && out.compare(out.size() - 5, 5, ".json") == 0;
  write_file(out, json ? to_json(raw, provenance) + "\n" : serialize_case(raw, fs::path(out).stem().string()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Worst-case load shedding under K line outages"};
  app.require_subcommand(1);

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "solve for one or more K and write traces and reports");
  run_cmd->add_option("--case", ro.case_arg, "case file (.m or .json) or bundled name: ieee14, ieee118, toy2bus, synth4bus")
      ->required();
  run_cmd->add_option("--k", ro.k_spec, "lines to remove: 5, 1..5 or 1,3,5")->capture_default_str();
  run_cmd->add_option("--rho", ro.rho_spec, "penalty weight, or a comma list for a sweep")->capture_default_str();
  run_cmd->add_option("--r1", ro.cfg.r1, "gamma step scale (> 1)")->capture_default_str();
  run_cmd->add_option("--r2", ro.cfg.r2, "z step scale (> 1)")->capture_default_str();
  run_cmd->add_option("--r3", ro.cfg.r3, "theta step scale (> 1)")->capture_default_str();
  run_cmd->add_option("--max-iters", ro.cfg.max_iters, "PALM iterations")->capture_default_str();
  run_cmd->add_option("--primal-tol", ro.cfg.primal_tol, "stop once prim_res is below this (0 = off)")
      ->capture_default_str();
  run_cmd->add_option("--dual-tol", ro.cfg.dual_tol, "stop once every dual residual is below this (0 = off)")
      ->capture_default_str();
  run_cmd->add_option("--inner-tol", ro.cfg.inner_tol, "KKT tolerance of the theta projection")->capture_default_str();
  run_cmd->add_option("--rebalance", ro.rebalance, "injection balancing rule")
      ->check(CLI::IsMember({"proportional", "slack"}))
      ->capture_default_str();
  run_cmd->add_option("--init", ro.init, "starting point: flat (gamma=1, z=0, theta=0) or flow")
      ->check(CLI::IsMember({"flat", "flow"}))
      ->capture_default_str();
  run_cmd->add_option("--trace-every", ro.cfg.trace_every, "record every n-th iteration")->capture_default_str();
  run_cmd->add_option("--out", ro.out_dir, "output directory")->capture_default_str();
  run_cmd->add_option("--format", ro.formats, "outputs to write: trace, table, json")
      ->check(CLI::IsMember({"trace", "table", "json"}))
      ->delimiter(',')
      ->capture_default_str();
  run_cmd->add_option("--jobs", ro.jobs, "parallel solves")->check(CLI::PositiveNumber)->capture_default_str();
  run_cmd->add_flag("--quiet", ro.quiet, "no per-solve progress on stderr");

  std::string v_case, v_rebalance = "proportional";
  auto* val_cmd = app.add_subcommand("validate", "parse a case and check the network invariants");
  val_cmd->add_option("case", v_case, "case file or bundled name")->required();
  val_cmd->add_option("--rebalance", v_rebalance)->check(CLI::IsMember({"proportional", "slack"}))->capture_default_str();

  std::string c_in, c_out, c_prov;
  auto* conv_cmd = app.add_subcommand("convert", "rewrite a case as .json or .m");
  conv_cmd->add_option("input", c_in)->required();
  conv_cmd->add_option("output", c_out)->required();
  conv_cmd->add_option("--provenance", c_prov, "note stored in the JSON mirror");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(ro);
    if (*val_cmd) return validate(v_case, v_rebalance);
    if (*conv_cmd) return convert(c_in, c_out, c_prov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
