#pragma once

// MATPOWER case files (and an equivalent JSON mirror) to PowerNetwork.
//
// Only the subset needed by the lossless model is understood: the scalar
// `mpc.baseMVA = ...;` and the numeric matrices `mpc.bus`, `mpc.gen` and
// `mpc.branch`. Everything else in the file is skipped.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "loadshed/error.hpp"
#include "loadshed/linalg.hpp"
#include "loadshed/netmodel.hpp"

namespace loadshed {

using Table = std::vector<Vector>;

// MATPOWER column positions (0-based).
namespace col {
inline constexpr std::size_t kBusId = 0;
inline constexpr std::size_t kBusType = 1;
inline constexpr std::size_t kBusPd = 2;
inline constexpr std::size_t kGenBus = 0;
inline constexpr std::size_t kGenPg = 1;
inline constexpr std::size_t kGenStatus = 7;
inline constexpr std::size_t kBranchFrom = 0;
inline constexpr std::size_t kBranchTo = 1;
inline constexpr std::size_t kBranchR = 2;
inline constexpr std::size_t kBranchX = 3;
inline constexpr std::size_t kBranchStatus = 10;
}  // namespace col

inline constexpr std::size_t kMinBusColumns = 13;
inline constexpr std::size_t kMinGenColumns = 10;  // legacy version-1 width; v2 has 21
inline constexpr std::size_t kMinBranchColumns = 13;

struct RawCase {
  double base_mva = 100.0;
  Table bus;
  Table gen;
  Table branch;

  bool gen_in_service(std::size_t row) const { return gen[row][col::kGenStatus] > 0.0; }
  bool branch_in_service(std::size_t row) const { return branch[row][col::kBranchStatus] != 0.0; }

  friend bool operator==(const RawCase&, const RawCase&) = default;
};

enum class RebalancePolicy {
  kProportional,  // scale every positive injection by total_load / total_generation
  kSlack,         // the largest positive injection absorbs the whole mismatch
};

inline std::string to_string(RebalancePolicy p) {
  return p == RebalancePolicy::kProportional ? "proportional" : "slack";
}

inline RebalancePolicy parse_rebalance_policy(std::string_view s) {
  if (s == "proportional") return RebalancePolicy::kProportional;
  if (s == "slack") return RebalancePolicy::kSlack;
  throw Error("unknown rebalance policy '" + std::string(s) + "'");
}

// Checks unique bus ids and that every gen/branch references a known bus.
inline void validate_case(const RawCase& raw) {
  if (!(raw.base_mva > 0.0)) throw NetworkError("baseMVA must be positive");
  std::set<double> ids;
  for (std::size_t r = 0; r < raw.bus.size(); ++r) {
    const double id = raw.bus[r][col::kBusId];
    if (id != std::floor(id)) throw NetworkError("bus row " + std::to_string(r + 1) + ": non-integer bus id");
    if (!ids.insert(id).second)
      throw NetworkError("duplicate bus id " + std::to_string(static_cast<long long>(id)));
  }
  for (std::size_t r = 0; r < raw.gen.size(); ++r)
    if (!ids.count(raw.gen[r][col::kGenBus]))
      throw NetworkError("gen row " + std::to_string(r + 1) + " references an unknown bus");
  for (std::size_t r = 0; r < raw.branch.size(); ++r)
    if (!ids.count(raw.branch[r][col::kBranchFrom]) || !ids.count(raw.branch[r][col::kBranchTo]))
      throw NetworkError("branch row " + std::to_string(r + 1) + " references an unknown bus");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

struct MatrixReader {
  std::string name;
  std::size_t start_line = 0;
  Table rows;
  Vector current;
  std::size_t current_line = 0;

  void end_row(std::size_t line) {
    if (current.empty()) return;
    if (!rows.empty() && current.size() != rows.front().size())
      throw ParseError("ragged row in mpc." + name + ": " + std::to_string(current.size()) +
                           " columns, expected " + std::to_string(rows.front().size()),
                       current_line ? current_line : line);
    rows.push_back(std::move(current));
    current.clear();
  }

  // Consumes one line of matrix body; returns true when the closing ']' is seen.
  bool feed(std::string_view text, std::size_t line) {
    std::size_t i = 0;
    while (i < text.size()) {
      const char ch = text[i];
      if (ch == ' ' || ch == '\t' || ch == '\r' || ch == ',') {
        ++i;
      } else if (ch == ';') {
        end_row(line);
        ++i;
      } else if (ch == ']') {
        end_row(line);
        return true;
      } else if (text.substr(i, 3) == "...") {
        return false;  // continuation
      } else {
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r' &&
               text[j] != ',' && text[j] != ';' && text[j] != ']')
          ++j;
        const auto tok = text.substr(i, j - i);
        double v = 0.0;
        if (!parse_number(tok, v))
          throw ParseError("non-numeric token '" + std::string(tok) + "' in mpc." + name, line);
        if (current.empty()) current_line = line;
        current.push_back(v);
        i = j;
      }
    }
    end_row(line);  // newline terminates a row
    return false;
  }
};

inline void check_width(const Table& t, std::size_t min_cols, const std::string& name,
                        std::size_t line) {
  if (!t.empty() && t.front().size() < min_cols)
    throw ParseError("mpc." + name + " has " + std::to_string(t.front().size()) +
                         " columns, need at least " + std::to_string(min_cols),
                     line);
}

}  // namespace detail

// Parses MATPOWER case text. Comments start at '%'; matrix rows end at ';' or
// a newline. Errors carry the 1-based line number.
inline RawCase parse_case(std::string_view text) {
  RawCase raw;
  bool have_base = false;
  std::map<std::string, std::size_t> section_line;
  std::optional<detail::MatrixReader> open;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto pct = line.find('%'); pct != std::string_view::npos) line = line.substr(0, pct);

    if (open) {
      if (open->feed(line, line_no)) {
        auto& target = open->name == "bus" ? raw.bus : open->name == "gen" ? raw.gen : raw.branch;
        target = std::move(open->rows);
        open.reset();
      }
      continue;
    }

    const auto t = detail::trim(line);
    if (t.rfind("mpc.", 0) != 0) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string name(detail::trim(t.substr(4, eq - 4)));
    auto rhs = detail::trim(t.substr(eq + 1));

    if (name == "baseMVA") {
      if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
      rhs = detail::trim(rhs);
      if (!detail::parse_number(rhs, raw.base_mva))
        throw ParseError("non-numeric baseMVA '" + std::string(rhs) + "'", line_no);
      have_base = true;
    } else if (name == "bus" || name == "gen" || name == "branch") {
      if (rhs.empty() || rhs.front() != '[')
        throw ParseError("mpc." + name + " is not a bracketed matrix", line_no);
      if (section_line.count(name)) throw ParseError("duplicate section mpc." + name, line_no);
      section_line[name] = line_no;
      open.emplace();
      open->name = name;
      open->start_line = line_no;
      if (open->feed(rhs.substr(1), line_no)) {
        auto& target = name == "bus" ? raw.bus : name == "gen" ? raw.gen : raw.branch;
        target = std::move(open->rows);
        open.reset();
      }
    }
  }
  if (open)
    throw ParseError("unterminated matrix mpc." + open->name + " (opened on line " +
                         std::to_string(open->start_line) + ")",
                     line_no);
  if (!have_base) throw ParseError("missing section mpc.baseMVA", line_no);
  for (const char* s : {"bus", "gen", "branch"})
    if (!section_line.count(s)) throw ParseError(std::string("missing section mpc.") + s, line_no);

  detail::check_width(raw.bus, kMinBusColumns, "bus", section_line["bus"]);
  detail::check_width(raw.gen, kMinGenColumns, "gen", section_line["gen"]);
  detail::check_width(raw.branch, kMinBranchColumns, "branch", section_line["branch"]);
  validate_case(raw);
  return raw;
}

// MATPOWER text for the numeric content of `raw`; parse_case inverts it.
inline std::string serialize_case(const RawCase& raw, std::string_view function_name = "mpc_case") {
  std::ostringstream os;
  os << "function mpc = " << function_name << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << detail::format_number(raw.base_mva) << ";\n";
  auto emit = [&](const char* name, const Table& t) {
    os << "\nmpc." << name << " = [\n";
    for (const auto& row : t) {
      os << "\t";
      for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "\t" : "") << detail::format_number(row[j]);
      os << ";\n";
    }
    os << "];\n";
  };
  emit("bus", raw.bus);
  emit("gen", raw.gen);
  emit("branch", raw.branch);
  return os.str();
}

// JSON mirror: {"base_mva": ..., "bus": [[...]], "gen": [[...]], "branch": [[...]]}.
inline RawCase parse_case_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
    throw ParseError(std::string("invalid JSON: ") + e.what(), line);
  }
  RawCase raw;
  auto table = [&](const char* key, std::size_t min_cols) {
    if (!j.contains(key)) throw ParseError(std::string("missing section ") + key, 0);
    Table t;
    for (const auto& row : j.at(key)) {
      Vector r;
      for (const auto& v : row) {
        if (!v.is_number()) throw ParseError(std::string("non-numeric entry in ") + key, 0);
        r.push_back(v.get<double>());
      }
      if (!t.empty() && r.size() != t.front().size())
        throw ParseError(std::string("ragged row in ") + key, 0);
      t.push_back(std::move(r));
    }
    if (!t.empty() && t.front().size() < min_cols)
      throw ParseError(std::string(key) + " has too few columns", 0);
    return t;
  };
  if (!j.contains("base_mva") || !j.at("base_mva").is_number())
    throw ParseError("missing section base_mva", 0);
  raw.base_mva = j.at("base_mva").get<double>();
  raw.bus = table("bus", kMinBusColumns);
  raw.gen = table("gen", kMinGenColumns);
  raw.branch = table("branch", kMinBranchColumns);
  validate_case(raw);
  return raw;
}

// One matrix row per line keeps the mirror diffable against the .m source.
inline std::string to_json(const RawCase& raw, std::string_view provenance = {}) {
  std::string out = "{\n";
  if (!provenance.empty()) out += "  \"provenance\": " + nlohmann::json(std::string(provenance)).dump() + ",\n";
  out += "  \"base_mva\": " + nlohmann::json(raw.base_mva).dump();
  const auto table = [&](const char* name, const Table& t) {
    out += ",\n  \"" + std::string(name) + "\": [";
    for (std::size_t r = 0; r < t.size(); ++r) out += (r ? ",\n    " : "\n    ") + nlohmann::json(t[r]).dump();
    out += t.empty() ? "]" : "\n  ]";
  };
  table("bus", raw.bus);
  table("gen", raw.gen);
  table("branch", raw.branch);
  return out + "\n}";
}

// Reads a .m or .json case from disk, choosing the parser by extension.
inline RawCase load_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open case file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  return json ? parse_case_json(text) : parse_case(text);
}

struct CaseSummary {
  std::size_t buses = 0;
  std::size_t branches = 0;           // rows in the branch table
  std::size_t in_service_branches = 0;
  std::size_t generator_buses = 0;    // distinct buses with an in-service generator
  std::size_t load_buses = 0;         // the remaining buses
};

inline CaseSummary summarize(const RawCase& raw) {
  CaseSummary s;
  s.buses = raw.bus.size();
  s.branches = raw.branch.size();
  for (std::size_t r = 0; r < raw.branch.size(); ++r) s.in_service_branches += raw.branch_in_service(r);
  std::set<double> gen_buses;
  for (std::size_t r = 0; r < raw.gen.size(); ++r)
    if (raw.gen_in_service(r)) gen_buses.insert(raw.gen[r][col::kGenBus]);
  s.generator_buses = gen_buses.size();
  s.load_buses = s.buses - s.generator_buses;
  return s;
}

// A network together with the bookkeeping needed to report results in the
// case file's own numbering.
struct CaseNetwork {
  PowerNetwork net;
  std::vector<long long> bus_ids;     // MATPOWER id of each bus position
  std::vector<std::size_t> line_rows; // 0-based branch-table row of each line
  RebalancePolicy policy = RebalancePolicy::kProportional;
  double raw_imbalance = 0.0;         // 1'P before rebalancing, per-unit
};

// Applies the rebalance policy in place so that 1'P = 0.
inline void rebalance(Vector& p, RebalancePolicy policy) {
  double gen = 0.0, load = 0.0;
  for (double x : p) (x > 0.0 ? gen : load) += x;
  load = -load;
  if (!(load > 0.0)) throw NetworkError("total load is zero");
  if (!(gen > 0.0)) throw NetworkError("rebalance infeasible: no positive injection");
  if (policy == RebalancePolicy::kProportional) {
    const double factor = load / gen;
    for (auto& x : p)
      if (x > 0.0) x *= factor;
  } else {
    std::size_t slack = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[slack]) slack = i;
    p[slack] -= gen - load;
    if (!(p[slack] > 0.0))
      throw NetworkError("rebalance infeasible: slack bus would become a load");
  }
  // Fold the rounding residue into the largest injection so 1'P is as close
  // to zero as floating point allows.
  std::size_t big = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[big]) big = i;
  p[big] -= sum(p);
}

inline CaseNetwork build_network(const RawCase& raw,
                                 RebalancePolicy policy = RebalancePolicy::kProportional) {
  validate_case(raw);
  std::map<double, std::size_t> index;
  std::vector<long long> ids;
  for (std::size_t r = 0; r < raw.bus.size(); ++r) {
    index[raw.bus[r][col::kBusId]] = r;
    ids.push_back(static_cast<long long>(raw.bus[r][col::kBusId]));
  }
  const std::size_t n = raw.bus.size();

  Vector p(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) p[r] = -raw.bus[r][col::kBusPd];
  for (std::size_t r = 0; r < raw.gen.size(); ++r)
    if (raw.gen_in_service(r)) p[index.at(raw.gen[r][col::kGenBus])] += raw.gen[r][col::kGenPg];
  for (auto& x : p) x /= raw.base_mva;

  std::vector<Line> lines;
  Vector admittance;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < raw.branch.size(); ++r) {
    if (!raw.branch_in_service(r)) continue;
    const double x = raw.branch[r][col::kBranchX];
    if (!(x > 0.0))
      throw NetworkError("branch row " + std::to_string(r + 1) + " has reactance x <= 0");
    lines.push_back({index.at(raw.branch[r][col::kBranchFrom]), index.at(raw.branch[r][col::kBranchTo])});
    admittance.push_back(1.0 / x);
    rows.push_back(r);
  }

  const double imbalance = sum(p);
  rebalance(p, policy);
  CaseNetwork out{PowerNetwork::create(n, std::move(lines), std::move(admittance), std::move(p), raw.base_mva),
                  std::move(ids), std::move(rows), policy, imbalance};
  return out;
}

}  // namespace loadshed
