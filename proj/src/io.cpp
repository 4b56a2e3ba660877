#include "glmtilt/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <algorithm>
#include <limits>

namespace glmtilt::io {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

void dump_rec(const Json& j, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent) * (depth + 1), ' ') : "";
  const std::string pad_close = indent > 0 ? std::string(static_cast<std::size_t>(indent) * depth, ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  const char* colon = indent > 0 ? ": " : ":";
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad;
        out += Json(it.key()).dump();
        out += colon;
        dump_rec(it.value(), indent, depth + 1, out);
      }
      out += nl;
      out += pad_close;
      out += "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[";
      out += nl;
      bool first = true;
      for (const auto& v : j) {
        if (!first) {
          out += ",";
          out += nl;
        }
        first = false;
        out += pad;
        dump_rec(v, indent, depth + 1, out);
      }
      out += nl;
      out += pad_close;
      out += "]";
      return;
    }
    case Json::value_t::number_float: {
      const double x = j.get<double>();
      out += std::isfinite(x) ? format_double(x) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

double json_number(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string dump_json(const Json& j, int indent) {
  std::string out;
  dump_rec(j, indent, 0, out);
  out += "\n";
  return out;
}

Json to_json(const SolverConfig& c) {
  Json j;
  j["outer_count"] = c.outer_count;
  j["seed"] = c.seed;
  j["damping"] = c.damping;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  if (c.init) {
    j["init"] = {{"v_B", c.init->v_B}, {"c_B", c.init->c_B}, {"c_BBstar", c.init->c_BBstar}};
  }
  j["threads"] = c.threads;
  j["mc_check"] = c.mc_check;
  j["mc_tol"] = c.mc_tol;
  j["max_outer_count"] = c.max_outer_count;
  return j;
}

Json to_json(const SolutionRecord& r, const std::optional<SolverConfig>& config) {
  Json j;
  j["params"] = {{"kappa", r.params.kappa}, {"gamma2", r.params.gamma2}, {"delta", r.params.delta}};
  j["model"] = r.model;
  j["prior"] = r.prior;
  j["signal"] = r.signal;
  j["order"] = {{"v_B", r.order.v_B},
                {"c_B", r.order.c_B},
                {"c_BBstar", r.order.c_BBstar},
                {"a_dp", r.order.a_dp}};
  j["tilt"] = {{"r1", r.tilt.r1},       {"r2", r.tilt.r2},       {"r3", r.tilt.r3},
               {"t_gamma", r.tilt.t_gamma}, {"alpha", r.tilt.alpha}, {"sigma", r.tilt.sigma},
               {"v", r.tilt.v}};
  j["c_mse"] = r.c_mse;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  j["seed"] = r.seed;
  j["outer_count"] = r.outer_count;
  j["status"] = to_string(r.status);
  j["mc_shift"] = r.mc_shift;
  j["message"] = r.message;
  if (config) j["config"] = to_json(*config);
  return j;
}

SolutionRecord record_from_json(const Json& j) {
  try {
    SolutionRecord r;
    const Json& p = j.at("params");
    r.params.kappa = p.at("kappa").get<double>();
    r.params.gamma2 = p.at("gamma2").get<double>();
    r.params.delta = p.at("delta").get<double>();
    r.model = j.at("model").get<std::string>();
    r.prior = j.at("prior").get<std::string>();
    r.signal = j.at("signal").get<std::string>();
    const Json& o = j.at("order");
    r.order = {o.at("v_B").get<double>(), o.at("c_B").get<double>(),
               o.at("c_BBstar").get<double>(), o.at("a_dp").get<double>()};
    const Json& t = j.at("tilt");
    r.tilt = TiltConstants::from_scores(t.at("r1").get<double>(), t.at("r2").get<double>(),
                                        t.at("r3").get<double>(), t.at("t_gamma").get<double>());
    r.c_mse = j.at("c_mse").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.residual = json_number(j.at("residual"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.outer_count = j.at("outer_count").get<Eigen::Index>();
    const std::string status = j.at("status").get<std::string>();
    if (status == "converged") {
      r.status = SolveStatus::Converged;
    } else if (status == "max_iterations") {
      r.status = SolveStatus::MaxIterations;
    } else {
      r.status = SolveStatus::Failed;
    }
    r.mc_shift = json_number(j.value("mc_shift", Json()));
    r.message = j.value("message", std::string());
    return r;
  } catch (const nlohmann::json::exception& err) {
    throw InvalidArgument(std::string("malformed solution record: ") + err.what());
  }
}

Json to_json(const ComparisonReport& r) {
  Json j;
  j["ks_distance"] = r.ks_distance;
  j["wasserstein1"] = r.wasserstein1;
  j["n_samples"] = r.n_samples;
  j["n_theory"] = r.n_theory;
  j["coordinate"] = r.coordinate;
  j["mode"] = r.mode;
  j["z_matched"] = r.z_matched;
  j["qq_r2_identity"] = r.qq_r2_identity;
  j["qq_r2_ols"] = r.qq_r2_ols;
  Json qq = Json::array();
  for (const auto& [t, e] : r.qq_pairs) qq.push_back({t, e});
  j["qq_pairs"] = qq;
  Json meta = Json::object();
  for (const auto& [k, v] : r.metadata) meta[k] = v;
  j["metadata"] = meta;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw InvalidArgument("failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InvalidArgument("CSV has no column '" + name + "'");
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& cell = rows.at(row).at(column(name));
  if (cell == "nan" || cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    return std::stod(cell);
  } catch (const std::exception&) {
    throw InvalidArgument("CSV cell '" + cell + "' in column '" + name + "' is not a number");
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("CSV '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    t.rows.push_back(split_line(line));
    if (t.rows.back().size() != t.header.size()) {
      throw InvalidArgument("CSV '" + path + "' has a row of the wrong width");
    }
  }
  return t;
}

std::string to_csv(const CsvTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

void write_csv(const std::string& path, const CsvTable& t) { write_text(path, to_csv(t)); }

CsvTable mse_table(const std::vector<MseRow>& rows) {
  CsvTable t;
  t.header = {"kappa", "c",  "v_B",   "c_B",   "c_BBstar", "r1",
              "r2",    "r3", "alpha", "sigma", "v",        "status"};
  for (const MseRow& r : rows) {
    t.rows.push_back({format_double(r.kappa), format_double(r.c), format_double(r.v_B),
                      format_double(r.c_B), format_double(r.c_BBstar), format_double(r.r1),
                      format_double(r.r2), format_double(r.r3), format_double(r.alpha),
                      format_double(r.sigma), format_double(r.v), r.status});
  }
  return t;
}

CsvTable bayes_table(const std::vector<BayesRow>& rows) {
  const bool mle = std::any_of(rows.begin(), rows.end(),
                               [](const BayesRow& r) { return r.alpha_mle.has_value(); });
  CsvTable t;
  t.header = {"kappa", "alpha_bayes", "sigma_bayes", "mse_bayes", "debiased_mse_bayes"};
  if (mle) {
    for (const char* h : {"alpha_mle", "sigma_mle", "mse_mle", "debiased_mse_mle"}) {
      t.header.push_back(h);
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const BayesRow& r : rows) {
    std::vector<std::string> cells = {format_double(r.kappa), format_double(r.alpha_bayes),
                                      format_double(r.sigma_bayes), format_double(r.mse),
                                      format_double(r.debiased_mse)};
    if (mle) {
      const double a = r.alpha_mle.value_or(nan);
      const double s = r.sigma_mle.value_or(nan);
      cells.push_back(format_double(a));
      cells.push_back(format_double(s));
      cells.push_back(format_double((1 - a) * (1 - a) + s * s));
      cells.push_back(format_double(std::abs(a) < 1e-8 ? nan : (s / a) * (s / a)));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable chain_table(const ChainOutput& c) {
  CsvTable t;
  t.header = {"chain_id", "draw_index"};
  for (Eigen::Index j : c.tracked_coords) t.header.push_back("beta_" + std::to_string(j));
  t.header.insert(t.header.end(), {"q11", "q1star", "q12"});
  for (Eigen::Index d = 0; d < c.q11.size(); ++d) {
    std::vector<std::string> row = {std::to_string(c.chain_id), std::to_string(d)};
    for (Eigen::Index k = 0; k < c.draws.cols(); ++k) row.push_back(format_double(c.draws(d, k)));
    row.push_back(format_double(c.q11(d)));
    row.push_back(format_double(c.q1star(d)));
    row.push_back(format_double(c.q12(d)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

ChainOutput chain_from_table(const CsvTable& t) {
  ChainOutput c;
  for (const std::string& h : t.header) {
    if (h.rfind("beta_", 0) == 0) {
      try {
        c.tracked_coords.push_back(std::stol(h.substr(5)));
      } catch (const std::exception&) {
        throw InvalidArgument("chain CSV: bad column '" + h + "'");
      }
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(t.rows.size());
  c.draws.resize(n, static_cast<Eigen::Index>(c.tracked_coords.size()));
  c.q11.resize(n);
  c.q1star.resize(n);
  c.q12.resize(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    for (std::size_t k = 0; k < c.tracked_coords.size(); ++k) {
      c.draws(d, static_cast<Eigen::Index>(k)) =
          t.number(d, "beta_" + std::to_string(c.tracked_coords[k]));
    }
    c.q11(d) = t.number(d, "q11");
    c.q1star(d) = t.number(d, "q1star");
    c.q12(d) = t.has_column("q12") ? t.number(d, "q12") : std::numeric_limits<double>::quiet_NaN();
  }
  if (n > 0) c.chain_id = static_cast<int>(t.number(0, "chain_id"));
  return c;
}

CsvTable qq_table(const std::vector<std::pair<double, double>>& qq) {
  CsvTable t;
  t.header = {"theoretical_q", "empirical_q"};
  for (const auto& [a, b] : qq) t.rows.push_back({format_double(a), format_double(b)});
  return t;
}

CsvTable density_table(const Eigen::VectorXd& grid, const Eigen::VectorXd& density) {
  CsvTable t;
  t.header = {"b", "density"};
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    t.rows.push_back({format_double(grid(i)), format_double(density(i))});
  }
  return t;
}

std::vector<MleConstants> read_mle_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<MleConstants> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out.push_back({t.number(i, "kappa"), t.number(i, "alpha_mle"), t.number(i, "sigma_mle")});
  }
  return out;
}

}  // namespace glmtilt::io
