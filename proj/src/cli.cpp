#include "mplnmix/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mplnmix/errors.hpp"
#include "mplnmix/evaluation.hpp"

namespace mplnmix {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<std::int64_t> parse_count(std::string_view token) {
  if (token.empty()) return std::nullopt;
  for (char ch : token) {
    if (ch < '0' || ch > '9') return std::nullopt;
  }
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
  return v;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open '" + path + "' for writing");
  return f;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

Vector to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix to_matrix(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != m.cols()) throw FormatError("ragged matrix in JSON");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("MPLNMIX_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

std::string replicate_stem(const std::string& dir, const std::string& prefix, int rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_rep%03d", rep);
  return (std::filesystem::path(dir) / (prefix + buf)).string();
}

std::string default_labels_path(const std::string& report_path) {
  std::filesystem::path p(report_path);
  if (p.extension() == ".json") p.replace_extension();
  return p.string() + "_labels.csv";
}

}  // namespace

CountMatrix parse_counts_csv(std::istream& in, bool has_header) {
  std::vector<std::int64_t> values;
  std::size_t d = 0;
  std::size_t n = 0;
  std::size_t line_no = 0;
  std::string line;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto cells = split_commas(view);
    if (d == 0) d = cells.size();
    if (cells.size() != d) {
      throw FormatError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(d));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_count(cells[c]);
      if (!v) {
        throw ParseError(line_no, c + 1,
                         "cell (" + std::to_string(line_no) + ", " + std::to_string(c + 1) + ") '" +
                             std::string(cells[c]) + "' is not a non-negative integer");
      }
      values.push_back(*v);
    }
    ++n;
  }
  if (n == 0) throw FormatError("no data rows");
  return CountMatrix(n, d, std::move(values));
}

CountMatrix ingest_csv(const std::string& path, bool has_header) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path + "'");
  return parse_counts_csv(f, has_header);
}

std::vector<int> read_labels_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot open '" + path + "'");
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    int v = 0;
    const char* first = view.data();
    if (!view.empty() && view.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, view.data() + view.size(), v);
    if (ec != std::errc() || ptr != view.data() + view.size()) {
      throw ParseError(line_no, 1, "label on line " + std::to_string(line_no) + " is not an integer");
    }
    labels.push_back(v);
  }
  return labels;
}

void write_counts_csv(const std::string& path, const CountMatrix& Y) {
  std::ofstream f = open_out(path);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    for (std::size_t j = 0; j < Y.cols(); ++j) {
      if (j) f << ',';
      f << Y(i, j);
    }
    f << '\n';
  }
}

void write_labels_csv(const std::string& path, const std::vector<int>& labels, int offset) {
  std::ofstream f = open_out(path);
  for (int l : labels) f << (l + offset) << '\n';
}

std::string data_checksum(const CountMatrix& Y) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::uint64_t v) {
    for (int k = 0; k < 8; ++k) {
      h ^= (v >> (8 * k)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(Y.rows());
  feed(Y.cols());
  for (auto v : Y.values()) feed(static_cast<std::uint64_t>(v));
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json(const RunReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json jc = {{"G", c.G}, {"model", c.model}, {"status", c.status}, {"iterations", c.iterations},
               {"converged", c.converged}};
    jc["bic"] = c.bic ? json(*c.bic) : json(nullptr);
    jc["elbo"] = c.elbo ? json(*c.elbo) : json(nullptr);
    if (!c.error.empty()) jc["error"] = c.error;
    cells.push_back(std::move(jc));
  }
  json comps = json::array();
  for (const auto& c : r.components) comps.push_back({{"mu", c.mu}, {"sigma", c.sigma}});
  return json{{"schema_version", r.schema_version},
              {"config", r.config},
              {"input", {{"n", r.n}, {"d", r.d}, {"checksum", r.data_checksum}}},
              {"cells", std::move(cells)},
              {"best",
               {{"cell", r.best_cell},
                {"G", r.best_G},
                {"model", r.best_model},
                {"bic", r.best_bic},
                {"elbo", r.best_elbo},
                {"iterations", r.best_iterations},
                {"converged", r.best_converged}}},
              {"labels", r.labels},
              {"params", {{"weights", r.weights}, {"components", std::move(comps)}, {"volumes", r.volumes}}},
              {"timings", r.timings}};
}

RunReport report_from_json(const json& j) {
  try {
    RunReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw FormatError("unsupported report schema_version " + std::to_string(r.schema_version));
    }
    r.config = j.at("config");
    r.n = j.at("input").at("n").get<std::size_t>();
    r.d = j.at("input").at("d").get<std::size_t>();
    r.data_checksum = j.at("input").at("checksum").get<std::string>();
    for (const auto& jc : j.at("cells")) {
      ReportCell c;
      c.G = jc.at("G").get<int>();
      c.model = jc.at("model").get<std::string>();
      c.status = jc.at("status").get<std::string>();
      c.iterations = jc.at("iterations").get<int>();
      c.converged = jc.at("converged").get<bool>();
      if (!jc.at("bic").is_null()) c.bic = jc.at("bic").get<double>();
      if (!jc.at("elbo").is_null()) c.elbo = jc.at("elbo").get<double>();
      if (jc.contains("error")) c.error = jc.at("error").get<std::string>();
      r.cells.push_back(std::move(c));
    }
    const json& b = j.at("best");
    r.best_cell = b.at("cell").get<std::size_t>();
    r.best_G = b.at("G").get<int>();
    r.best_model = b.at("model").get<std::string>();
    r.best_bic = b.at("bic").get<double>();
    r.best_elbo = b.at("elbo").get<double>();
    r.best_iterations = b.at("iterations").get<int>();
    r.best_converged = b.at("converged").get<bool>();
    r.labels = j.at("labels").get<std::vector<int>>();
    const json& p = j.at("params");
    r.weights = p.at("weights").get<std::vector<double>>();
    for (const auto& jc : p.at("components")) {
      r.components.push_back({jc.at("mu").get<std::vector<double>>(),
                              jc.at("sigma").get<std::vector<std::vector<double>>>()});
    }
    r.volumes = p.at("volumes").get<std::vector<double>>();
    r.timings = j.at("timings");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

RunReport make_report(const CountMatrix& Y, const FitConfig& config, const GridResult& grid,
                      const json& config_echo) {
  RunReport r;
  r.config = config_echo;
  r.n = Y.rows();
  r.d = Y.cols();
  r.data_checksum = data_checksum(Y);
  json cell_seconds = json::array();
  for (const auto& c : grid.cells) {
    ReportCell rc;
    rc.G = c.G;
    rc.model = std::string(to_string(c.model));
    rc.status = c.ok ? "ok" : "error";
    if (c.ok) {
      rc.bic = c.bic;
      rc.elbo = c.loglik;
    }
    rc.iterations = c.iterations;
    rc.converged = c.converged;
    rc.error = c.error;
    r.cells.push_back(std::move(rc));
    cell_seconds.push_back(c.seconds);
  }
  const GridCell& best = grid.cells[grid.best_index];
  r.best_cell = grid.best_index;
  r.best_G = best.G;
  r.best_model = std::string(to_string(best.model));
  r.best_bic = grid.best.bic;
  r.best_elbo = grid.best.loglik;
  r.best_iterations = grid.best.iterations;
  r.best_converged = grid.best.converged;
  for (int l : grid.best.labels) r.labels.push_back(l + 1);
  r.weights = from_vector(grid.best.params.weights);
  for (const auto& c : grid.best.params.components) r.components.push_back({from_vector(c.mu), from_matrix(c.sigma)});
  r.volumes = grid.best.covariance.volumes;
  double total = 0.0;
  for (double s : grid.init_seconds) total += s;
  for (const auto& c : grid.cells) total += c.seconds;
  r.timings = {{"threads", config.threads},
               {"init_seconds", grid.init_seconds},
               {"cell_seconds", std::move(cell_seconds)},
               {"cpu_seconds_total", total}};
  return r;
}

std::vector<int> parse_g_range(const std::string& text) {
  auto parse_int = [&](std::string_view s) {
    s = trim(s);
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < 1) {
      throw InvalidInput("invalid component range '" + text + "'");
    }
    return v;
  };
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) return {parse_int(text)};
  const int a = parse_int(std::string_view(text).substr(0, colon));
  const int b = parse_int(std::string_view(text).substr(colon + 1));
  if (b < a) throw InvalidInput("component range '" + text + "' is empty");
  std::vector<int> out;
  for (int g = a; g <= b; ++g) out.push_back(g);
  return out;
}

std::vector<CovarianceModel> parse_models(const std::string& text) {
  if (trim(text) == "all") return {kAllModels.begin(), kAllModels.end()};
  std::vector<CovarianceModel> out;
  for (auto token : split_commas(text)) {
    const auto m = parse_covariance_model(token);
    if (!m) throw InvalidInput("unknown covariance model '" + std::string(token) + "'");
    out.push_back(*m);
  }
  return out;
}

SimulationPreset preset_from_json(const json& j) {
  try {
    SimulationPreset p;
    p.name = j.value("name", std::string("custom"));
    const std::string family = j.at("family").get<std::string>();
    p.n = j.at("n").get<std::size_t>();
    p.pi = to_vector(j.at("pi"));
    const json& comps = j.at("components");
    if (comps.size() != static_cast<std::size_t>(p.pi.size())) {
      throw InvalidParameter("component count does not match pi");
    }
    if ((p.pi.array() <= 0.0).any() || std::abs(p.pi.sum() - 1.0) > 1e-8) {
      throw InvalidParameter("pi must be positive and sum to one");
    }
    if (family == "mpln") {
      p.family = Family::MPLN;
      p.mpln.weights = p.pi;
      for (const auto& c : comps) p.mpln.components.push_back({to_vector(c.at("mu")), to_matrix(c.at("sigma"))});
      validate(p.mpln);
      p.d = p.mpln.dim();
    } else if (family == "negative_binomial" || family == "poisson") {
      p.family = family == "poisson" ? Family::Poisson : Family::NegativeBinomial;
      for (const auto& c : comps) {
        p.means.push_back(to_vector(c.at("mean")));
        if (p.family == Family::NegativeBinomial) p.variances.push_back(to_vector(c.at("variance")));
      }
      p.d = static_cast<int>(p.means.front().size());
    } else {
      throw InvalidParameter("unknown family '" + family + "'");
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed parameter file: ") + e.what());
  }
}

json preset_to_json(const SimulationPreset& p) {
  json comps = json::array();
  if (p.family == Family::MPLN) {
    for (const auto& c : p.mpln.components) {
      comps.push_back({{"mu", from_vector(c.mu)}, {"sigma", from_matrix(c.sigma)}});
    }
  } else {
    for (std::size_t g = 0; g < p.means.size(); ++g) {
      json c = {{"mean", from_vector(p.means[g])}};
      if (p.family == Family::NegativeBinomial) c["variance"] = from_vector(p.variances[g]);
      comps.push_back(std::move(c));
    }
  }
  return {{"name", p.name}, {"family", std::string(to_string(p.family))}, {"n", p.n},
          {"d", p.d},       {"pi", from_vector(p.pi)},                    {"components", std::move(comps)}};
}

namespace {

int cmd_fit(std::ostream& out, std::ostream& err, const std::string& data,
            bool header, const std::string& g_text, const std::string& models_text, FitConfig config,
            const std::string& report_path, std::string labels_path) {
  CountMatrix Y;
  try {
    config.g_values = parse_g_range(g_text);
    config.models = parse_models(models_text);
    config.validate();
    Y = ingest_csv(data, header);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  const json echo = {{"command", "fit"},
                     {"data", data},
                     {"has_header", header},
                     {"g_values", config.g_values},
                     {"models", [&] {
                        std::vector<std::string> v;
                        for (auto m : config.models) v.emplace_back(to_string(m));
                        return v;
                      }()},
                     {"seed", config.seed},
                     {"epsilon", config.epsilon},
                     {"max_outer", config.max_outer},
                     {"inner_tol", config.inner_tol},
                     {"inner_max_iter", config.inner_max_iter},
                     {"small_em_starts", config.small_em_starts},
                     {"small_em_iters", config.small_em_iters}};
  GridResult grid;
  try {
    grid = grid_search(Y, config);
  } catch (const GridFailure& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  const RunReport report = make_report(Y, config, grid, echo);
  if (labels_path.empty()) labels_path = default_labels_path(report_path);
  try {
    write_json(report_path, to_json(report));
    write_labels_csv(labels_path, grid.best.labels, 1);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  out << "best: G=" << report.best_G << " model=" << report.best_model << " BIC=" << fmt_double(report.best_bic)
      << (report.best_converged ? "" : " (not converged)") << '\n';
  for (const auto& c : report.cells) {
    if (c.status != "ok") out << "cell G=" << c.G << " " << c.model << " failed: " << c.error << '\n';
  }
  return 0;
}

int cmd_simulate(std::ostream& out, std::ostream& err, const std::string& preset_name,
                 const std::string& params_path, int replicates, std::uint64_t seed, const std::string& dir,
                 std::optional<std::size_t> n, std::string prefix) {
  try {
    if (preset_name.empty() == params_path.empty()) {
      throw InvalidInput("exactly one of --preset or --params is required");
    }
    if (replicates < 1) throw InvalidInput("--replicates must be at least 1");
    SimulationPreset p = preset_name.empty() ? preset_from_json(read_json(params_path)) : preset(preset_name);
    if (prefix.empty()) prefix = p.name;
    std::filesystem::create_directories(dir);
    for (int rep = 1; rep <= replicates; ++rep) {
      const LabeledCounts data = simulate(p, seed, static_cast<std::uint64_t>(rep - 1), n);
      const std::string stem = replicate_stem(dir, prefix, rep);
      write_counts_csv(stem + ".csv", data.counts);
      write_labels_csv(stem + "_labels.csv", data.labels, 1);
    }
    json echo = preset_to_json(p);
    echo["seed"] = seed;
    echo["replicates"] = replicates;
    if (n) echo["n"] = *n;
    write_json((std::filesystem::path(dir) / (prefix + "_params.json")).string(), echo);
    out << "wrote " << replicates << " replicate(s) of " << p.name << " to " << dir << '\n';
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_eval(std::ostream& out, std::ostream& err, const std::string& pred_path, const std::string& truth_path,
             const std::string& out_path) {
  try {
    const std::vector<int> pred = read_labels_csv(pred_path);
    const std::vector<int> truth = read_labels_csv(truth_path);
    const Contingency table = confusion(pred, truth);
    const json j = {{"n", pred.size()},
                    {"ari", ari(pred, truth)},
                    {"confusion",
                     {{"rows", table.row_labels}, {"cols", table.col_labels}, {"counts", table.counts}}}};
    if (out_path.empty()) {
      out << j.dump(2) << '\n';
    } else {
      write_json(out_path, j);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_grid_report(std::ostream& out, std::ostream& err, const std::string& report_path,
                    const std::string& out_path) {
  try {
    const RunReport r = report_from_json(read_json(report_path));
    std::ostringstream csv;
    csv << "G,model,status,bic,elbo,iterations,converged,best\n";
    for (std::size_t k = 0; k < r.cells.size(); ++k) {
      const ReportCell& c = r.cells[k];
      csv << c.G << ',' << c.model << ',' << c.status << ',' << (c.bic ? fmt_double(*c.bic) : "") << ','
          << (c.elbo ? fmt_double(*c.elbo) : "") << ',' << c.iterations << ',' << (c.converged ? 1 : 0) << ','
          << (k == r.best_cell ? 1 : 0) << '\n';
    }
    if (out_path.empty()) {
      out << csv.str();
    } else {
      std::ofstream f = open_out(out_path);
      f << csv.str();
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixtures of multivariate Poisson-lognormal distributions for count data clustering", "mplnmix"};
  app.require_subcommand(1);

  FitConfig config;
  std::string data, g_text = "1:4", models_text = "all", report_path, labels_path;
  bool header = false;
  int threads = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the (G, model) grid and select by BIC");
  fit_cmd->add_option("--data", data, "Counts CSV (rows = observations)")->required();
  fit_cmd->add_flag("--header", header, "Skip the first line of the CSV");
  fit_cmd->add_option("--g", g_text, "Component range a:b (inclusive) or a single value");
  fit_cmd->add_option("--models", models_text, "'all' or comma-separated labels, e.g. EII,VVV");
  fit_cmd->add_option("--seed", config.seed, "Random seed for small-EM initialization");
  fit_cmd->add_option("--epsilon", config.epsilon, "Aitken convergence threshold");
  fit_cmd->add_option("--max-outer", config.max_outer, "Outer EM iteration cap");
  fit_cmd->add_option("--inner-tol", config.inner_tol, "Variational inner-loop tolerance");
  fit_cmd->add_option("--inner-max-iter", config.inner_max_iter, "Variational inner-loop iteration cap");
  fit_cmd->add_option("--starts", config.small_em_starts, "Small-EM random starts");
  fit_cmd->add_option("--start-iters", config.small_em_iters, "Small-EM iterations per start");
  fit_cmd->add_option("--threads", threads, "Worker threads (default: MPLNMIX_THREADS or 1)");
  fit_cmd->add_option("--out", report_path, "JSON report path")->required();
  fit_cmd->add_option("--labels", labels_path, "Labels CSV path (default: <out>_labels.csv)");

  std::string preset_name, params_path, out_dir = ".", prefix;
  int replicates = 1;
  std::uint64_t sim_seed = 1;
  std::size_t sim_n = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic count datasets");
  sim_cmd->add_option("--preset", preset_name, "sim1, sim2, sim3 or sim4");
  sim_cmd->add_option("--params", params_path, "JSON parameter file instead of a preset");
  sim_cmd->add_option("--replicates", replicates, "Number of datasets");
  sim_cmd->add_option("--seed", sim_seed, "Random seed");
  sim_cmd->add_option("--out-dir", out_dir, "Output directory");
  sim_cmd->add_option("--n", sim_n, "Override the sample size");
  sim_cmd->add_option("--prefix", prefix, "File name prefix (default: preset name)");

  std::string pred_path, truth_path, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "ARI and cross-tabulation of two labelings");
  eval_cmd->add_option("--pred", pred_path, "Predicted labels CSV")->required();
  eval_cmd->add_option("--truth", truth_path, "Reference labels CSV")->required();
  eval_cmd->add_option("--out", eval_out, "Write JSON here instead of stdout");

  std::string grid_in, grid_out;
  auto* grid_cmd = app.add_subcommand("grid-report", "Per-cell BIC table of a fit report as CSV");
  grid_cmd->add_option("--report", grid_in, "Report JSON written by fit")->required();
  grid_cmd->add_option("--out", grid_out, "Write CSV here instead of stdout");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return 1;
  }

  if (fit_cmd->parsed()) {
    config.threads = resolve_threads(threads);
    return cmd_fit(out, err, data, header, g_text, models_text, config, report_path, labels_path);
  }
  if (sim_cmd->parsed()) {
    return cmd_simulate(out, err, preset_name, params_path, replicates, sim_seed, out_dir,
                        sim_n > 0 ? std::optional<std::size_t>(sim_n) : std::nullopt, prefix);
  }
  if (eval_cmd->parsed()) return cmd_eval(out, err, pred_path, truth_path, eval_out);
  if (grid_cmd->parsed()) return cmd_grid_report(out, err, grid_in, grid_out);
  return 1;
}

}  // namespace mplnmix
