#include "coalmpc/scenario.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <Eigen/Cholesky>

#include "coalmpc/partition.hpp"

namespace coalmpc {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw ScenarioError(where + ": " + msg);
}

double parse_double(const std::string& where, const std::string& tok) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + tok.size() || tok.empty()) {
    fail(where, "'" + tok + "' is not a number");
  }
  if (!std::isfinite(v)) fail(where, "'" + tok + "' is not finite");
  return v;
}

int parse_int(const std::string& where, const std::string& tok) {
  const double v = parse_double(where, tok);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    fail(where, "'" + tok + "' is not an integer");
  }
  return static_cast<int>(v);
}

// One parsed [section]: its key/value lines plus bookkeeping so unknown and
// unconsumed keys can be reported with context.
class Section {
 public:
  Section(std::string name, std::map<std::string, std::string> values)
      : name_(std::move(name)), values_(std::move(values)) {}

  const std::string& name() const { return name_; }
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string raw(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) fail("[" + name_ + "]", "missing key '" + key + "'");
    consumed_.insert({key, true});
    return it->second;
  }

  double number(const std::string& key) { return parse_double(where(key), raw(key)); }
  int integer(const std::string& key) { return parse_int(where(key), raw(key)); }

  Vector vector(const std::string& key) {
    const std::vector<std::string> toks = split_ws(raw(key));
    if (toks.empty()) fail(where(key), "empty vector");
    Vector v(static_cast<int>(toks.size()));
    for (std::size_t i = 0; i < toks.size(); ++i) {
      v[static_cast<int>(i)] = parse_double(where(key), toks[i]);
    }
    return v;
  }

  Matrix matrix(const std::string& key) {
    const std::string text = raw(key);
    std::vector<std::vector<double>> rows;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t semi = text.find(';', start);
      const std::string row_text =
          text.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
      std::vector<double> row;
      for (const std::string& tok : split_ws(row_text)) {
        row.push_back(parse_double(where(key), tok));
      }
      if (row.empty()) fail(where(key), "empty matrix row");
      if (!rows.empty() && row.size() != rows.front().size()) {
        fail(where(key), "rows have different lengths");
      }
      rows.push_back(std::move(row));
      if (semi == std::string::npos) break;
      start = semi + 1;
    }
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
      }
    }
    return m;
  }

  void finish() const {
    for (const auto& [key, value] : values_) {
      (void)value;
      if (!consumed_.count(key)) fail("[" + name_ + "]", "unknown key '" + key + "'");
    }
  }

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> consumed_;
};

std::map<std::string, Section> split_sections(const std::string& text) {
  std::map<std::string, Section> sections;
  std::string current;
  std::map<std::string, std::string> values;
  int line_no = 0;

  auto flush = [&]() {
    if (current.empty()) return;
    if (!sections.emplace(current, Section(current, std::move(values))).second) {
      fail("scenario", "duplicate section [" + current + "]");
    }
    values.clear();
  };

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') fail(at, "unterminated section header");
      flush();
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty()) fail(at, "empty section header");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(at, "expected 'key = value'");
    if (current.empty()) fail(at, "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(at, "empty key");
    if (!values.emplace(key, trim(line.substr(eq + 1))).second) {
      fail(at, "duplicate key '" + key + "' in [" + current + "]");
    }
  }
  flush();
  return sections;
}

Section& require_section(std::map<std::string, Section>& sections, const std::string& name) {
  auto it = sections.find(name);
  if (it == sections.end()) fail("scenario", "missing section [" + name + "]");
  return it->second;
}

SymBox read_box(Section& sec, const std::string& key, int dim) {
  const Vector h = sec.vector(key);
  if (h.size() != dim) {
    fail(sec.where(key), "expected " + std::to_string(dim) + " halfwidths");
  }
  if ((h.array() <= 0.0).any()) fail(sec.where(key), "halfwidths must be positive");
  return SymBox(h);
}

Matrix read_square(Section& sec, const std::string& key, int dim) {
  const Matrix m = sec.matrix(key);
  if (m.rows() != dim || m.cols() != dim) {
    fail(sec.where(key), "expected a " + std::to_string(dim) + "x" + std::to_string(dim) +
                             " matrix");
  }
  return m;
}

void check_weight(Section& sec, const std::string& key, const Matrix& m, bool strict) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    fail(sec.where(key), "weight matrix must be symmetric");
  }
  if (strict) {
    if (Eigen::LLT<Matrix>(m).info() != Eigen::Success) {
      fail(sec.where(key), "weight matrix must be positive definite");
    }
  } else if (!Eigen::LDLT<Matrix>(m).isPositive()) {
    fail(sec.where(key), "weight matrix must be positive semidefinite");
  }
}

std::string read_partition_key(Section& sec, const std::string& key, int M) {
  const std::string text = trim(sec.raw(key));
  try {
    const Partition p = Partition::from_key(text);
    if (p.num_elements() != M) {
      fail(sec.where(key), "partition key '" + text + "' has the wrong length");
    }
  } catch (const std::invalid_argument& e) {
    fail(sec.where(key), std::string(e.what()));
  }
  return text;
}

void read_run(Section& sec, RunSetup& run, int state_dim, int M, bool with_opinions) {
  if (sec.has("T")) {
    run.T = sec.integer("T");
    if (run.T < 0) fail(sec.where("T"), "run length must be nonnegative");
  }
  if (sec.has("x0")) {
    run.x0 = sec.vector("x0");
    if (run.x0.size() != state_dim) {
      fail(sec.where("x0"), "expected " + std::to_string(state_dim) + " entries");
    }
  }
  if (sec.has("initial_partition")) {
    run.initial_partition = read_partition_key(sec, "initial_partition", M);
  }
  if (with_opinions && sec.has("opinions")) {
    run.opinions.clear();
    for (const std::string& tok : split_ws(sec.raw("opinions"))) {
      try {
        const Partition p = Partition::from_key(tok);
        if (p.num_elements() != M) {
          fail(sec.where("opinions"), "key '" + tok + "' has the wrong length");
        }
      } catch (const std::invalid_argument& e) {
        fail(sec.where("opinions"), std::string(e.what()));
      }
      run.opinions.push_back(tok);
    }
    if (static_cast<int>(run.opinions.size()) != M) {
      fail(sec.where("opinions"), "expected one key per subsystem");
    }
  }
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (int r = 0; r < m.rows(); ++r) {
    if (r > 0) out << "; ";
    for (int c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << format_exact(m(r, c));
    }
  }
}

void write_vector(std::ostream& out, const Vector& v) {
  for (int i = 0; i < v.size(); ++i) {
    if (i > 0) out << ' ';
    out << format_exact(v[i]);
  }
}

void write_run(std::ostream& out, const RunSetup& run) {
  out << "T = " << run.T << "\n";
  out << "x0 = ";
  write_vector(out, run.x0);
  out << "\n";
  out << "initial_partition = " << run.initial_partition << "\n";
}

}  // namespace

std::string format_exact(double v) {
  char buf[40];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

SystemModel Scenario::build_system() const {
  SystemModel model(subsystems, coupling);
  if (discrete) return model;
  return discretize_zoh(model, sample_time, zoh);
}

int Scenario::total_state_dim() const {
  int n = 0;
  for (const SubsystemModel& sub : subsystems) n += static_cast<int>(sub.A.rows());
  return n;
}

Scenario parse_scenario(const std::string& text) {
  std::map<std::string, Section> sections = split_sections(text);
  Scenario sc;

  Section& system = require_section(sections, "system");
  const std::string kind = system.raw("kind");
  if (kind == "discrete") {
    sc.discrete = true;
  } else if (kind == "continuous") {
    sc.discrete = false;
    sc.sample_time = system.number("sample_time");
    if (sc.sample_time <= 0.0) {
      fail(system.where("sample_time"), "sample time must be positive");
    }
    const std::string hold = system.raw("zoh");
    if (hold == "coupled_hold") {
      sc.zoh = ZohMode::CoupledHold;
    } else if (hold == "exact_full") {
      sc.zoh = ZohMode::ExactFull;
    } else {
      fail(system.where("zoh"), "expected 'coupled_hold' or 'exact_full'");
    }
  } else {
    fail(system.where("kind"), "expected 'continuous' or 'discrete'");
  }
  const int M = system.integer("subsystems");
  if (M < 1) fail(system.where("subsystems"), "need at least one subsystem");
  system.finish();

  for (int i = 0; i < M; ++i) {
    Section& sub = require_section(sections, "subsystem " + std::to_string(i));
    SubsystemModel m;
    m.A = sub.matrix("A");
    if (m.A.rows() != m.A.cols()) fail(sub.where("A"), "state matrix must be square");
    const int n = static_cast<int>(m.A.rows());
    m.B = sub.matrix("B");
    if (m.B.rows() != n) fail(sub.where("B"), "input matrix row count must match A");
    const int mi = static_cast<int>(m.B.cols());
    m.state_box = read_box(sub, "state_halfwidth", n);
    m.input_box = read_box(sub, "input_halfwidth", mi);
    m.Q = read_square(sub, "Q", n);
    check_weight(sub, "Q", m.Q, false);
    m.R = read_square(sub, "R", mi);
    check_weight(sub, "R", m.R, true);
    sub.finish();
    sc.subsystems.push_back(std::move(m));
  }

  for (auto& [name, sec] : sections) {
    const std::vector<std::string> parts = split_ws(name);
    if (parts.empty() || parts.front() != "coupling") continue;
    if (parts.size() != 3) fail("[" + name + "]", "expected 'coupling <from> <to>'");
    const int i = parse_int("[" + name + "]", parts[1]);
    const int j = parse_int("[" + name + "]", parts[2]);
    if (i < 0 || i >= M || j < 0 || j >= M || i == j) {
      fail("[" + name + "]", "subsystem pair out of range");
    }
    const Matrix block = sec.matrix("A");
    if (block.rows() != sc.subsystems[i].A.rows() ||
        block.cols() != sc.subsystems[j].A.rows()) {
      fail(sec.where("A"), "coupling block has the wrong shape");
    }
    sec.finish();
    if (!sc.coupling.emplace(std::make_pair(i, j), block).second) {
      fail("[" + name + "]", "duplicate coupling pair");
    }
  }

  Section& mpc = require_section(sections, "mpc");
  sc.mpc.N = mpc.integer("N");
  if (sc.mpc.N < 1) fail(mpc.where("N"), "horizon must be at least 1");
  sc.mpc.H = mpc.integer("H");
  if (sc.mpc.H < sc.mpc.N + 1) fail(mpc.where("H"), "H must be at least N + 1");
  sc.mpc.design.h_margin = mpc.has("h_margin") ? mpc.integer("h_margin") : 0;
  if (sc.mpc.design.h_margin < 0) fail(mpc.where("h_margin"), "margin must be nonnegative");
  sc.mpc.design.q_eta = mpc.number("q_eta");
  sc.mpc.design.q_theta = mpc.number("q_theta");
  if (sc.mpc.design.q_eta <= 0.0 || sc.mpc.design.q_theta <= 0.0) {
    fail("[mpc]", "design weights must be positive");
  }
  sc.mpc.link_power_weight = mpc.number("link_power_weight");
  if (sc.mpc.link_power_weight < 0.0) {
    fail(mpc.where("link_power_weight"), "weight must be nonnegative");
  }
  mpc.finish();

  Section& game = require_section(sections, "game");
  sc.game.rho = game.number("rho");
  sc.game.epsilon = game.number("epsilon");
  sc.game.sigma = game.number("sigma");
  sc.game.delta_moves = game.has("delta_moves") ? game.integer("delta_moves") : 1;
  if (sc.game.rho <= 0.0) fail(game.where("rho"), "rho must be positive");
  if (sc.game.epsilon < 0.0) fail(game.where("epsilon"), "epsilon must be nonnegative");
  if (sc.game.sigma <= 0.0) fail(game.where("sigma"), "sigma must be positive");
  if (sc.game.delta_moves < 1) fail(game.where("delta_moves"), "delta_moves must be >= 1");
  game.finish();

  const int state_dim = sc.total_state_dim();

  Section& simulation = require_section(sections, "simulation");
  read_run(simulation, sc.fixed_run, state_dim, M, false);
  if (!simulation.has("T")) fail("[simulation]", "missing key 'T'");
  if (sc.fixed_run.x0.size() == 0) fail("[simulation]", "missing key 'x0'");
  if (sc.fixed_run.initial_partition.empty()) {
    fail("[simulation]", "missing key 'initial_partition'");
  }
  simulation.finish();

  sc.switching_run = sc.fixed_run;
  auto switching = sections.find("switching");
  if (switching != sections.end()) {
    Section& sw = switching->second;
    sc.switch_cfg.selection_period =
        sw.has("selection_period") ? sw.integer("selection_period") : 1;
    sc.switch_cfg.min_dwell = sw.has("min_dwell") ? sw.integer("min_dwell") : 1;
    if (sc.switch_cfg.selection_period < 1) {
      fail(sw.where("selection_period"), "period must be at least 1");
    }
    if (sc.switch_cfg.min_dwell < 1) fail(sw.where("min_dwell"), "dwell must be at least 1");
    read_run(sw, sc.switching_run, state_dim, M, true);
    sw.finish();
  }

  for (const auto& [name, sec] : sections) {
    (void)sec;
    const std::vector<std::string> parts = split_ws(name);
    bool known = false;
    if (parts.size() == 1) {
      known = name == "system" || name == "mpc" || name == "game" ||
              name == "simulation" || name == "switching";
    } else if (parts.size() == 2 && parts.front() == "subsystem") {
      const int idx = parse_int("[" + name + "]", parts[1]);
      known = idx >= 0 && idx < M;
    } else if (parts.size() == 3 && parts.front() == "coupling") {
      known = true;  // shape checked in the coupling pass above
    }
    if (!known) fail("scenario", "unknown section [" + name + "]");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

std::string serialize_scenario(const Scenario& sc) {
  std::ostringstream out;
  out << "[system]\n";
  out << "kind = " << (sc.discrete ? "discrete" : "continuous") << "\n";
  out << "subsystems = " << sc.subsystems.size() << "\n";
  if (!sc.discrete) {
    out << "sample_time = " << format_exact(sc.sample_time) << "\n";
    out << "zoh = " << (sc.zoh == ZohMode::CoupledHold ? "coupled_hold" : "exact_full")
        << "\n";
  }

  for (std::size_t i = 0; i < sc.subsystems.size(); ++i) {
    const SubsystemModel& sub = sc.subsystems[i];
    out << "\n[subsystem " << i << "]\n";
    out << "A = ";
    write_matrix(out, sub.A);
    out << "\nB = ";
    write_matrix(out, sub.B);
    out << "\nstate_halfwidth = ";
    write_vector(out, sub.state_box.halfwidths);
    out << "\ninput_halfwidth = ";
    write_vector(out, sub.input_box.halfwidths);
    out << "\nQ = ";
    write_matrix(out, sub.Q);
    out << "\nR = ";
    write_matrix(out, sub.R);
    out << "\n";
  }

  for (const auto& [pair, block] : sc.coupling) {
    out << "\n[coupling " << pair.first << " " << pair.second << "]\n";
    out << "A = ";
    write_matrix(out, block);
    out << "\n";
  }

  out << "\n[mpc]\n";
  out << "N = " << sc.mpc.N << "\n";
  out << "H = " << sc.mpc.H << "\n";
  out << "h_margin = " << sc.mpc.design.h_margin << "\n";
  out << "q_eta = " << format_exact(sc.mpc.design.q_eta) << "\n";
  out << "q_theta = " << format_exact(sc.mpc.design.q_theta) << "\n";
  out << "link_power_weight = " << format_exact(sc.mpc.link_power_weight) << "\n";

  out << "\n[game]\n";
  out << "rho = " << format_exact(sc.game.rho) << "\n";
  out << "epsilon = " << format_exact(sc.game.epsilon) << "\n";
  out << "sigma = " << format_exact(sc.game.sigma) << "\n";
  out << "delta_moves = " << sc.game.delta_moves << "\n";

  out << "\n[simulation]\n";
  write_run(out, sc.fixed_run);

  out << "\n[switching]\n";
  out << "selection_period = " << sc.switch_cfg.selection_period << "\n";
  out << "min_dwell = " << sc.switch_cfg.min_dwell << "\n";
  write_run(out, sc.switching_run);
  if (!sc.switching_run.opinions.empty()) {
    out << "opinions =";
    for (const std::string& key : sc.switching_run.opinions) out << ' ' << key;
    out << "\n";
  }
  return out.str();
}

}  // namespace coalmpc
