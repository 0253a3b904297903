#pragma once
// Experiment configuration, orchestration and CSV/JSON emission for the CLI.

#include "qrouter/circuit.hpp"
#include "qrouter/core.hpp"
#include "qrouter/dynamics.hpp"
#include "qrouter/fidelity.hpp"
#include "qrouter/router.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#ifndef QROUTER_VERSION
#define QROUTER_VERSION "0.1.0"
#endif

namespace qrouter {

using json = nlohmann::json;

inline constexpr const char* kVersion = QROUTER_VERSION;

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Worker pool.

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// by index is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, F&& fn, std::size_t threads = 0) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Units.

enum class Dim { none, frequency, time, capacitance, energy };

inline const char* dim_key(Dim d) {
  switch (d) {
    case Dim::frequency: return "frequency";
    case Dim::time: return "time";
    case Dim::capacitance: return "capacitance";
    case Dim::energy: return "energy";
    case Dim::none: break;
  }
  return "";
}

/// Declared units. Frequencies and energies given in MHz or GHz are f with
/// omega = 2 pi f; internally everything is rad/us, us and fF.
class Units {
 public:
  Units() = default;

  static Units parse(const json& block) {
    if (!block.is_object()) throw ConfigError("\"units\" must be an object");
    Units u;
    for (const auto& [key, value] : block.items()) {
      if (!value.is_string()) throw ConfigError("units." + key + " must be a string");
      const std::string v = value.get<std::string>();
      const Dim d = dim_from_key(key);
      if (!factor(d, v)) throw ConfigError("unsupported unit '" + v + "' for units." + key);
      u.declared_[d] = v;
    }
    return u;
  }

  bool declared(Dim d) const { return declared_.count(d) > 0; }
  const std::string& unit(Dim d) const { return declared_.at(d); }

  double to_internal(Dim d, double v) const { return v * *factor(d, unit(d)); }
  double from_internal(Dim d, double v) const { return v / *factor(d, unit(d)); }

  void declare_default(Dim d) {
    if (!declared(d)) declared_[d] = canonical(d);
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [d, u] : declared_) j[dim_key(d)] = u;
    return j;
  }

  static std::string canonical(Dim d) {
    switch (d) {
      case Dim::frequency: return "MHz";
      case Dim::time: return "us";
      case Dim::capacitance: return "fF";
      case Dim::energy: return "GHz";
      case Dim::none: break;
    }
    return "";
  }

 private:
  static Dim dim_from_key(const std::string& key) {
    for (Dim d : {Dim::frequency, Dim::time, Dim::capacitance, Dim::energy})
      if (key == dim_key(d)) return d;
    throw ConfigError("unknown key units." + key);
  }

  static std::optional<double> factor(Dim d, const std::string& u) {
    switch (d) {
      case Dim::frequency:
      case Dim::energy:
        if (u == "MHz") return units::kTwoPi;
        if (u == "GHz") return units::kTwoPi * 1e3;
        if (u == "rad/us") return 1.0;
        return std::nullopt;
      case Dim::time:
        if (u == "us") return 1.0;
        if (u == "ns") return 1e-3;
        return std::nullopt;
      case Dim::capacitance:
        if (u == "fF") return 1.0;
        return std::nullopt;
      case Dim::none: break;
    }
    return std::nullopt;
  }

  std::map<Dim, std::string> declared_;
};

// ---------------------------------------------------------------------------
// Configuration.

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"sweep-ratio",   "transfer",       "route-table",
                                              "concat",        "three-output",   "circuit-derive",
                                              "circuit-numeric", "fidelity-point"};
  return names;
}

struct ExperimentConfig {
  std::string experiment;
  Units units;
  json params = json::object();
  std::uint64_t seed = 0;
  std::optional<std::string> output;
};

/// Parses a config object; `experiment` is the name given on the command line.
inline ExperimentConfig parse_config(const json& j, const std::string& experiment) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end())
    throw ConfigError("unknown experiment '" + experiment + "'");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> allowed{"experiment", "units", "params", "seed", "output_path"};
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "'");
  if (!j.contains("units")) throw ConfigError("config lacks the mandatory \"units\" block");

  ExperimentConfig c;
  c.experiment = experiment;
  if (j.contains("experiment")) {
    if (!j["experiment"].is_string()) throw ConfigError("\"experiment\" must be a string");
    if (j["experiment"].get<std::string>() != experiment)
      throw ConfigError("config is for '" + j["experiment"].get<std::string>() + "', not '" + experiment + "'");
  }
  c.units = Units::parse(j["units"]);
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw ConfigError("\"params\" must be an object");
    c.params = j["params"];
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("\"seed\" must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output_path")) {
    if (!j["output_path"].is_string()) throw ConfigError("\"output_path\" must be a string");
    c.output = j["output_path"].get<std::string>();
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::string& experiment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, experiment);
}

/// Reads experiment parameters, records the resolved values for the metadata
/// echo, and rejects keys that were never read.
class ParamReader {
 public:
  explicit ParamReader(const ExperimentConfig& cfg) : params_(cfg.params), units_(cfg.units) {}

  double quantity(const std::string& name, Dim d, double default_internal) {
    if (const json* v = take(name)) {
      const double x = as_number(name, *v);
      if (d == Dim::none) {
        echo_[name] = x;
        return x;
      }
      if (!units_.declared(d)) throw ConfigError("params." + name + " needs units." + dim_key(d));
      echo_[name] = x;
      return units_.to_internal(d, x);
    }
    if (d != Dim::none) units_.declare_default(d);
    echo_[name] = d == Dim::none ? default_internal : units_.from_internal(d, default_internal);
    return default_internal;
  }

  double number(const std::string& name, double def) { return quantity(name, Dim::none, def); }

  std::optional<double> optional_quantity(const std::string& name, Dim d) {
    if (!params_.contains(name)) return std::nullopt;
    return quantity(name, d, 0.0);
  }

  std::int64_t integer(const std::string& name, std::int64_t def) {
    if (const json* v = take(name)) {
      if (!v->is_number_integer()) throw ConfigError("params." + name + " must be an integer");
      echo_[name] = v->get<std::int64_t>();
      return v->get<std::int64_t>();
    }
    echo_[name] = def;
    return def;
  }

  std::string choice(const std::string& name, const std::string& def, const std::vector<std::string>& allowed) {
    std::string v = def;
    if (const json* j = take(name)) {
      if (!j->is_string()) throw ConfigError("params." + name + " must be a string");
      v = j->get<std::string>();
    }
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("params." + name + " = '" + v + "' is not one of: " + list);
    }
    echo_[name] = v;
    return v;
  }

  std::vector<double> number_list(const std::string& name, const std::vector<double>& def) {
    std::vector<double> out = def;
    if (const json* j = take(name)) {
      if (!j->is_array() || j->empty()) throw ConfigError("params." + name + " must be a non-empty array");
      out.clear();
      for (const auto& x : *j) out.push_back(as_number(name, x));
    }
    echo_[name] = out;
    return out;
  }

  std::optional<std::vector<std::string>> string_list(const std::string& name) {
    const json* j = take(name);
    if (!j) return std::nullopt;
    if (!j->is_array() || j->empty()) throw ConfigError("params." + name + " must be a non-empty array");
    std::vector<std::string> out;
    for (const auto& x : *j) {
      if (!x.is_string()) throw ConfigError("params." + name + " must hold strings");
      out.push_back(x.get<std::string>());
    }
    echo_[name] = out;
    return out;
  }

  /// Throws on keys that were not consumed.
  void finish() const {
    for (const auto& [key, _] : params_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key params." + key);
  }

  json echo_params() const { return echo_; }
  const Units& units() const { return units_; }

 private:
  const json* take(const std::string& name) {
    seen_.insert(name);
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : &*it;
  }

  static double as_number(const std::string& name, const json& v) {
    if (!v.is_number()) throw ConfigError("params." + name + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError("params." + name + " must be finite");
    return x;
  }

  json params_;
  Units units_;
  json echo_ = json::object();
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Results.

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

class ResultTable {
 public:
  using Cell = std::variant<double, std::int64_t, std::string>;

  ResultTable() = default;
  explicit ResultTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size())
      throw ShapeError("row has " + std::to_string(row.size()) + " cells for " + std::to_string(columns_.size()) +
                       " columns");
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i] == name) return i;
    throw LabelError("no column '" + std::string(name) + "'");
  }
  double number(std::size_t row, std::string_view col) const {
    const Cell& c = rows_.at(row).at(column_index(col));
    if (const auto* d = std::get_if<double>(&c)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
    throw ValidationError("column '" + std::string(col) + "' is not numeric");
  }
  std::string text(std::size_t row, std::string_view col) const {
    const Cell& c = rows_.at(row).at(column_index(col));
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    return format_cell(c);
  }

  std::string to_csv() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += quote(cells[i]);
      }
      out += '\n';
    };
    line(columns_);
    for (const auto& r : rows_) {
      std::vector<std::string> cells;
      for (const auto& c : r) cells.push_back(format_cell(c));
      line(cells);
    }
    return out;
  }

 private:
  static std::string format_cell(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
  }

  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + '"';
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

struct ExperimentResult {
  ResultTable table;
  json summary = json::object();
  std::vector<std::string> warnings;
  /// Resolved configuration, sufficient to rerun.
  json config;
};

inline json echo_config(const ExperimentConfig& cfg, const ParamReader& r) {
  return {{"experiment", cfg.experiment},
          {"units", r.units().to_json()},
          {"params", r.echo_params()},
          {"seed", cfg.seed}};
}

inline json metadata(const ExperimentResult& res, const std::string& timestamp) {
  return {{"experiment", res.config.value("experiment", "")},
          {"version", kVersion},
          {"timestamp", timestamp},
          {"seed", res.config.value("seed", std::uint64_t{0})},
          {"config", res.config},
          {"columns", res.table.columns()},
          {"rows", res.table.rows().size()},
          {"summary", res.summary},
          {"warnings", res.warnings}};
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  if (csv.extension() == ".json") return std::filesystem::path(csv.string() + ".meta.json");
  std::filesystem::path p = csv;
  return p.replace_extension(".json");
}

inline void write_result(const ExperimentResult& res, const std::filesystem::path& csv,
                         const std::string& timestamp) {
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  {
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + csv.string() + "'");
    out << res.table.to_csv();
  }
  std::ofstream meta(sidecar_path(csv), std::ios::binary);
  if (!meta) throw ConfigError("cannot write '" + sidecar_path(csv).string() + "'");
  meta << metadata(res, timestamp).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Experiments.

namespace detail {

inline NoiseModel read_noise(ParamReader& r, bool required) {
  const auto conv = r.choice("convention", "total_coherence", {"total_coherence", "pure_dephasing"});
  const DephasingConvention c =
      conv == "total_coherence" ? DephasingConvention::total_coherence : DephasingConvention::pure_dephasing;
  if (required) {
    const double t1 = r.quantity("t1", Dim::time, 30.0);
    const double t2 = r.quantity("t2", Dim::time, 30.0);
    return NoiseModel::uniform(t1, t2, c);
  }
  const auto t1 = r.optional_quantity("t1", Dim::time);
  const auto t2 = r.optional_quantity("t2", Dim::time);
  if (t1.has_value() != t2.has_value()) throw ConfigError("give both t1 and t2, or neither");
  return t1 ? NoiseModel::uniform(*t1, *t2, c) : NoiseModel::none();
}

inline double rounded(double v) { return std::round(v * 1e9) / 1e9; }

/// Single-qubit amplitudes for '0', '1' or '+'.
inline Vector qubit_amps(char c) {
  Vector v(2);
  if (c == '0') v << 1.0, 0.0;
  else if (c == '1') v << 0.0, 1.0;
  else if (c == '+') v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  else throw ConfigError(std::string("qubit state must be 0, 1 or +, got '") + c + "'");
  return v;
}

inline StateVector product_state(const QubitRegister& reg, const std::string& states) {
  Vector amp = Vector::Ones(1);
  for (char c : states) {
    const Vector q = qubit_amps(c);
    Vector next(amp.size() * 2);
    for (Eigen::Index i = 0; i < amp.size(); ++i) {
      next(2 * i) = amp(i) * q(0);
      next(2 * i + 1) = amp(i) * q(1);
    }
    amp = std::move(next);
  }
  return {reg, amp};
}

inline std::string join(const std::vector<std::string>& v, char sep = '+') {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : std::string(1, sep)) + s;
  return out;
}

inline std::vector<std::string> all_bitstrings(int n) {
  std::vector<std::string> out;
  for (int k = 0; k < (1 << n); ++k) {
    std::string s(static_cast<std::size_t>(n), '0');
    for (int b = 0; b < n; ++b)
      if ((k >> (n - 1 - b)) & 1) s[static_cast<std::size_t>(b)] = '1';
    out.push_back(s);
  }
  return out;
}

inline void push_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace detail

/// Default ratio grid for the fidelity sweep.
struct RatioGrid {
  double min = 1.0, max = 12.0, step = 0.1;

  std::vector<double> values() const {
    if (!(min > 0.0) || !(max >= min) || !(step > 0.0)) throw ConfigError("invalid ratio grid");
    const double count = std::floor((max - min) / step + 1e-9) + 1.0;
    if (count > 1e5) throw ConfigError("ratio grid has too many points");
    std::vector<double> out;
    for (std::size_t k = 0; k < static_cast<std::size_t>(count); ++k)
      out.push_back(detail::rounded(min + static_cast<double>(k) * step));
    return out;
  }
};

struct SweepPoint {
  double ratio = 0.0;
  double fbar_noiseless = 0.0;
  double fbar_noisy = 0.0;
};

/// Argmax of y over the grid, refined by a parabola through the neighbours when interior.
inline std::pair<double, double> refined_argmax(const std::vector<double>& x, const std::vector<double>& y) {
  const auto it = std::max_element(y.begin(), y.end());
  const auto k = static_cast<std::size_t>(it - y.begin());
  if (k == 0 || k + 1 == y.size()) return {x[k], y[k]};
  const double h = x[k + 1] - x[k];
  const double den = y[k - 1] - 2.0 * y[k] + y[k + 1];
  if (den >= 0.0) return {x[k], y[k]};
  const double off = 0.5 * h * (y[k - 1] - y[k + 1]) / den;
  return {x[k] + off, y[k] - 0.25 * (y[k - 1] - y[k + 1]) * off / h};
}

inline ExperimentResult run_sweep_ratio(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const double jz = r.quantity("jz", Dim::frequency, units::mhz(10.0));
  const NoiseModel noise = detail::read_noise(r, true);
  RatioGrid grid;
  grid.min = r.number("ratio_min", grid.min);
  grid.max = r.number("ratio_max", grid.max);
  grid.step = r.number("ratio_step", grid.step);
  r.finish();
  const std::vector<double> ratios = grid.values();

  std::vector<SweepPoint> pts(ratios.size());
  parallel_for(ratios.size(), [&](std::size_t i) {
    const auto p = TwoOutputParams::from_ratio(jz, ratios[i]);
    pts[i] = {ratios[i], two_output_fidelity(p, NoiseModel::none()), two_output_fidelity(p, noise)};
  });

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.table = ResultTable({"ratio", "jx_mhz", "transfer_time_us", "fbar_noiseless", "fbar_noisy"});
  std::vector<double> noisy;
  std::size_t weak = 0;
  for (const auto& pt : pts) {
    const auto p = TwoOutputParams::from_ratio(jz, pt.ratio);
    if (!validity_warnings(p).empty()) ++weak;
    res.table.add_row({pt.ratio, units::to_mhz(p.jx), p.transfer_time(), pt.fbar_noiseless, pt.fbar_noisy});
    noisy.push_back(pt.fbar_noisy);
  }
  const auto best = std::max_element(noisy.begin(), noisy.end()) - noisy.begin();
  const auto [x_ref, y_ref] = refined_argmax(ratios, noisy);
  res.summary = {{"argmax_ratio", ratios[static_cast<std::size_t>(best)]},
                 {"max_fbar_noisy", noisy[static_cast<std::size_t>(best)]},
                 {"argmax_ratio_refined", x_ref},
                 {"max_fbar_noisy_refined", y_ref},
                 {"dephasing_convention", to_string(noise.convention())},
                 {"frame_alignment", "exp(-i diag(H) T)"}};
  if (weak > 0)
    res.warnings.push_back(std::to_string(weak) + " grid points have |4 J^z / J^x| < 10");
  return res;
}

inline ExperimentResult run_transfer(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const double jz = r.quantity("jz", Dim::frequency, units::mhz(10.0));
  const std::vector<double> ratios = r.number_list("ratios", {1.0, 3.0, 5.0});
  const std::string control = r.choice("control", "0", {"0", "1", "+"});
  const std::string input = r.choice("input", "1", {"0", "1", "+"});
  const std::int64_t samples = r.integer("samples", 201);
  const NoiseModel noise = detail::read_noise(r, false);
  r.finish();
  if (samples < 2) throw ConfigError("params.samples must be >= 2");
  for (double x : ratios)
    if (!(x > 0.0)) throw ConfigError("ratios must be positive");

  const QubitRegister reg = two_output_register();
  const StateVector psi0 = detail::product_state(reg, input + "00" + control);
  const bool noisy = !noise.noiseless(reg);
  std::vector<PropagationResult> runs(ratios.size());
  parallel_for(ratios.size(), [&](std::size_t i) {
    const auto p = TwoOutputParams::from_ratio(jz, ratios[i]);
    const Operator h = two_output_hamiltonian(p, reg);
    const double t = p.transfer_time();
    if (noisy) {
      const TimeGrid grid = TimeGrid::for_hamiltonian(h, t, static_cast<std::size_t>(samples));
      runs[i] = evolve_lindblad(h, DensityMatrix::pure(psi0), noise, grid);
    } else {
      std::vector<double> times;
      for (std::int64_t k = 0; k < samples; ++k)
        times.push_back(t * static_cast<double>(k) / static_cast<double>(samples - 1));
      runs[i] = evolve_unitary(h, psi0, times);
    }
  });

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.table = ResultTable({"ratio", "time_us", "time_over_t", "pop_input", "pop_output1", "pop_output2", "pop_control"});
  json finals = json::array();
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const auto p = TwoOutputParams::from_ratio(jz, ratios[i]);
    const auto& run = runs[i];
    for (std::size_t k = 0; k < run.times.size(); ++k) {
      const auto row = run.populations.row(static_cast<Eigen::Index>(k));
      res.table.add_row({ratios[i], run.times[k], run.times[k] / p.transfer_time(), row(0), row(1), row(2), row(3)});
    }
    const auto last = run.populations.row(run.populations.rows() - 1);
    finals.push_back({{"ratio", ratios[i]}, {"pop_output1", last(1)}, {"pop_output2", last(2)}, {"pop_input", last(0)}});
    for (const auto& w : validity_warnings(p)) detail::push_unique(res.warnings, w);
  }
  res.summary = {{"final_populations", finals}, {"noisy", noisy}};
  return res;
}

inline ExperimentResult run_route_table(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const double jz = r.quantity("jz", Dim::frequency, units::mhz(10.0));
  const double ratio = r.number("ratio", 5.0);
  const auto p = TwoOutputParams::from_ratio(jz, ratio);
  const double t = r.quantity("time", Dim::time, p.transfer_time());
  r.finish();
  if (!(t > 0.0)) throw ConfigError("params.time must be positive");
  const RoutingTable tab = routing_table(p, t);

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.warnings = validity_warnings(p);
  res.table = ResultTable({"control", "time_us", "kind", "destinations", "pop_input", "pop_output1", "pop_output2"});
  for (const auto& row : tab.rows)
    res.table.add_row({row.controls, row.time, std::string(to_string(row.kind)), detail::join(row.destinations),
                       row.population(roles::kInput), row.population(roles::kOutput1),
                       row.population(roles::kOutput2)});
  res.summary = {{"transfer_time_us", p.transfer_time()}};
  return res;
}

inline constexpr int kMaxConcat = 3;

inline ExperimentResult run_concat(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const std::int64_t n64 = r.integer("n", 2);
  const double jz = r.quantity("jz", Dim::frequency, units::mhz(10.0));
  const double ratio = r.number("ratio", 5.0);
  const double delta_over_jz = r.number("delta_over_jz", 6.0);
  auto controls = r.string_list("controls");
  const NoiseModel noise = detail::read_noise(r, false);
  r.finish();
  if (n64 < 1 || n64 > kMaxConcat) throw ConfigError("params.n must be in 1.." + std::to_string(kMaxConcat));
  const int n = static_cast<int>(n64);
  if (!(ratio > 0.0)) throw ConfigError("params.ratio must be positive");
  if (!controls) controls = detail::all_bitstrings(n);
  for (const auto& c : *controls)
    if (c.size() != static_cast<std::size_t>(n) || c.find_first_not_of("01") != std::string::npos)
      throw ConfigError("control configuration '" + c + "' must be " + std::to_string(n) + " bits");

  const ConcatParams p = ConcatParams::make(n, jz, jz / ratio, delta_over_jz * jz);
  const Operator h = concat_static_hamiltonian(p);
  const DetuningSchedule sched = concat_schedule(p);
  std::vector<double> times;
  for (int k = 0; k <= n; ++k) times.push_back(k * p.step_time);
  const bool noisy = !noise.noiseless(h.reg);

  std::vector<PropagationResult> runs(controls->size());
  parallel_for(controls->size(), [&](std::size_t i) {
    const StateVector psi0 = concat_initial_state(n, (*controls)[i]);
    runs[i] = noisy ? evolve_schedule(h, sched, DensityMatrix::pure(psi0), noise, times)
                    : evolve_schedule(h, sched, psi0, times);
  });

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.warnings = p.warnings;
  std::vector<std::string> cols{"controls", "step", "time_us"};
  std::vector<std::string> watched;
  for (const auto& l : h.reg.labels())
    if (l.rfind("control", 0) != 0) watched.push_back(l);
  for (const auto& l : watched) cols.push_back("pop_" + l);
  cols.insert(cols.end(), {"destination", "destination_population"});
  res.table = ResultTable(cols);
  double worst = 1.0;
  json finals = json::object();
  for (std::size_t i = 0; i < controls->size(); ++i) {
    const auto& run = runs[i];
    const std::string dest = concat_destination((*controls)[i]);
    const auto dest_col = static_cast<Eigen::Index>(h.reg.index_of(dest));
    for (std::size_t k = 0; k < run.times.size(); ++k) {
      std::vector<ResultTable::Cell> row{(*controls)[i], static_cast<std::int64_t>(k), run.times[k]};
      for (const auto& l : watched)
        row.emplace_back(run.populations(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(h.reg.index_of(l))));
      row.emplace_back(dest);
      row.emplace_back(run.populations(static_cast<Eigen::Index>(k), dest_col));
      res.table.add_row(std::move(row));
    }
    const double final_pop = run.populations(run.populations.rows() - 1, dest_col);
    worst = std::min(worst, final_pop);
    finals[(*controls)[i]] = {{"destination", dest}, {"population", final_pop}};
  }
  res.summary = {{"step_time_us", p.step_time},
                 {"total_time_us", p.total_time()},
                 {"final", finals},
                 {"min_destination_population", worst}};
  return res;
}

inline ExperimentResult run_three_output(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const double jz = r.quantity("jz", Dim::frequency, units::mhz(10.0));
  const double ratio = r.number("ratio", 10.0);
  const std::string mode = r.choice("mode", "both", {"selective", "entangle", "both"});
  r.finish();
  if (!(ratio > 0.0)) throw ConfigError("params.ratio must be positive");

  std::vector<ThreeOutputMode> modes;
  if (mode != "entangle") modes.push_back(ThreeOutputMode::selective);
  if (mode != "selective") modes.push_back(ThreeOutputMode::entangle);

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.table = ResultTable({"mode", "controls", "time_us", "kind", "destinations", "pop_input", "pop_output1",
                           "pop_output2", "pop_output3", "peak_time_us", "peak_time_over_t", "peak_population"});
  json summary = json::object();
  for (ThreeOutputMode m : modes) {
    const auto p = ThreeOutputParams::for_mode(jz, jz / ratio, m);
    const double big_t = p.transfer_time();
    const RoutingTable tab = routing_table(p);
    const Operator h = three_output_hamiltonian(p);
    json rows = json::object();
    for (const auto& row : tab.rows) {
      TransferPeak peak{std::nan(""), std::nan("")};
      if (row.kind == RouteKind::selected || row.kind == RouteKind::entangled)
        peak = locate_transfer_time(h, basis_state(h.reg, "1000" + row.controls), row.destinations, 1.5 * big_t);
      res.table.add_row({std::string(to_string(m)), row.controls, row.time, std::string(to_string(row.kind)),
                         detail::join(row.destinations), row.population(roles::kInput),
                         row.population(roles::kOutput1), row.population(roles::kOutput2),
                         row.population(roles::kOutput3), peak.time, peak.time / big_t, peak.population});
      rows[row.controls] = {{"kind", to_string(row.kind)}, {"destinations", row.destinations}};
    }
    summary[to_string(m)] = {{"transfer_time_us", big_t}, {"routing_time_us", default_routing_time(p)}, {"routes", rows}};
  }
  res.summary = summary;
  return res;
}

namespace detail {

inline CircuitParams read_circuit(ParamReader& r) {
  const std::string preset = r.choice("preset", "table1", {"table1", "zero_coupler"});
  CircuitParams p = preset == "table1" ? CircuitParams::table_one() : CircuitParams::zero_coupler();
  p.c_q = r.quantity("c_q", Dim::capacitance, p.c_q);
  p.c_z = r.quantity("c_z", Dim::capacitance, p.c_z);
  p.c_x = r.quantity("c_x", Dim::capacitance, p.c_x);
  p.e_i = r.quantity("e_i", Dim::energy, p.e_i);
  p.e_1 = r.quantity("e_1", Dim::energy, p.e_1);
  p.e_2 = r.quantity("e_2", Dim::energy, p.e_2);
  p.e_c = r.quantity("e_c", Dim::energy, p.e_c);
  p.e_z = r.quantity("e_z", Dim::energy, p.e_z);
  p.validate();
  return p;
}

/// Rows of (quantity, source, value, unit); energies are reported as omega / 2 pi in MHz.
struct QuantityRows {
  ResultTable table{{"quantity", "source", "value", "unit"}};

  void energy(const std::string& name, const std::string& source, double rad_per_us) {
    table.add_row({name, source, units::to_mhz(rad_per_us), std::string("MHz")});
  }
  void plain(const std::string& name, const std::string& source, double v, const std::string& unit = "1") {
    table.add_row({name, source, v, unit});
  }
};

inline void closed_form_rows(QuantityRows& q, const CircuitParams& p) {
  const DerivedModeParams d = derive_mode_params(p);
  const CouplingStrengths g = coupling_strengths(p, d);
  const EffectiveSpinParams e = effective_spin_params(p, d, g);
  const char* mode[3] = {"1", "2", "c"};
  const std::string src = "closed_form";
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      q.energy(std::string("cap_inv_") + mode[i] + mode[j], src, d.cap_inv(i, j));
  for (int i = 0; i < 3; ++i) q.energy(std::string("e_j_tilde_") + mode[i], src, d.e_j_tilde[i]);
  for (int i = 0; i < 3; ++i) q.energy(std::string("e_c_") + mode[i], src, d.e_c[i]);
  for (int i = 0; i < 3; ++i) q.plain(std::string("zeta_") + mode[i], src, d.zeta[i]);
  for (int i = 0; i < 3; ++i) q.energy(std::string("omega_") + mode[i], src, d.omega[i]);
  for (int i = 0; i < 3; ++i) q.energy(std::string("alpha_") + mode[i], src, d.alpha[i]);
  q.energy("omega_bar", src, d.omega_bar);
  q.energy("small_delta", src, d.small_delta);
  q.energy("big_delta", src, d.big_delta);
  for (int i = 0; i < 2; ++i) q.energy(std::string("g_z") + mode[i], src, g.g_z[i]);
  q.energy("g_x12", src, g.g_x12);
  for (int i = 0; i < 2; ++i) q.energy(std::string("g_x") + mode[i], src, g.g_x[i]);
  for (int i = 0; i < 2; ++i) q.energy(std::string("g_xz") + mode[i], src, g.g_xz[i]);
  q.energy("delta_1", src, e.delta_1);
  q.energy("delta_2", src, e.delta_2);
  q.energy("delta_c", src, e.delta_c);
  for (int i = 0; i < 2; ++i) q.energy(std::string("jz_") + mode[i], src, e.jz[i]);
  q.energy("jx12", src, e.jx12);
  q.energy("jxz12", src, e.jxz12);
  for (int i = 0; i < 2; ++i) q.energy(std::string("jx_in_") + mode[i], src, e.jx_in[i]);
}

inline std::vector<std::string> circuit_warnings(const CircuitParams& p) {
  std::vector<std::string> w = p.warnings();
  for (const auto& s : effective_spin_params(p).warnings) w.push_back(s);
  return w;
}

}  // namespace detail

inline ExperimentResult run_circuit_derive(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const CircuitParams p = detail::read_circuit(r);
  r.finish();
  detail::QuantityRows q;
  detail::closed_form_rows(q, p);
  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.table = std::move(q.table);
  res.warnings = detail::circuit_warnings(p);
  const EffectiveSpinParams e = effective_spin_params(p);
  res.summary = {{"jz_mhz", {units::to_mhz(e.jz[0]), units::to_mhz(e.jz[1])}},
                 {"jx_in_mhz", {units::to_mhz(e.jx_in[0]), units::to_mhz(e.jx_in[1])}}};
  return res;
}

inline ExperimentResult run_circuit_numeric(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const CircuitParams p = detail::read_circuit(r);
  const std::int64_t levels = r.integer("levels", 7);
  r.finish();
  if (levels < static_cast<std::int64_t>(kMinCircuitLevels) || levels > 11)
    throw ConfigError("params.levels must be in 4..11");
  const NumericCouplingReport rep = numeric_couplings(p, static_cast<std::size_t>(levels));
  const EffectiveSpinParams e = effective_spin_params(p);

  detail::QuantityRows q;
  const std::string num = "numeric", ref = "numeric_levels_plus_1", cf = "closed_form";
  for (int i = 0; i < 2; ++i) {
    const std::string k = std::to_string(i + 1);
    q.energy("jz_" + k, num, rep.result.jz[i]);
    q.energy("jz_" + k, ref, rep.refined.jz[i]);
    q.energy("jz_" + k, cf, e.jz[i]);
    q.plain("jz_" + k + "_closed_over_numeric", "comparison", e.jz[i] / rep.result.jz[i]);
  }
  for (int i = 0; i < 2; ++i) q.energy("delta_" + std::to_string(i + 1) + "_vs_input", num, rep.result.delta[i]);
  const char* tr[3] = {"transition_100", "transition_010", "transition_001"};
  for (int i = 0; i < 3; ++i) q.energy(tr[i], num, rep.result.transitions[i]);
  for (int i = 0; i < 2; ++i) q.energy("jx_in_" + std::to_string(i + 1), cf, e.jx_in[i]);
  q.plain("max_relative_change", "convergence", rep.max_relative_change);
  q.plain("min_label_overlap", "convergence", rep.result.min_overlap);
  q.plain("levels", "convergence", static_cast<double>(levels));

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.table = std::move(q.table);
  res.warnings = detail::circuit_warnings(p);
  res.summary = {{"jz_mhz", {units::to_mhz(rep.result.jz[0]), units::to_mhz(rep.result.jz[1])}},
                 {"jx_in_mhz", {units::to_mhz(e.jx_in[0]), units::to_mhz(e.jx_in[1])}},
                 {"max_relative_change", rep.max_relative_change},
                 {"levels", levels}};
  return res;
}

inline ExperimentResult run_fidelity_point(const ExperimentConfig& cfg) {
  ParamReader r(cfg);
  const double jz = r.quantity("jz", Dim::frequency, units::mhz(10.0));
  const double ratio = r.number("ratio", 4.192);
  const NoiseModel noise = detail::read_noise(r, false);
  const std::int64_t samples = r.integer("mc_samples", 0);
  r.finish();
  if (!(ratio > 0.0)) throw ConfigError("params.ratio must be positive");
  if (samples != 0 && samples < 100) throw ConfigError("params.mc_samples must be 0 or >= 100");

  const auto p = TwoOutputParams::from_ratio(jz, ratio);
  const double t = p.transfer_time();
  const Evolver ch = two_output_channel(p, noise, t);
  const SubspaceBasis basis = two_output_basis();
  const Operator target = ideal_transfer_unitary();
  const double fbar = average_process_fidelity(channel_tomography(ch, basis), target);

  ExperimentResult res;
  res.config = echo_config(cfg, r);
  res.warnings = validity_warnings(p);
  std::vector<std::string> cols{"ratio", "transfer_time_us", "fbar"};
  std::vector<ResultTable::Cell> row{ratio, t, fbar};
  res.summary = {{"fbar", fbar}, {"noisy", !noise.noiseless(basis.reg)}};
  if (samples > 0) {
    const MonteCarloEstimate mc =
        haar_monte_carlo_fidelity(ch, target, basis, static_cast<std::size_t>(samples), cfg.seed);
    cols.insert(cols.end(), {"mc_mean", "mc_stderr", "mc_samples"});
    row.insert(row.end(), {mc.mean, mc.stderr_, static_cast<std::int64_t>(mc.samples)});
    res.summary["mc_mean"] = mc.mean;
    res.summary["mc_stderr"] = mc.stderr_;
  }
  res.table = ResultTable(cols);
  res.table.add_row(std::move(row));
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const std::string& e = cfg.experiment;
  if (e == "sweep-ratio") return run_sweep_ratio(cfg);
  if (e == "transfer") return run_transfer(cfg);
  if (e == "route-table") return run_route_table(cfg);
  if (e == "concat") return run_concat(cfg);
  if (e == "three-output") return run_three_output(cfg);
  if (e == "circuit-derive") return run_circuit_derive(cfg);
  if (e == "circuit-numeric") return run_circuit_numeric(cfg);
  if (e == "fidelity-point") return run_fidelity_point(cfg);
  throw ConfigError("unknown experiment '" + e + "'");
}

}  // namespace qrouter
