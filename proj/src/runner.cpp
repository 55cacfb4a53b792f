#include "mourre/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace mourre {

namespace fs = std::filesystem;

namespace {

std::pair<int, int> line_column(const std::string& text, std::size_t offset) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Position of the first occurrence of "key" in the source, for error messages.
struct Locator {
  const std::string* text = nullptr;

  [[noreturn]] void fail(const std::string& what, const std::string& key = {}) const {
    if (text && !key.empty()) {
      std::size_t pos = text->find("\"" + key + "\"");
      if (pos != std::string::npos) {
        auto [l, c] = line_column(*text, pos);
        throw ConfigError(what, l, c);
      }
    }
    throw ConfigError(what);
  }
};

bool same_kind(const json& def, const json& given) {
  if (def.is_null()) return true;
  if (def.is_number()) return given.is_number();
  if (def.is_array()) return given.is_array();
  return def.type() == given.type();
}

json fill(const json& defaults, const json& given, const std::string& where, const Locator& loc) {
  if (!given.is_object()) loc.fail(where + " must be an object");
  json out = defaults;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!defaults.contains(it.key())) loc.fail("unknown key '" + it.key() + "' in " + where, it.key());
    if (!same_kind(defaults.at(it.key()), it.value()))
      loc.fail("key '" + it.key() + "' in " + where + " has the wrong type", it.key());
    out[it.key()] = it.value();
  }
  return out;
}

void check_model(const json& m, const Locator& loc) {
  const std::string kind = m.at("model").get<std::string>();
  auto positive = [&](const char* key) {
    if (!(m.at(key).get<double>() > 0.0)) loc.fail(std::string(key) + " must be positive", key);
  };
  if (kind == "free_evolution") {
    positive("T");
    positive("Xi");
    if (m.at("M").get<int>() < 16) loc.fail("M must be at least 16", "M");
    return;
  }
  if (m.at("K").get<int>() < 8) loc.fail("K must be at least 8", "K");
  const std::string p = m.at("perturbation").get<std::string>();
  if (p != "none" && p != "planted_swap" && p != "pi_p0")
    loc.fail("perturbation must be none, planted_swap or pi_p0", "perturbation");
  if (kind == "dilation") {
    positive("t");
    positive("dy");
  }
  if (kind == "cocycle") {
    if (m.at("m").get<int>() == 0) loc.fail("m must be nonzero", "m");
    for (const json& e : m.at("h_hat")) {
      if (!e.is_object() || !e.contains("l") || !e.contains("re") || !e.contains("im") || e.size() != 3 ||
          !e.at("l").is_number_integer() || !e.at("re").is_number() || !e.at("im").is_number())
        loc.fail("h_hat entries are {\"l\": int, \"re\": number, \"im\": number}", "h_hat");
    }
  }
}

ExperimentConfig validate(const json& j, const Locator& loc) {
  if (!j.is_object()) loc.fail("config must be a JSON object");
  static const std::vector<std::string> top{"model", "suite", "output_dir", "tolerances", "seedless"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(top.begin(), top.end(), it.key()) == top.end())
      loc.fail("unknown key '" + it.key() + "'", it.key());
  if (!j.contains("model")) loc.fail("missing 'model'");
  const json& mj = j.at("model");
  if (!mj.is_object() || !mj.contains("model") || !mj.at("model").is_string())
    loc.fail("model needs a string field 'model'", "model");
  ExperimentConfig c;
  json defaults;
  try {
    defaults = model_defaults(mj.at("model").get<std::string>());
  } catch (const ConfigError& e) {
    loc.fail(e.what(), "model");
  }
  c.model = fill(defaults, mj, "model", loc);
  check_model(c.model, loc);
  const std::string kind = c.model.at("model").get<std::string>();

  if (j.contains("suite")) {
    if (!j.at("suite").is_array()) loc.fail("suite must be an array", "suite");
    for (const json& e : j.at("suite")) {
      if (!e.is_object() || !e.contains("op") || !e.at("op").is_string())
        loc.fail("suite entries need a string field 'op'", "suite");
      for (auto it = e.begin(); it != e.end(); ++it)
        if (it.key() != "op" && it.key() != "params")
          loc.fail("unknown key '" + it.key() + "' in suite entry", it.key());
      const std::string op = e.at("op").get<std::string>();
      const CheckInfo* info = find_check(op);
      if (!info) loc.fail("unknown op '" + op + "'", op);
      if (std::find(info->models.begin(), info->models.end(), kind) == info->models.end())
        loc.fail("op '" + op + "' does not apply to the " + kind + " model", op);
      json params = e.contains("params") ? fill(info->params, e.at("params"), op + " params", loc)
                                         : info->params;
      c.suite.push_back({op, params});
    }
  }
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) loc.fail("output_dir must be a string", "output_dir");
    c.output_dir = j.at("output_dir").get<std::string>();
  }
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    if (!t.is_object()) loc.fail("tolerances must be an object", "tolerances");
    for (auto it = t.begin(); it != t.end(); ++it) {
      if (!default_tolerances().count(it.key())) loc.fail("unknown tolerance '" + it.key() + "'", it.key());
      if (!it.value().is_number()) loc.fail("tolerance '" + it.key() + "' must be a number", it.key());
      const double v = it.value().get<double>();
      if (!(v >= 1e-14 && v <= 1e-2))
        loc.fail("tolerance '" + it.key() + "' must lie in [1e-14, 1e-2]", it.key());
      c.tolerances[it.key()] = v;
    }
  }
  if (j.contains("seedless")) {
    if (!j.at("seedless").is_boolean()) loc.fail("seedless must be a boolean", "seedless");
    c.seedless = j.at("seedless").get<bool>();
    if (!c.seedless) loc.fail("seedless must be true: every computation here is deterministic", "seedless");
  }
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void flatten(const json& j, const std::string& path, CsvTable& t) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), path.empty() ? it.key() : path + "." + it.key(), t);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], path + "[" + std::to_string(i) + "]", t);
  } else if (j.is_number_float()) {
    t.add_row({path, format_number(j.get<double>())});
  } else if (j.is_string()) {
    t.add_row({path, j.get<std::string>()});
  } else {
    t.add_row({path, j.dump()});
  }
}

std::string leaf(const json& j) { return j.is_number_float() ? format_number(j.get<double>()) : j.dump(); }

void diff_into(const std::string& check, const std::string& path, const json& a, const json& b,
               double tol, std::vector<PayloadDiff>& out) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    if (x == y || std::abs(x - y) <= tol * std::max(std::abs(x), std::abs(y))) return;
    out.push_back({check, path, leaf(a), leaf(b)});
    return;
  }
  if (a.type() != b.type()) {
    out.push_back({check, path, leaf(a), leaf(b)});
    return;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      const std::string p = path + "/" + it.key();
      if (!b.contains(it.key()))
        out.push_back({check, p, leaf(it.value()), "(missing)"});
      else
        diff_into(check, p, it.value(), b.at(it.key()), tol, out);
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key())) out.push_back({check, path + "/" + it.key(), "(missing)", leaf(it.value())});
    return;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      out.push_back({check, path + "/size", std::to_string(a.size()), std::to_string(b.size())});
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) diff_into(check, path + "/" + std::to_string(i), a[i], b[i], tol, out);
    return;
  }
  if (a != b) out.push_back({check, path, leaf(a), leaf(b)});
}

}  // namespace

// ---------------------------------------------------------------------------

const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> t{
      {"certificate_residual", 1e-12}, {"eigen_residual", 1e-10}, {"virial", 1e-8},
      {"series", 1e-12},               {"identity_a", 1e-12},     {"identity_b", 1e-8},
      {"transfer", 1e-6},              {"delta", 1e-10},          {"lap_rel_change", 1e-2},
      {"lemma_a", 1e-10},              {"ergodic_match", 1e-10},  {"reproduce", 1e-12}};
  return t;
}

double ExperimentConfig::tolerance(const std::string& name) const {
  auto it = tolerances.find(name);
  if (it != tolerances.end()) return it->second;
  auto d = default_tolerances().find(name);
  if (d == default_tolerances().end()) throw PreconditionError("unknown tolerance " + name);
  return d->second;
}

json ExperimentConfig::to_json() const {
  json suite_j = json::array();
  for (const SuiteEntry& e : suite) suite_j.push_back({{"op", e.op}, {"params", e.params}});
  json tol = json::object();
  for (const auto& [k, v] : tolerances) tol[k] = v;
  return {{"model", model}, {"suite", suite_j}, {"output_dir", output_dir}, {"tolerances", tol},
          {"seedless", seedless}};
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    auto [l, c] = line_column(text, at);
    // drop the library's own prefix and position
    std::string what = e.what();
    auto p = what.find("parse error");
    if (p != std::string::npos) p = what.find(": ", p);
    throw ConfigError(p == std::string::npos ? what : what.substr(p + 2), l, c);
  }
  return validate(j, Locator{&text});
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

ExperimentConfig config_from_json(const json& j) { return validate(j, Locator{}); }

// ---------------------------------------------------------------------------

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::flagged: return "flagged";
    case CheckStatus::error: return "error";
  }
  return "error";
}

CheckStatus check_status_from_string(const std::string& s) {
  if (s == "pass") return CheckStatus::pass;
  if (s == "fail") return CheckStatus::fail;
  if (s == "flagged") return CheckStatus::flagged;
  if (s == "error") return CheckStatus::error;
  throw PreconditionError("unknown check status '" + s + "'");
}

OutputFormat output_format_from_string(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  if (s == "both") return OutputFormat::both;
  throw ConfigError("format must be csv, json or both");
}

json RunReport::to_json() const {
  json checks_j = json::array();
  int counts[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const CheckResult& c = checks[i];
    ++counts[static_cast<int>(c.status)];
    checks_j.push_back({{"index", i},
                        {"name", c.name},
                        {"anchor", c.anchor},
                        {"status", to_string(c.status)},
                        {"payload", c.payload},
                        {"message", c.message},
                        {"tolerance", c.tolerance},
                        {"wall_seconds", c.wall_seconds},
                        {"csv_file", c.csv_file}});
  }
  return {{"format_version", kReportFormatVersion},
          {"tool", "mourre_lab"},
          {"tool_version", kToolVersion},
          {"config_hash", config.hash()},
          {"config", config.to_json()},
          {"checks", checks_j},
          {"summary", {{"pass", counts[0]}, {"fail", counts[1]}, {"flagged", counts[2]}, {"error", counts[3]}}}};
}

int RunReport::exit_code() const {
  for (const CheckResult& c : checks)
    if (c.status == CheckStatus::fail || c.status == CheckStatus::error) return 1;
  return 0;
}

RunReport execute(const ExperimentConfig& config, int jobs, std::ostream* log) {
  RunReport rep{config, {}};
  std::optional<ModelInstance> model;
  std::string model_error;
  if (!config.suite.empty()) {
    try {
      model = build_model(config.model);
    } catch (const std::exception& e) {
      model_error = e.what();
    }
  }
  for (std::size_t i = 0; i < config.suite.size(); ++i) {
    const SuiteEntry& entry = config.suite[i];
    const CheckInfo* info = find_check(entry.op);
    CheckResult r;
    r.name = entry.op;
    r.anchor = info ? info->anchor : "";
    r.tolerance = config.tolerance("reproduce");
    auto t0 = std::chrono::steady_clock::now();
    if (!model) {
      r.status = CheckStatus::error;
      r.message = entry.op + ": model construction failed: " + model_error;
    } else {
      try {
        CheckContext ctx{*model, entry.params, config, info->parallel ? jobs : 1};
        CheckOutcome o = info->run(ctx);
        r.status = o.status;
        r.payload = std::move(o.payload);
        r.csv = std::move(o.csv);
        r.message = std::move(o.message);
      } catch (const std::exception& e) {
        r.status = CheckStatus::error;
        const std::string what = e.what();
        r.message = what.rfind(entry.op + ":", 0) == 0 ? what : entry.op + ": " + what;
      }
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.payload.is_null()) r.payload = json::object();
    if (log) {
      *log << "[" << i << "] " << std::left << std::setw(26) << r.name << std::setw(8)
           << to_string(r.status) << std::fixed << std::setprecision(3) << r.wall_seconds << " s";
      if (!r.message.empty()) *log << "  " << r.message;
      *log << std::defaultfloat << "\n";
    }
    rep.checks.push_back(std::move(r));
  }
  return rep;
}

void write_report(RunReport& report, const std::string& dir, OutputFormat format) {
  fs::create_directories(dir);
  const std::string hash = report.config.hash();
  if (format != OutputFormat::json) {
    for (std::size_t i = 0; i < report.checks.size(); ++i) {
      CheckResult& c = report.checks[i];
      std::string body = c.csv;
      if (body.empty()) {
        CsvTable t({"key", "value"});
        flatten(c.payload, "", t);
        body = t.render("");
      }
      char name[64];
      std::snprintf(name, sizeof name, "%02zu_", i);
      c.csv_file = name + c.name + ".csv";
      std::ofstream out(fs::path(dir) / c.csv_file, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / c.csv_file).string());
      out << "# config " << hash << " check " << c.name << "\r\n" << body;
    }
  }
  if (format != OutputFormat::csv) {
    std::ofstream out(fs::path(dir) / "report.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / "report.json").string());
    out << report.to_json().dump(2) << "\n";
  }
}

std::vector<PayloadDiff> diff_payloads(const std::string& check, const json& stored,
                                       const json& fresh, double tol) {
  std::vector<PayloadDiff> out;
  diff_into(check, "", stored, fresh, tol, out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void print_config_error(const ConfigError& e, std::ostream& err) {
  err << "config error";
  if (e.line > 0) err << " at line " << e.line << ", column " << e.column;
  err << ": " << e.what() << "\n";
}

void print_summary(const RunReport& rep, std::ostream& out) {
  json s = rep.to_json()["summary"];
  out << "checks: " << rep.checks.size() << "  pass " << s["pass"] << "  fail " << s["fail"]
      << "  flagged " << s["flagged"] << "  error " << s["error"] << "\n";
}

}  // namespace

int run_command(const std::string& config_path, const RunOptions& opts, std::ostream& out,
                std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    print_config_error(e, err);
    return 2;
  }
  const std::string dir = opts.out_dir.value_or(cfg.output_dir);
  try {
    fs::create_directories(dir);
  } catch (const std::exception& e) {
    err << "output directory " << dir << " is not writable: " << e.what() << "\n";
    return 2;
  }
  out << "config " << cfg.hash() << " (" << cfg.model.at("model").get<std::string>() << ", "
      << cfg.suite.size() << " checks)\n";
  RunReport rep = execute(cfg, opts.jobs, &out);
  try {
    write_report(rep, dir, opts.format);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return 2;
  }
  print_summary(rep, out);
  for (const CheckResult& c : rep.checks)
    if (c.status == CheckStatus::fail || c.status == CheckStatus::error)
      err << "check " << c.name << " " << to_string(c.status)
          << (c.message.empty() ? "" : ": " + c.message) << "\n";
  return rep.exit_code();
}

int reproduce_command(const std::string& report_path,
                      const std::optional<std::string>& config_override, int jobs,
                      std::ostream& out, std::ostream& err) {
  json stored;
  try {
    stored = json::parse(read_file(report_path));
  } catch (const std::exception& e) {
    err << "corrupted report: " << e.what() << "\n";
    return 3;
  }
  if (!stored.is_object() || !stored.contains("format_version") || !stored.contains("tool_version") ||
      !stored.contains("config") || !stored.contains("checks") || !stored.at("checks").is_array()) {
    err << "corrupted report: missing format_version, tool_version, config or checks\n";
    return 3;
  }
  if (stored.at("format_version") != kReportFormatVersion || stored.at("tool_version") != kToolVersion) {
    err << "version mismatch: report " << stored.at("format_version") << "/" << stored.at("tool_version")
        << ", tool " << kReportFormatVersion << "/" << kToolVersion << "\n";
    return 3;
  }
  ExperimentConfig cfg;
  if (config_override) {
    try {
      cfg = load_config(*config_override);
    } catch (const ConfigError& e) {
      print_config_error(e, err);
      return 2;
    }
  } else {
    try {
      cfg = config_from_json(stored.at("config"));
    } catch (const std::exception& e) {
      err << "corrupted report: embedded config is invalid: " << e.what() << "\n";
      return 3;
    }
    if (stored.value("config_hash", std::string()) != cfg.hash()) {
      err << "corrupted report: config hash does not match the embedded config\n";
      return 3;
    }
  }
  RunReport fresh = execute(cfg, jobs, &out);
  const json& old = stored.at("checks");
  std::vector<PayloadDiff> diffs;
  if (old.size() != fresh.checks.size()) {
    diffs.push_back({"(suite)", "/size", std::to_string(old.size()), std::to_string(fresh.checks.size())});
  } else {
    for (std::size_t i = 0; i < old.size(); ++i) {
      const json& o = old[i];
      const CheckResult& f = fresh.checks[i];
      try {
        if (o.at("name") != f.name) {
          diffs.push_back({f.name, "/name", o.at("name").dump(), f.name});
          continue;
        }
        if (o.at("status") != to_string(f.status))
          diffs.push_back({f.name, "/status", o.at("status").get<std::string>(), to_string(f.status)});
        double tol = o.at("tolerance").get<double>();
        if (config_override) tol = std::min(tol, cfg.tolerance("reproduce"));
        auto d = diff_payloads(f.name, o.at("payload"), f.payload, tol);
        diffs.insert(diffs.end(), d.begin(), d.end());
      } catch (const json::exception& e) {
        err << "corrupted report: check " << i << ": " << e.what() << "\n";
        return 3;
      }
    }
  }
  if (diffs.empty()) {
    out << "reproduced " << fresh.checks.size() << " checks\n";
    return 0;
  }
  for (const PayloadDiff& d : diffs)
    err << "mismatch " << d.check << d.path << ": stored " << d.stored << ", fresh " << d.fresh << "\n";
  return 3;
}

void list_checks(std::ostream& out) {
  std::size_t w = 4;
  for (const CheckInfo& c : check_registry()) w = std::max(w, c.name.size());
  out << std::left << std::setw(static_cast<int>(w) + 2) << "name" << std::setw(10) << "cells"
      << "anchor\n";
  for (const CheckInfo& c : check_registry()) {
    std::string models;
    for (const auto& m : c.models) models += (models.empty() ? "" : ",") + m;
    out << std::left << std::setw(static_cast<int>(w) + 2) << c.name << std::setw(10)
        << (c.parallel ? "parallel" : "serial") << c.anchor << "\n"
        << std::setw(static_cast<int>(w) + 12) << "" << "models: " << models << "\n";
  }
}

}  // namespace mourre
