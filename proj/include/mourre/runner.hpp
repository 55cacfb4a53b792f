#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mourre/core.hpp"
#include "mourre/models.hpp"
#include "mourre/serialize.hpp"

namespace mourre {

inline constexpr int kReportFormatVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Configuration

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0, int column = 0)
      : Error(what), line(line), column(column) {}
  int line;
  int column;
};

struct SuiteEntry {
  std::string op;
  json params;  // defaults filled in
};

struct ExperimentConfig {
  json model;  // {"model": kind, ...}, defaults filled in
  std::vector<SuiteEntry> suite;
  std::string output_dir = "mourre_out";
  std::map<std::string, double> tolerances;  // overrides only
  bool seedless = true;

  /// Canonical form: every default explicit. This is what gets hashed and embedded.
  json to_json() const;
  std::string hash() const { return content_hash(to_json()); }
  double tolerance(const std::string& name) const;
};

/// Parses and validates a JSON config. Syntax errors carry line and column;
/// unknown keys and bad values carry the position of the offending key when it
/// can be located in `text`.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Validates an already parsed config (reproduce path).
ExperimentConfig config_from_json(const json& j);

/// Default value of every known tolerance.
const std::map<std::string, double>& default_tolerances();

// ---------------------------------------------------------------------------
// Models as configured

struct ModelInstance {
  std::string kind;
  json params;
  int K = 0;
  std::string perturbation = "none";
  std::optional<LatticeOperator> base;     // lattice models: U
  std::optional<LatticeOperator> V;        // lattice perturbation
  std::optional<LatticeOperator> lattice;  // V U, or U without perturbation
  std::optional<ConjugateOp> A;
  std::optional<CocycleModel> cocycle;
  std::optional<FreeEvolutionModel> free_evolution;
  std::optional<double> exact_form;  // c with U*[A,U] = c 1, when known

  Section section() const;
  /// Realization of the effective operator (V U when perturbed).
  Realization& realization();
  /// Realization of the unperturbed operator.
  Realization& base_realization();

 private:
  std::optional<Realization> real_;
  std::optional<Realization> base_real_;
};

/// Default parameters of a model kind; throws ConfigError for unknown kinds.
json model_defaults(const std::string& kind);
/// Builds from a spec whose defaults are already filled in.
ModelInstance build_model(const json& spec);

// ---------------------------------------------------------------------------
// Checks

enum class CheckStatus { pass, fail, flagged, error };
std::string to_string(CheckStatus s);
CheckStatus check_status_from_string(const std::string& s);

struct CheckContext {
  ModelInstance& model;
  const json& params;
  const ExperimentConfig& config;
  int jobs = 1;
};

struct CheckOutcome {
  CheckStatus status = CheckStatus::pass;
  json payload = json::object();
  std::string csv;  // without the comment line; empty for payload-only checks
  std::string message;
};

struct CheckInfo {
  std::string name;
  std::string anchor;
  std::vector<std::string> models;  // applicable model kinds
  bool parallel = false;            // cells may run on the worker pool
  json params;                      // defaults
  std::vector<std::string> tolerances;
  std::function<CheckOutcome(CheckContext&)> run;
};

/// Registry in stable order.
const std::vector<CheckInfo>& check_registry();
const CheckInfo* find_check(const std::string& name);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// ---------------------------------------------------------------------------
// Reports

struct CheckResult {
  std::string name;
  std::string anchor;
  CheckStatus status = CheckStatus::pass;
  json payload;
  std::string csv;
  std::string csv_file;
  std::string message;
  double wall_seconds = 0.0;
  double tolerance = 0.0;  // reproduction tolerance for the payload
};

struct RunReport {
  ExperimentConfig config;
  std::vector<CheckResult> checks;

  json to_json() const;
  /// 0 iff every non-flagged check passed, else 1.
  int exit_code() const;
};

RunReport execute(const ExperimentConfig& config, int jobs, std::ostream* log = nullptr);

enum class OutputFormat { csv, json, both };
OutputFormat output_format_from_string(const std::string& s);

/// Writes report.json and one CSV per check into `dir`.
void write_report(RunReport& report, const std::string& dir, OutputFormat format);

struct PayloadDiff {
  std::string check;
  std::string path;
  std::string stored;
  std::string fresh;
};

/// Numeric leaves of two payloads compared with relative tolerance `tol`;
/// strings and booleans must match exactly.
std::vector<PayloadDiff> diff_payloads(const std::string& check, const json& stored,
                                       const json& fresh, double tol);

// ---------------------------------------------------------------------------
// Commands; return the process exit code (0 pass, 1 check failure,
// 2 config error, 3 reproduction mismatch).

struct RunOptions {
  std::optional<std::string> out_dir;
  int jobs = 1;
  OutputFormat format = OutputFormat::both;
};

int run_command(const std::string& config_path, const RunOptions& opts, std::ostream& out,
                std::ostream& err);
int reproduce_command(const std::string& report_path,
                      const std::optional<std::string>& config_override, int jobs,
                      std::ostream& out, std::ostream& err);
void list_checks(std::ostream& out);

}  // namespace mourre
