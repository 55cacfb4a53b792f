#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mourre/runner.hpp"

using namespace mourre;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mourre_runner_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cfg, const fs::path& out, std::string* err_text = nullptr, int jobs = 1) {
  RunOptions o;
  o.out_dir = out.string();
  o.jobs = jobs;
  std::ostringstream out_s, err_s;
  int code = run_command(cfg, o, out_s, err_s);
  if (err_text) *err_text = err_s.str();
  return code;
}

}  // namespace

TEST_CASE("registry: stable order, unique names, anchors present") {
  const auto& reg = check_registry();
  std::set<std::string> names;
  for (const CheckInfo& c : reg) {
    CHECK(names.insert(c.name).second);
    CHECK_FALSE(c.anchor.empty());
    CHECK_FALSE(c.models.empty());
    for (const auto& t : c.tolerances) CHECK(default_tolerances().count(t) == 1);
  }
  for (const char* n : {"verify_identity_a", "mourre_constant_cocycle", "lap_sweep", "certify_mourre",
                        "delta_kernel", "smooth_sum", "wiener_diagnostic"})
    CHECK(find_check(n) != nullptr);
  CHECK(find_check("verify_identity_a")->anchor.find("(H_theta - i)^{-1}") != std::string::npos);
  CHECK(find_check("mourre_constant_cocycle")->anchor == "U*[P_n, U] >= pi");
  std::ostringstream a, b;
  list_checks(a);
  list_checks(b);
  CHECK(a.str() == b.str());
}

TEST_CASE("config validation") {
  ExperimentConfig c = parse_config(R"({"model": {"model": "shift"}})");
  CHECK(c.model.at("K") == 128);
  CHECK(c.suite.empty());
  CHECK(c.tolerance("virial") == 1e-8);

  auto error_at = [](const std::string& text) -> std::pair<int, int> {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return {e.line, e.column};
    }
    return {-1, -1};
  };
  CHECK(error_at("{\"model\": {\"model\": \"shift\"},\n  \"extra\": 1}") == std::pair<int, int>{2, 3});
  CHECK(error_at("{\"model\": {\"model\": \"shift\"\n  \"K\": 3}}").first == 2);
  CHECK(error_at(R"({"model": {"model": "shift", "K": 3}})").first == 1);
  CHECK(error_at(R"({"model": {"model": "torus"}})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "suite": [{"op": "nope"}]})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "suite": [{"op": "certify_mourre", "params": {"colour": 1}}]})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "suite": [{"op": "mourre_constant_cocycle"}]})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "tolerances": {"virial": 1e-15}})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "tolerances": {"virial": 0.02}})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "tolerances": {"speed": 1e-6}})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "seedless": false})").first == 1);
  CHECK(error_at(R"({"model": {"model": "shift"}, "suite": [{"op": "certify_mourre", "params": {"window": 3}}]})").first == 1);
  // boundary values of the tolerance range are accepted
  CHECK(parse_config(R"({"model": {"model": "shift"}, "tolerances": {"virial": 1e-14, "delta": 1e-2}})")
            .tolerance("delta") == 1e-2);
}

TEST_CASE("config hash is canonical") {
  ExperimentConfig a = parse_config(R"({"model": {"model": "shift"}, "suite": [{"op": "form_identity"}]})");
  ExperimentConfig b = parse_config(R"({"suite": [{"op": "form_identity", "params": {}}], "model": {"K": 128, "model": "shift"}})");
  CHECK(a.hash() == b.hash());
  ExperimentConfig c = parse_config(R"({"model": {"model": "shift", "K": 64}, "suite": [{"op": "form_identity"}]})");
  CHECK(a.hash() != c.hash());
  CHECK(config_from_json(a.to_json()).hash() == a.hash());
}

TEST_CASE("run: shift certificate, empty suite, error propagation") {
  fs::path d = scratch("run");
  std::string cfg = write(d / "shift.json",
                          R"({"model": {"model": "shift", "K": 64},
                              "suite": [{"op": "certify_mourre", "params": {"expect_a": 1.0}},
                                        {"op": "form_identity"}]})");
  CHECK(run(cfg, d / "out") == 0);
  json rep = json::parse(slurp(d / "out" / "report.json"));
  CHECK(rep["checks"][0]["status"] == "pass");
  CHECK(std::abs(rep["checks"][0]["payload"]["a_estimate"].get<double>() - 1.0) < 1e-12);
  CHECK(rep["checks"][0]["anchor"] == find_check("certify_mourre")->anchor);
  CHECK(rep["config_hash"] == config_from_json(rep["config"]).hash());
  std::string csv = slurp(d / "out" / "00_certify_mourre.csv");
  CHECK(csv.rfind("# config " + rep["config_hash"].get<std::string>(), 0) == 0);
  CHECK(csv.find("\r\n") != std::string::npos);

  std::string empty = write(d / "empty.json", R"({"model": {"model": "shift"}, "suite": []})");
  CHECK(run(empty, d / "empty_out") == 0);
  CHECK(json::parse(slurp(d / "empty_out" / "report.json"))["checks"].empty());

  std::string h0 = write(d / "h0.json", R"({"model": {"model": "cocycle", "K": 16,
      "h_hat": [{"l": 0, "re": 0.25, "im": 0.0}, {"l": 1, "re": 0.0, "im": -0.0795}]},
      "suite": [{"op": "ergodic_average_bound"}]})");
  std::string err;
  CHECK(run(h0, d / "h0_out", &err) == 1);
  CHECK(err.find("ergodic_average_bound") != std::string::npos);
  CHECK(err.find("h_hat[0] must vanish") != std::string::npos);

  std::string bad = write(d / "bad.json", "{\"model\": {\"model\": \"shift\"},\n \"suite\": [}");
  CHECK(run(bad, d / "bad_out", &err) == 2);
  CHECK(err.find("line 2") != std::string::npos);
  CHECK(run((d / "missing.json").string(), d / "m_out") == 2);
}

TEST_CASE("determinism and reproduce") {
  fs::path d = scratch("repro");
  const std::string body = R"({"model": {"model": "shift", "K": 32},
      "suite": [{"op": "certify_mourre"}, {"op": "delta_kernel", "params": {"n_points": 6}},
                {"op": "lap_sweep", "params": {"eps": [0.1, 0.03], "lambda": [0.0, 1.0]}}]})";
  std::string cfg = write(d / "c.json", body);
  REQUIRE(run(cfg, d / "a", nullptr, 1) == 0);
  REQUIRE(run(cfg, d / "b", nullptr, 3) == 0);
  for (const char* f : {"00_certify_mourre.csv", "01_delta_kernel.csv", "02_lap_sweep.csv"})
    CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));

  std::ostringstream o, e;
  CHECK(reproduce_command((d / "a" / "report.json").string(), std::nullopt, 2, o, e) == 0);

  json rep = json::parse(slurp(d / "a" / "report.json"));
  rep["checks"][0]["payload"]["a_estimate"] = 0.75;
  write(d / "tampered.json", rep.dump());
  CHECK(reproduce_command((d / "tampered.json").string(), std::nullopt, 1, o, e) == 3);

  rep = json::parse(slurp(d / "a" / "report.json"));
  rep["tool_version"] = "0.0.0";
  write(d / "old.json", rep.dump());
  CHECK(reproduce_command((d / "old.json").string(), std::nullopt, 1, o, e) == 3);

  write(d / "corrupt.json", "{\"format_version\": 1, \"checks\": [");
  CHECK(reproduce_command((d / "corrupt.json").string(), std::nullopt, 1, o, e) == 3);

  std::string same = write(d / "same.json", body);
  CHECK(reproduce_command((d / "a" / "report.json").string(), same, 1, o, e) == 0);
  // a different truncation under --config must be reported as a mismatch
  std::string other = write(d / "other.json", R"({"model": {"model": "shift", "K": 48},
      "suite": [{"op": "certify_mourre"}, {"op": "delta_kernel", "params": {"n_points": 6}},
                {"op": "lap_sweep", "params": {"eps": [0.1, 0.03], "lambda": [0.0, 1.0]}}]})");
  CHECK(reproduce_command((d / "a" / "report.json").string(), other, 1, o, e) == 3);
  write(d / "broken.json", "{\"model\": 1}");
  CHECK(reproduce_command((d / "a" / "report.json").string(), (d / "broken.json").string(), 1, o, e) == 2);
}

TEST_CASE("payload diff") {
  json a{{"x", 1.0}, {"v", {1.0, 2.0}}, {"s", "ok"}};
  json b{{"x", 1.0 + 1e-15}, {"v", {1.0, 2.0}}, {"s", "ok"}};
  CHECK(diff_payloads("c", a, b, 1e-12).empty());
  CHECK(diff_payloads("c", a, b, 0.0).size() == 1);
  b["s"] = "no";
  b["extra"] = true;
  CHECK(diff_payloads("c", a, b, 1e-12).size() == 2);
}
