#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "confope/cli.hpp"

using namespace confope;
namespace fs = std::filesystem;

namespace {

// The CLI echoes CSV and progress lines to stdout; run it with the stream
// captured so test output stays readable.
int run(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  int rc = cli_main(args);
  std::cout.rdbuf(old);
  if (out) *out = captured.str();
  return rc;
}

fs::path fresh_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "confope_cli_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("help succeeds, bad usage exits 2") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"gen-data", "--bogus-flag"}) == 2);
  CHECK(run({"gen-data", "--env", "gridworld", "--n", "10", "--H", "0"}) == 2);
  CHECK(run({"gen-data", "--env", "no_such_env", "--n", "10"}) == 2);
  CHECK(run({"ope", "--method", "fqe"}) == 2);               // neither --data nor --env
  CHECK(run({"ope", "--method", "fqe", "--data", "/nonexistent/dir"}) == 2);
  CHECK(run({"ope", "--analytic", "--env", "gridworld", "--method", "fqe", "--gamma", "0.5"}) == 2);
}

TEST_CASE("gen-data writes a reproducible dataset") {
  fs::path d1 = fresh_dir("gen1"), d2 = fresh_dir("gen2"), d3 = fresh_dir("gen3");
  std::vector<std::string> base = {"gen-data", "--env", "gridworld", "--n", "20",
                                   "--H", "4", "--seed", "9"};
  auto with_out = [&](const fs::path& p) {
    std::vector<std::string> a = base;
    a.push_back("--out");
    a.push_back(p.string());
    return a;
  };
  CHECK(run(with_out(d1)) == 0);
  CHECK(fs::exists(d1 / "data.jsonl"));
  CHECK(fs::exists(d1 / "meta.json"));
  CHECK(count_lines(slurp(d1 / "data.jsonl")) == 20);

  CHECK(run(with_out(d2)) == 0);
  CHECK(slurp(d1 / "data.jsonl") == slurp(d2 / "data.jsonl"));

  std::vector<std::string> other = with_out(d3);
  other[8] = "10";  // --seed 10
  CHECK(run(other) == 0);
  CHECK(slurp(d1 / "data.jsonl") != slurp(d3 / "data.jsonl"));
}

TEST_CASE("analytic ope prints and writes the values table") {
  fs::path d = fresh_dir("ope1");
  std::string stdout_text;
  CHECK(run({"ope", "--analytic", "--env", "gridworld", "--method", "fqe",
             "--out", d.string()},
            &stdout_text) == 0);
  std::string csv = slurp(d / "values.csv");
  CHECK(csv.rfind("gamma,method,state,value,is_lower_bound,seed\n", 0) == 0);
  CHECK(stdout_text.find("gamma,method,state,value,is_lower_bound,seed") != std::string::npos);
  CHECK(count_lines(csv) >= 2);  // header + at least one value row
}

TEST_CASE("unreachable start state is a coverage failure") {
  fs::path d = fresh_dir("cov");
  CHECK(run({"gen-data", "--env", "gridworld", "--n", "5", "--H", "2", "--seed", "1",
             "--out", d.string()}) == 0);
  CHECK(run({"ope", "--data", d.string(), "--method", "mb-pgd", "--gamma", "2",
             "--state", "15"}) == 4);
}

TEST_CASE("config file fills in defaults, flags override it") {
  fs::path d = fresh_dir("cfg");
  fs::path cfg = d / "run.json";
  {
    std::ofstream f(cfg);
    f << "{\"env\": \"gridworld\", \"n\": 77, \"H\": 3, \"seed\": 5}\n";
  }
  fs::path out1 = fresh_dir("cfg_out1");
  CHECK(run({"gen-data", "--config", cfg.string(), "--out", out1.string()}) == 0);
  CHECK(count_lines(slurp(out1 / "data.jsonl")) == 77);

  fs::path out2 = fresh_dir("cfg_out2");
  CHECK(run({"gen-data", "--config", cfg.string(), "--n", "33", "--out", out2.string()}) == 0);
  CHECK(count_lines(slurp(out2 / "data.jsonl")) == 33);
}

TEST_CASE("improve writes a trace and a policy") {
  fs::path d = fresh_dir("improve");
  CHECK(run({"improve", "--method", "maxmin", "--analytic", "--env", "gridworld",
             "--gamma", "2", "--outer", "3", "--inner", "20", "--out", d.string()}) == 0);
  std::string trace = slurp(d / "trace.csv");
  CHECK(trace.rfind("iter,objective,grad_norm\n", 0) == 0);
  CHECK(count_lines(trace) == 1 + 3 + 1);  // header + outer+1 iterates
  nlohmann::json pj = nlohmann::json::parse(slurp(d / "policy.json"));
  CHECK(pj.contains("theta"));
  CHECK(pj.contains("pi"));
  CHECK(pj["pi"].size() == 16);
}

TEST_CASE("thread override is accepted") {
  setenv("CONFOPE_THREADS", "1", 1);
  fs::path d = fresh_dir("threads");
  CHECK(run({"gen-data", "--env", "two_mixture", "--n", "5", "--seed", "2",
             "--out", d.string()}) == 0);
  unsetenv("CONFOPE_THREADS");
}
