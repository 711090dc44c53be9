#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mfc/config.hpp"
#include "mfc/experiments.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = fs::temp_directory_path() / ("mfc_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli(const std::string& args) {
  const fs::path o = scratch() / "stdout.txt", e = scratch() / "stderr.txt";
  const std::string cmd = std::string(MFC_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << body;
  return p;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// ---------------------------------------------------------------------------
// RunConfig in process

TEST(RunConfig, DefaultsCoverEveryKey) {
  const mfc::RunConfig cfg;
  for (const auto& k : mfc::key_registry()) EXPECT_NO_THROW(cfg.raw(k.name)) << k.name;
  EXPECT_EQ(cfg.dim(), 1);
  EXPECT_EQ(cfg.seed(), 1u);
  EXPECT_NO_THROW(cfg.validate());
  const auto g = cfg.grid<1>();
  EXPECT_EQ(g.nx, 2401u);
  EXPECT_EQ(g.dt, 0.005);
}

TEST(RunConfig, ParsesCommentsListsAndFlags) {
  std::istringstream in(
      "# a comment\n"
      "\n"
      "grid.nx = 401   # trailing comment\n"
      "fp.fictitious_play = true\n"
      "doubling.eps = 0.01, 0.1\n"
      "cost.running = arctan 1 gaussian_bump 1 1; linear 0.5 tanh_ramp\n");
  const auto cfg = mfc::RunConfig::parse(in);
  EXPECT_EQ(cfg.integer("grid.nx"), 401);
  EXPECT_TRUE(cfg.flag("fp.fictitious_play"));
  EXPECT_EQ(cfg.reals("doubling.eps"), (std::vector<double>{0.01, 0.1}));
  EXPECT_EQ(cfg.line_of("grid.nx"), 3u);
  EXPECT_EQ(cfg.line_of("grid.dt"), 0u);
  const auto cyl = cfg.cylindrical<1>();
  ASSERT_EQ(cyl.running.size(), 2u);
  EXPECT_EQ(cyl.running[0].outer.kind, mfc::OuterKind::arctan);
  EXPECT_EQ(cyl.running[0].inner.f.value({1.0}), 1.0);  // bump centered at 1
  EXPECT_EQ(cyl.running[1].outer.scale, 0.5);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValuesWithLine) {
  const auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      mfc::RunConfig::parse(in, "x.cfg");
    } catch (const mfc::ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("\n\nbogus.key = 1\n").find("x.cfg:3: unknown key 'bogus.key'"), std::string::npos);
  EXPECT_NE(message("grid.dt = fast\n").find("grid.dt"), std::string::npos);
  EXPECT_NE(message("grid.nx = 1.5\n").find("an integer"), std::string::npos);
  EXPECT_NE(message("seed = 1\nseed = 2\n").find("already set on line 1"), std::string::npos);
  EXPECT_NE(message("just words\n").find("expected 'key = value'"), std::string::npos);
}

TEST(RunConfig, SemanticErrorsNameKeyAndLine) {
  std::istringstream in("seed = 3\ngrid.dt = -1\n");
  const auto cfg = mfc::RunConfig::parse(in, "bad.cfg");
  try {
    cfg.validate();
    FAIL() << "validate accepted grid.dt = -1";
  } catch (const mfc::InvalidArgument& e) {
    const std::string m = cfg.annotate(e.what());
    EXPECT_NE(m.find("grid.dt"), std::string::npos) << m;
    EXPECT_NE(m.find("line 2"), std::string::npos) << m;
  }
  std::istringstream terms("cost.terminal = linear 1 no_such_inner\n");
  EXPECT_THROW(mfc::RunConfig::parse(terms).validate(), mfc::ConfigError);
  std::istringstream sizes("convergence.means = 1,2\nconvergence.sigmas = 1\n");
  EXPECT_THROW(mfc::RunConfig::parse(sizes).validate(), mfc::InvalidArgument);
}

TEST(RunConfig, EchoResolvesAutoAndRoundTrips) {
  std::istringstream in("grid.dim = 2\ncost.beta = 0.25\n");
  const auto cfg = mfc::RunConfig::parse(in);
  std::ostringstream echo;
  cfg.write(echo);
  EXPECT_NE(echo.str().find("grid.nx = 101\n"), std::string::npos);
  EXPECT_NE(echo.str().find("grid.lo = -10\n"), std::string::npos);
  EXPECT_EQ(echo.str().find("auto"), std::string::npos);
  std::istringstream again(echo.str());
  std::ostringstream second;
  mfc::RunConfig::parse(again).write(second);
  EXPECT_EQ(second.str(), echo.str());
  EXPECT_EQ(count_lines(echo.str()), mfc::key_registry().size());
}

TEST(Recipes, SixNamedRecipes) {
  ASSERT_EQ(mfc::recipes().size(), 6u);
  for (const char* name : {"metric_suite", "value_solve", "lipschitz", "viscosity", "doubling", "convergence"}) {
    EXPECT_NE(mfc::find_recipe(name), nullptr) << name;
  }
  EXPECT_EQ(mfc::find_recipe("nope"), nullptr);
}

// ---------------------------------------------------------------------------
// The executable

TEST(Cli, ListsSixRecipes) {
  const auto plain = cli("list");
  EXPECT_EQ(plain.code, 0);
  for (const auto& r : mfc::recipes()) EXPECT_NE(plain.out.find(r.name), std::string::npos) << r.name;
  const auto csv = cli("list --csv");
  EXPECT_EQ(csv.code, 0);
  EXPECT_EQ(count_lines(csv.out), 7u);
  EXPECT_EQ(csv.out.rfind("name,description,checks\n", 0), 0u);
}

TEST(Cli, UnknownFlagPrintsUsage) {
  for (const char* args : {"list --bogus", "run --experiment value_solve --frobnicate", "", "launch"}) {
    const auto r = cli(args);
    EXPECT_EQ(r.code, 1) << args;
    EXPECT_NE(r.err.find("Usage"), std::string::npos) << args;
  }
}

TEST(Cli, TrivialValueSolve) {
  const auto cfg = write_config("trivial.cfg", "cost.terminal =\nparticles.n = 0\ngrid.nx = 401\ngrid.dt = 0.02\n");
  const fs::path out = scratch() / "trivial";
  const auto r = cli("run --experiment value_solve --config " + cfg.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const std::string manifest = slurp(out / "manifest.txt");
  EXPECT_NE(manifest.find("experiment = value_solve"), std::string::npos);
  EXPECT_NE(manifest.find("wall_seconds = "), std::string::npos);
  EXPECT_NE(manifest.find("cost.terminal = \n"), std::string::npos);
  EXPECT_NE(manifest.find("fixed_point = PASS"), std::string::npos);
  EXPECT_EQ(slurp(out / "value.csv"),
            "t0,mean,sigma,v,converged,iterations,pontryagin_residual,monotone\n0,0.5,1,0,1,1,0,1\n");
  EXPECT_TRUE(fs::exists(out / "plotdata_trace.csv"));
  EXPECT_TRUE(fs::exists(out / "flow" / "m_manifest.csv"));
}

TEST(Cli, ConfigErrorsExitOne) {
  const auto dt = write_config("dt.cfg", "# negative step\ngrid.dt = -1\n");
  auto r = cli("run --experiment value_solve --config " + dt.string() + " --out " + (scratch() / "dt").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("grid.dt"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(scratch() / "dt" / "manifest.txt"));

  const auto key = write_config("key.cfg", "grid.dtt = 0.1\n");
  r = cli("run --experiment value_solve --config " + key.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown key 'grid.dtt'"), std::string::npos) << r.err;

  r = cli("run --experiment no_such_recipe --out " + (scratch() / "none").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no_such_recipe"), std::string::npos);

  r = cli("run --experiment value_solve --set fp.lambda=2 --out " + (scratch() / "lambda").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("fp.lambda"), std::string::npos);
}

TEST(Cli, NonConvergenceExitsThree) {
  const auto cfg = write_config("slow.cfg",
                                "grid.nx = 401\ngrid.dt = 0.02\nparticles.n = 0\nfp.max_iter = 1\n"
                                "cost.running = arctan 1 gaussian_bump 1 1\n");
  const auto r = cli("run -e value_solve -c " + cfg.string() + " -o " + (scratch() / "slow").string());
  EXPECT_EQ(r.code, 3) << r.out << r.err;
  EXPECT_NE(slurp(scratch() / "slow" / "manifest.txt").find("fixed_point = FAIL"), std::string::npos);
}

TEST(Cli, MetricSuiteDefaultsPass) {
  const fs::path out = scratch() / "metric";
  const auto r = cli("run --experiment metric_suite --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  for (const char* f : {"metric_equivalence.csv", "metric_dirac.csv", "parseval.csv", "weakstar_shift.csv",
                        "weakstar_escape.csv", "plotdata_weakstar_shift.csv"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const std::string manifest = slurp(out / "manifest.txt");
  for (const char* c : {"kernel_equivalence = PASS", "dirac_pair = PASS", "parseval = PASS"}) {
    EXPECT_NE(manifest.find(c), std::string::npos) << c;
  }
  EXPECT_EQ(count_lines(slurp(out / "parseval.csv")), 201u);
}

TEST(Cli, SameSeedSameBytes) {
  const auto cfg = write_config("particles.cfg", "grid.nx = 401\ngrid.dt = 0.02\nparticles.n = 2000\n");
  const auto run = [&](const std::string& tag, const std::string& seed) {
    const fs::path out = scratch() / tag;
    const auto r = cli("run -e value_solve -c " + cfg.string() + " -o " + out.string() + " --seed " + seed);
    // 2000 particles may miss the 5e-3 agreement claim (exit 2); only the bytes matter here
    EXPECT_TRUE(r.code == 0 || r.code == 2) << r.out << r.err;
    return out;
  };
  const auto a = run("seed_a", "7"), b = run("seed_b", "7"), c = run("seed_c", "8");
  for (const char* f : {"value.csv", "trace.csv", "particles.csv", "plotdata_terminal_density.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_NE(slurp(a / "particles.csv"), slurp(c / "particles.csv"));
  EXPECT_NE(slurp(a / "manifest.txt").find("seed = 7\n"), std::string::npos);
}

}  // namespace
