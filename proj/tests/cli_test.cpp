#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "chj/cli.hpp"

using namespace chj;
using namespace chj::cli;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("chj_cli_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string config_error(const Flat& flat) {
  try {
    parse_config(flat);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

Outcome quiet_run(const std::string& sub, const RunConfig& cfg) {
  std::ostringstream out, err;
  return run(sub, cfg, out, err);
}

}  // namespace

TEST(ParseConfig, MinimalMoebiusGetsDefaults) {
  const auto cfg = parse_config({{"model", "moebius"}});
  EXPECT_EQ(cfg.n, 200u);
  EXPECT_DOUBLE_EQ(cfg.dt, 1e-2);
  EXPECT_EQ(cfg.dim, 1u);
  EXPECT_EQ(cfg.initial.kind, DataSpec::Kind::constant);
  EXPECT_DOUBLE_EQ(cfg.scheme.v_max, 5.0);
  EXPECT_EQ(cfg.scheme.quadrature, Quadrature::trapezoid);
  EXPECT_EQ(cfg.effective.size(), defaults().size());
}

TEST(ParseConfig, EveryOffendingKeyIsListed) {
  const auto msg = config_error({{"nn", "10"}, {"scheme.vmax", "3"}, {"tolerances.omega", "0"},
                                 {"tolerances.certify", "-1"}, {"model", "quartic"}});
  for (const char* part : {"unknown key 'nn'", "unknown key 'scheme.vmax'", "tolerances.omega",
                           "tolerances.certify", "model: expected"}) {
    EXPECT_NE(msg.find(part), std::string::npos) << part << "\n" << msg;
  }
}

TEST(ParseConfig, VelocityWindowGuard) {
  EXPECT_TRUE(config_error({{"dt", "0.001"}}).empty());
  const auto msg = config_error({{"dt", "0.0005"}});
  EXPECT_NE(msg.find("velocity window does not reach a neighbor"), std::string::npos);
  EXPECT_NE(config_error({{"n", "20"}, {"dt", "0.2"}}).find("wraps around"), std::string::npos);
}

TEST(ParseConfig, DataSpecifications) {
  auto cfg = parse_config({{"initial", "cos(2*pi*q)"}});
  EXPECT_EQ(cfg.initial.kind, DataSpec::Kind::cosine);
  EXPECT_DOUBLE_EQ(cfg.initial.amplitude, 1.0);
  EXPECT_DOUBLE_EQ(cfg.initial.offset, 0.0);
  cfg = parse_config({{"initial", "0.5 * cos(2*pi*q) - 0.25"}});
  EXPECT_EQ(cfg.initial.kind, DataSpec::Kind::cosine);
  EXPECT_DOUBLE_EQ(cfg.initial.amplitude, 0.5);
  EXPECT_DOUBLE_EQ(cfg.initial.offset, -0.25);
  cfg = parse_config({{"initial", "-1.5"}});
  EXPECT_EQ(cfg.initial.kind, DataSpec::Kind::constant);
  EXPECT_DOUBLE_EQ(cfg.initial.value, -1.5);
  EXPECT_NE(config_error({{"initial", "sin(q)"}}).find("initial"), std::string::npos);

  const auto dir = scratch("data");
  const auto path = (dir / "u0.csv").string();
  {
    std::ofstream os(path);
    write_csv(os, cosine_function<1>(0.3).sample(Grid<1>(200)));
  }
  cfg = parse_config({{"initial", path}});
  EXPECT_EQ(cfg.initial.kind, DataSpec::Kind::file);
  EXPECT_DOUBLE_EQ(field(cfg.initial, Grid<1>(200))[0], 0.3);
  EXPECT_THROW(field(cfg.initial, Grid<1>(100)), ConfigError);
}

TEST(ParseConfig, ModelAndDimensionConstraints) {
  EXPECT_NE(config_error({{"dim", "2"}}).find("moebius"), std::string::npos);
  EXPECT_TRUE(config_error({{"dim", "2"}, {"model", "monotone"}, {"n", "40"},
                            {"flow.q", "0.1,0.2"}, {"flow.p", "0,0"}, {"action.q0", "0.5,0.5"}})
                  .empty());
  EXPECT_TRUE(config_error({{"dim", "2"}, {"model", "monotone"}, {"n", "40"}}).empty());
  EXPECT_NE(config_error({{"dim", "3"}}).find("dim"), std::string::npos);
  EXPECT_NE(config_error({{"moebius.a_infinity", "1.5"}}).find("a_infinity"), std::string::npos);
}

TEST(ConfigFile, SectionsQuotesAndOverrides) {
  const auto dir = scratch("ini");
  const auto path = (dir / "run.ini").string();
  {
    std::ofstream os(path);
    os << "model = \"monotone\"\nn = 100\n\n[monotone]\nlambda = 2\n\n[connect]\nmethod = graph2\n";
  }
  auto flat = read_config_file(path);
  EXPECT_EQ(flat.at("model"), "monotone");
  EXPECT_EQ(flat.at("monotone.lambda"), "2");
  apply_overrides(flat, {"n=120", "scheme.v_max = 8"});
  const auto cfg = parse_config(flat);
  EXPECT_EQ(cfg.model, "monotone");
  EXPECT_EQ(cfg.n, 120u);
  EXPECT_DOUBLE_EQ(cfg.lambda, 2.0);
  EXPECT_DOUBLE_EQ(cfg.scheme.v_max, 8.0);
  EXPECT_EQ(cfg.method, "graph2");
  EXPECT_THROW(apply_overrides(flat, {"novalue"}), ConfigError);
  EXPECT_THROW(read_config_file((dir / "missing.ini").string()), ConfigError);
  {
    std::ofstream os(path);
    os << "[grid\nn = 3\n";
  }
  EXPECT_THROW(read_config_file(path), ConfigError);
}

TEST(ConfigHash, FnvOverSortedLines) {
  RunConfig cfg;
  cfg.effective = {{"n", "3"}, {"a", "b"}, {"output", "anywhere"}};
  EXPECT_EQ(hash_string(config_hash(cfg)), "35516730bcec1b6f");
  auto a = parse_config({{"output", "x"}});
  auto b = parse_config({{"output", "y"}});
  auto c = parse_config({{"dt", "0.02"}});
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Run, OracleMoebiusPrintsTanh) {
  const auto dir = scratch("oracle");
  auto cfg = parse_config({{"t_final", "1"}, {"oracle.w0", "0"}, {"output", dir.string()}});
  std::ostringstream out, err;
  const auto o = run("oracle-moebius", cfg, out, err);
  EXPECT_EQ(o.exit_code, 0);
  EXPECT_NE(out.str().find("u=0.7615941560"), std::string::npos) << out.str();
  const auto summary = nlohmann::json::parse(slurp(dir / "oracle-moebius.json"));
  EXPECT_EQ(summary["version"], CHJ_VERSION);
  EXPECT_EQ(summary["config_hash"], hash_string(config_hash(cfg)));
  EXPECT_NEAR(summary["results"]["u"].get<double>(), std::tanh(1.0), 1e-15);
  EXPECT_EQ(slurp(dir / "oracle-moebius.csv").substr(0, 12), "t,q0,p0,u,H\n");
}

TEST(Run, EvolveMoebiusFromZeroConverges) {
  const auto dir = scratch("evolve");
  const auto cfg = parse_config({{"n", "40"}, {"dt", "0.05"}, {"t_final", "15"}, {"output", dir.string()}});
  EXPECT_EQ(quiet_run("evolve", cfg).exit_code, 0);
  const auto s = nlohmann::json::parse(slurp(dir / "evolve.json"));
  EXPECT_TRUE(s["results"]["converged"].get<bool>());
  EXPECT_NEAR(s["results"]["limit_min"].get<double>(), 1.0, 1e-9);
  EXPECT_NEAR(s["results"]["limit_max"].get<double>(), 1.0, 1e-9);
  EXPECT_EQ(s["hypotheses"]["convergence"], "holds");
  EXPECT_EQ(s["hypotheses"]["convexity"], "holds");
  const auto csv = slurp(dir / "evolve.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,index,q0,value");
}

TEST(Run, OutputsAreByteIdentical) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  for (const auto& sub : {std::string("evolve"), std::string("action"), std::string("flow")}) {
    Flat flat{{"model", "monotone"}, {"n", "60"}, {"dt", "0.02"}, {"t_final", "1"},
              {"initial", "0.2*cos(2*pi*q)"}, {"flow.p", "0.3"}};
    flat["output"] = a.string();
    quiet_run(sub, parse_config(flat));
    flat["output"] = b.string();
    quiet_run(sub, parse_config(flat));
    EXPECT_EQ(slurp(a / (sub + ".csv")), slurp(b / (sub + ".csv"))) << sub;
    EXPECT_FALSE(slurp(a / (sub + ".csv")).empty());
  }
}

TEST(Run, ExitCodesByErrorKind) {
  const auto dir = scratch("codes");
  auto cfg = parse_config({{"n", "50"}, {"dt", "0.02"}, {"connect.times", "1"}, {"connect.horizon", "4"},
                           {"output", dir.string()}});
  auto o = quiet_run("connect", cfg);
  EXPECT_EQ(o.exit_code, 30);
  EXPECT_EQ(o.summary["status"], "error");
  EXPECT_EQ(o.summary["hypotheses"]["convergence1"], "fails");
  const auto written = nlohmann::json::parse(slurp(dir / "connect.json"));
  EXPECT_EQ(written["exit_code"], 30);
  EXPECT_NE(written["error"]["message"].get<std::string>().find("hypothesis (convergence1) fails"),
            std::string::npos);

  cfg = parse_config({{"model", "monotone"}, {"monotone.p_bound", "1"}, {"flow.p", "0.9"}, {"t_final", "5"},
                      {"output", dir.string()}});
  EXPECT_EQ(quiet_run("flow", cfg).exit_code, 20);

  cfg = parse_config({{"n", "50"}, {"dt", "0.02"}, {"connect.times", "4,8"}, {"connect.horizon", "12"},
                      {"tolerances.certify", "1e-12"}, {"output", dir.string()}});
  EXPECT_EQ(quiet_run("connect", cfg).exit_code, 40);

  cfg = parse_config({{"output", dir.string()}});
  EXPECT_EQ(quiet_run("nonsense", cfg).exit_code, 10);
}

TEST(Run, ConnectGraph1Certifies) {
  const auto dir = scratch("connect");
  const auto cfg = parse_config({{"n", "50"}, {"dt", "0.02"}, {"connect.times", "4,8"}, {"connect.horizon", "12"},
                                 {"connect.targets", "0.1;0.6"}, {"output", dir.string()}});
  const auto o = quiet_run("connect", cfg);
  EXPECT_EQ(o.exit_code, 0);
  EXPECT_TRUE(o.summary["results"]["certified"].get<bool>());
  EXPECT_EQ(o.summary["results"]["distances"].size(), 4u);
  EXPECT_EQ(o.summary["hypotheses"]["convergence1"], "holds");
  std::istringstream pts(slurp(dir / "connect_points.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(pts, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST(Run, CheckDeformationReport) {
  const auto dir = scratch("deform");
  auto cfg = parse_config({{"n", "40"}, {"output", dir.string()}});
  EXPECT_EQ(quiet_run("check-deformation", cfg).exit_code, 0);
  auto s = nlohmann::json::parse(slurp(dir / "check-deformation.json"));
  EXPECT_EQ(s["results"]["conditions"]["c"]["verdict"], "holds");
  EXPECT_TRUE(s["results"]["conditions"]["c"]["witness"].contains("margin"));
  EXPECT_EQ(s["hypotheses"]["(c)"], "holds");

  cfg = parse_config({{"n", "40"}, {"initial", "-1.5"}, {"output", dir.string()}});
  quiet_run("check-deformation", cfg);
  s = nlohmann::json::parse(slurp(dir / "check-deformation.json"));
  for (const char* key : {"a", "b", "c", "a'", "b'", "c'"}) {
    EXPECT_EQ(s["results"]["conditions"][key]["verdict"], "fails") << key;
  }
}

TEST(ParseConfig, SingleCoordinateIsBroadcast) {
  const auto cfg = parse_config({{"model", "monotone"}, {"dim", "2"}, {"n", "40"}, {"dt", "0.02"},
                                 {"scheme.v_max", "2"}, {"flow.p", "0.5"}});
  ASSERT_EQ(cfg.flow_p.size(), 2u);
  EXPECT_DOUBLE_EQ(cfg.flow_p[1], 0.5);
  EXPECT_EQ(cfg.action_q0.size(), 2u);
  const auto msg = config_error({{"model", "monotone"}, {"dim", "2"}, {"n", "40"}, {"dt", "0.02"},
                                 {"scheme.v_max", "2"}, {"flow.p", "1,2,3"}});
  EXPECT_NE(msg.find("flow.p: expected 2 coordinate(s)"), std::string::npos) << msg;
}

TEST(SampleConfigs, AllParse) {
  std::size_t count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(CHJ_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    ++count;
    EXPECT_NO_THROW(parse_config(read_config_file(entry.path().string()))) << entry.path();
  }
  EXPECT_GE(count, 5u);
}
