#include <CLI11.hpp>

#include "chj/cli.hpp"

namespace {

struct Shortcut {
  const char* flag;
  const char* key;
  const char* help;
};

const Shortcut kCommon[] = {
    {"--model", "model", "moebius | monotone | mechanical"},
    {"--dim", "dim", "torus dimension (1 or 2)"},
    {"--n", "n", "nodes per axis"},
    {"--dt", "dt", "time step"},
    {"--t", "t_final", "final time"},
    {"--initial", "initial", "initial data: constant, A*cos(2*pi*q)+B or CSV path"},
    {"--reference", "reference", "reference solution u_-"},
    {"--out", "output", "output directory"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact Hamilton-Jacobi toolkit", "chj"};
  app.set_version_flag("--version", CHJ_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> shortcut_values;

  app.add_option("-c,--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", overrides, "override a key: section.key=value (repeatable)");
  for (const auto& s : kCommon) app.add_option(s.flag, shortcut_values[s.key], s.help);

  const std::map<std::string, std::string> help{
      {"evolve", "iterate the backward Lax-Oleinik semigroup"},
      {"flow", "integrate the contact characteristic flow"},
      {"action", "tabulate the backward or forward action function"},
      {"connect", "construct a connecting orbit from Lambda_0 to Lambda_-"},
      {"check-deformation", "evaluate the homotopy convergence conditions"},
      {"oracle-moebius", "closed-form Moebius flow"},
  };
  for (const auto& name : chj::cli::subcommands()) app.add_subcommand(name, help.at(name))->fallthrough();
  auto* connect = app.get_subcommand("connect");
  connect->add_option("--method", shortcut_values["connect.method"], "graph1 | graph2");
  auto* oracle = app.get_subcommand("oracle-moebius");
  oracle->add_option("--w0", shortcut_values["oracle.w0"], "start w0 = u + i p, given as 'u' or 'u,p'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : chj::exit_code(chj::ErrorKind::config);
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  chj::cli::RunConfig cfg;
  try {
    chj::cli::Flat flat;
    if (!config_path.empty()) flat = chj::cli::read_config_file(config_path);
    chj::cli::apply_overrides(flat, overrides);
    for (const auto& [key, value] : shortcut_values)
      if (!value.empty()) flat[key] = value;
    cfg = chj::cli::parse_config(flat);
  } catch (const chj::Error& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return chj::exit_code(e.kind());
  }
  return chj::cli::run(sub, cfg).exit_code;
}
