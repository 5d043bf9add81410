#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "koopman/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace koopman::cli;

  CLI::App app{"Koopman resolvent lab: simulation, Floquet analysis, decompositions, and Laplace-domain spectra"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("koopman-lab ") + KOOPMAN_VERSION);

  std::string config_path;
  std::string out_dir = ".";
  std::string format = "csv";
  std::string input;

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "integrate the system and write the sampled trajectory"},
      {"floquet", "locate the limit cycle and report period, multipliers, and exponents"},
      {"repro-fig1", "decompose a van der Pol trajectory and fit the residual decay rate"},
      {"repro-fig2", "decompose a coupled van der Pol trajectory about its invariant torus"},
      {"resolvent", "Laplace transform on an s-grid and the truncated pole/residue expansion"},
      {"dmd", "exact DMD with delay embedding of a sampled signal"},
      {"prony", "Prony pole/residue fit of one sampled signal column"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--format", format, "tabular output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    if (std::string(name) == "dmd" || std::string(name) == "prony") {
      sub->add_option("input", input, "CSV with columns t, y_1..y_m");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunContext ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.out_dir = out_dir;
  ctx.format = format == "json" ? Format::json : Format::csv;
  if (!input.empty()) ctx.input = input;
  try {
    if (!config_path.empty()) ctx.config = load_config(config_path);
  } catch (const koopman::Error& e) {
    std::cerr << "error [" << koopman::to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return run_command(ctx, std::cerr);
}
