// polysweep: batch runs of sweeping processes and crawler gaits.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "polysweep/cli.hpp"

namespace {

using namespace polysweep;

struct Flags {
  std::string config;
  std::string out;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<int> periods;
  std::optional<int> steps;
  std::optional<int> random_starts;
  bool compare = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config")->check(CLI::ExistingFile);
  cmd->add_option("--scenario", f.scenario, "catalog scenario name");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "seed for random initial states");
  cmd->add_option("--periods", f.periods, "number of periods Q");
  cmd->add_option("--steps", f.steps, "steps per period M");
  cmd->add_option("--random-starts", f.random_starts, "number of random admissible starts");
}

cli::RunConfig make_config(const Flags& f) {
  cli::RunConfig c = f.config.empty() ? cli::RunConfig{} : cli::load_config(f.config);
  if (!f.scenario.empty()) {
    c.scenario = f.scenario;
    c.problem.reset();
    c.gait.reset();
  }
  if (!f.out.empty()) c.out = f.out;
  if (f.seed) c.seed = *f.seed;
  if (f.periods) c.periods = *f.periods;
  if (f.steps) c.steps = *f.steps;
  if (f.random_starts) c.random_starts = *f.random_starts;
  if (f.compare) c.compare = true;
  return c;
}

int compare(const cli::RunConfig& c) {
  const auto s = cli::resolve_scenario(c);
  if (!s.is_gait()) throw cli::ConfigError("compare needs a gait or a gait scenario");
  const auto starts = cli::initial_states(c, s);
  nlohmann::json out = {{"scenario", s.name}, {"seed", c.seed}, {"periods", s.periods}, {"steps", s.steps_per_period}};
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& x0 : starts) {
    const double d = cli::solver_distance(s.gait(), x0, s.t0, s.periods, s.steps_per_period, c.tol);
    std::cout << "sup distance " << format_double(d) << "\n";
    runs.push_back({{"start", cli::detail::to_std(x0)}, {"sup_distance", d}});
  }
  out["runs"] = runs;
  std::filesystem::create_directories(c.out);
  cli::detail::write_file(c.out / "compare.json", cli::detail::dump(out));
  return cli::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sweeping processes in moving polyhedra and crawler locomotion"};
  app.require_subcommand(1);

  Flags f;
  auto* run = app.add_subcommand("run", "simulate a scenario, problem or gait and write reports");
  add_common(run, f);
  run->add_flag("--compare", f.compare, "also run the slip-pattern oracle on gaits");
  auto* check = app.add_subcommand("check-gait", "report the uniqueness margin of a gait");
  add_common(check, f);
  auto* list = app.add_subcommand("list-scenarios", "list the bundled scenarios");
  auto* cmp = app.add_subcommand("compare", "reduced pipeline vs slip-pattern oracle on a gait");
  add_common(cmp, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::bad_config;
  }

  return cli::guarded(
      [&]() -> int {
        if (list->parsed()) {
          cli::list_scenarios(std::cout);
          return cli::ok;
        }
        const auto c = make_config(f);
        if (run->parsed()) {
          const int status = cli::run(c, std::cerr);
          std::cout << "wrote reports to " << c.out.string() << "\n";
          return status;
        }
        if (check->parsed()) return cli::check_gait(c, std::cout);
        return compare(c);
      },
      std::cerr);
}
