#include <CLI11.hpp>

#include <iostream>

#include "fairsample/experiments.hpp"

using namespace fairsample;

namespace {

int report_error(std::string_view kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ground-state sampling experiments for degenerate Ising problems"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
  };
  std::vector<std::pair<ExperimentKind, CLI::App*>> subs;
  std::map<ExperimentKind, Args> args;
  for (auto kind : {ExperimentKind::gen, ExperimentKind::mine, ExperimentKind::enumerate, ExperimentKind::trace,
                    ExperimentKind::sensitivity, ExperimentKind::driver_study, ExperimentKind::mc_sampling,
                    ExperimentKind::find_showcase}) {
    auto& a = args[kind];
    auto* sub = app.add_subcommand(std::string(to_string(kind)));
    sub->add_option("--config", a.config, "experiment config (JSON)")->required();
    sub->add_option("--out", a.out, "output directory; overrides the config");
    sub->add_option("--seed", a.seed, "master seed; overrides the config");
    subs.emplace_back(kind, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    for (const auto& [kind, sub] : subs) {
      if (!sub->parsed()) continue;
      const auto& a = args[kind];
      ConfigOverrides ov;
      if (sub->count("--out")) ov.out = fs::absolute(a.out);
      if (sub->count("--seed")) ov.seed = a.seed;
      const auto cfg = load_config(a.config, kind, ov);
      const auto record = run_experiment(cfg);
      std::cout << json{{"record", (cfg.out / "record.json").string()}, {"summary", record.summary}}.dump() << '\n';
    }
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
