// robust-utility: run a scenario config through simulate / correct / hedge /
// verify and write report.json (plus optional CSVs) to the output directory.
//
// Exit status: 0 when every enabled check passes, 1 when a check fails,
// 2 on configuration or model errors.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ru/config.hpp"
#include "ru/errors.hpp"
#include "ru/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Robust utility maximization: correction, hedging and verification"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool quiet = false;

  for (const char* name : {"simulate", "correct", "hedge", "verify", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Worker threads (overrides RU_THREADS and the config)");
    sub->add_option("--out", out_dir, "Output directory (default: config output.dir)");
    sub->add_flag("--quiet", quiet, "Only print failures");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string stage_name = app.get_subcommands().front()->get_name();
  CLI::App* sub = app.get_subcommand(stage_name);

  try {
    ru::ScenarioConfig cfg = ru::load_config(config_path);
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--threads")) {
      cfg.threads = threads;
    } else if (const char* env = std::getenv("RU_THREADS"); env && *env) {
      cfg.threads = ru::resolve_threads(0);
    }
    if (out_dir.empty()) out_dir = cfg.output.dir;
    std::filesystem::create_directories(out_dir);

    const ru::PipelineResult res = ru::run_pipeline(cfg, *ru::parse_stage(stage_name), out_dir);
    {
      std::ofstream os(std::filesystem::path(out_dir) / "report.json", std::ios::binary);
      os << res.report.dump(2) << '\n';
      if (!os) throw std::runtime_error("cannot write report.json");
    }
    std::size_t failed = 0;
    for (const auto& c : res.checks) {
      if (!c.passed) ++failed;
      if (!c.passed || !quiet)
        std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << "  estimate=" << c.estimate
                  << " tol=" << c.tolerance << '\n';
    }
    std::cout << stage_name << ": " << res.checks.size() - failed << "/" << res.checks.size()
              << " checks passed; report written to " << (std::filesystem::path(out_dir) / "report.json").string()
              << '\n';
    return failed == 0 ? 0 : 1;
  } catch (const ru::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const ru::ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
  } catch (const ru::DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
  } catch (const ru::AdmissibilityError& e) {
    std::cerr << "admissibility error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 2;
}
