// Command-line front end: run, validate, and sweep scenario files.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "platoon/platoon.hpp"

namespace fs = std::filesystem;
using namespace platoon;

namespace {

struct RunOptions {
  std::string scenario;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

KeyValues load_with_overrides(const RunOptions& opt) {
  KeyValues kv = load_key_values(opt.scenario);
  if (opt.seed) kv.set("simulation.seed", std::to_string(*opt.seed));
  return kv;
}

void write_outputs(const RunResult& result, std::size_t n_vehicles,
                   const fs::path& dir) {
  fs::create_directories(dir);
  emit_csv(result.trace, n_vehicles, dir / "trace.csv");
  write_text_file(dir / "summary.json",
                  summary_to_json(result.summary).dump(2) + "\n");
  std::string lines;
  for (const V2VMessage& m : result.delivered) lines += to_json_line(m);
  write_text_file(dir / "messages.jsonl", lines);
}

int cmd_run(const RunOptions& opt) {
  const Scenario sc =
      build_scenario(load_with_overrides(opt), fs::path(opt.scenario).parent_path());
  const RunResult result = run_scenario(sc);
  if (!opt.out_dir.empty()) {
    write_outputs(result, sc.vehicles.size(), opt.out_dir);
  }
  if (!opt.quiet) std::cout << summary_to_text(result.summary);
  return 0;
}

int cmd_validate(const RunOptions& opt) {
  const Scenario sc =
      build_scenario(load_with_overrides(opt), fs::path(opt.scenario).parent_path());
  if (!opt.quiet) {
    std::cout << opt.scenario << ": ok (" << sc.name << ", "
              << sc.vehicles.size() << " vehicles, " << sc.duration
              << " s, map " << sc.map_source << " with " << sc.map.size()
              << " points)\n";
  }
  return 0;
}

int cmd_sweep(const RunOptions& opt, const std::string& param) {
  const auto eq = param.find('=');
  if (eq == std::string::npos) {
    throw ScenarioError("--param expects <section.key>=<v1>,<v2>,...");
  }
  const std::string key = param.substr(0, eq);
  std::vector<std::string> values;
  std::string cur;
  for (char c : param.substr(eq + 1) + ",") {
    if (c == ',') {
      if (!cur.empty()) values.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (values.empty()) throw ScenarioError("--param has no values");

  nlohmann::json table = nlohmann::json::array();
  for (const std::string& value : values) {
    KeyValues kv = load_with_overrides(opt);
    kv.set(key, value);
    const Scenario sc = build_scenario(kv, fs::path(opt.scenario).parent_path());
    const RunResult result = run_scenario(sc);
    if (!opt.out_dir.empty()) {
      write_outputs(result, sc.vehicles.size(),
                    fs::path(opt.out_dir) / (key + "=" + value));
    }
    nlohmann::json row = summary_to_json(result.summary);
    row["param"] = key;
    row["value"] = value;
    table.push_back(row);
    if (!opt.quiet) {
      std::cout << key << " = " << value;
      for (std::size_t i = 0; i < result.summary.followers.size(); ++i) {
        const FollowerSummary& f = result.summary.followers[i];
        std::cout << "  [vehicle " << i + 1 << "] time_gap "
                  << f.time_gap_mean << " +/- " << f.time_gap_std
                  << ", max|e| " << f.max_abs_e;
      }
      std::cout << '\n';
    }
  }
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    write_text_file(fs::path(opt.out_dir) / "sweep.json", table.dump(2) + "\n");
  }
  return 0;
}

int cmd_oval(double straight, double radius, double spacing,
             const std::string& out) {
  const std::string text = save_map(make_oval(straight, radius, spacing));
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic CACC platoon simulator"};
  app.require_subcommand(1);

  RunOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("scenario", opt.scenario, "scenario v1 file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", opt.seed, "override simulation.seed");
    sub->add_flag("--quiet", opt.quiet, "suppress the summary");
  };

  CLI::App* run = app.add_subcommand("run", "run a scenario");
  add_common(run);
  CLI::App* validate = app.add_subcommand("validate", "check a scenario");
  add_common(validate);
  CLI::App* sweep =
      app.add_subcommand("sweep", "run a scenario over parameter values");
  add_common(sweep);
  std::string param;
  sweep->add_option("--param", param, "<section.key>=<v1>,<v2>,...")
      ->required();

  CLI::App* oval = app.add_subcommand("oval", "print an oval lanemap v1 track");
  double straight = 4.0, radius = 2.0, spacing = 0.15;
  std::string oval_out;
  oval->add_option("--straight", straight, "straight length [m]");
  oval->add_option("--radius", radius, "curve radius [m]");
  oval->add_option("--spacing", spacing, "point spacing [m]");
  oval->add_option("--out", oval_out, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(opt);
    if (*validate) return cmd_validate(opt);
    if (*sweep) return cmd_sweep(opt, param);
    if (*oval) return cmd_oval(straight, radius, spacing, oval_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
