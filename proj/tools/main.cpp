#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iqtcfm/config.hpp"
#include "iqtcfm/errors.hpp"
#include "iqtcfm/pipeline.hpp"

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw iqtcfm::ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw iqtcfm::ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

// dotted.key=value; the value is parsed as JSON when possible, else kept as
// a plain string (so --override sampler.method=midpoint works unquoted).
void apply_override(json& j, const std::string& kv) {
  size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw iqtcfm::ConfigError("override must be dotted.key=value, got: " + kv);
  std::string key = kv.substr(0, eq);
  std::string val = kv.substr(eq + 1);
  json* node = &j;
  size_t pos = 0;
  while (true) {
    size_t dot = key.find('.', pos);
    if (dot == std::string::npos) {
      std::string leaf = key.substr(pos);
      if (leaf.empty()) throw iqtcfm::ConfigError("override has an empty key segment: " + kv);
      json parsed;
      try {
        parsed = json::parse(val);
      } catch (const json::exception&) {
        parsed = val;
      }
      (*node)[leaf] = parsed;
      return;
    }
    std::string part = key.substr(pos, dot - pos);
    if (part.empty()) throw iqtcfm::ConfigError("override has an empty key segment: " + kv);
    node = &(*node)[part];
    if (!node->is_object() && !node->is_null())
      throw iqtcfm::ConfigError("override path crosses a non-object value: " + kv);
    pos = dot + 1;
  }
}

struct CommonOpts {
  std::string config;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
  sub->add_option("--config", opts.config, "path to the run-config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--override", opts.overrides,
                  "dotted.key=value config override (repeatable)");
  sub->add_option("--seed", opts.seed, "replace the config's RNG seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  sub->add_flag("--deterministic", opts.deterministic,
                "force deterministic execution (always on in this build)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iqtcfm: conditional flow matching for image quality transfer"};
  app.require_subcommand(1);
  CommonOpts opts;
  add_common(app.add_subcommand("simulate", "synthesize the degraded dataset and manifest"),
             opts);
  add_common(app.add_subcommand("train", "train the velocity field on the train split"), opts);
  add_common(app.add_subcommand("infer", "reconstruct the test splits from the best checkpoint"),
             opts);
  add_common(app.add_subcommand("evaluate", "score reconstructions and write reports"), opts);
  add_common(app.add_subcommand("report", "render side-by-side figure panels"), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    json j = load_json_file(opts.config);
    for (const std::string& kv : opts.overrides) apply_override(j, kv);
    if (opts.seed_set) j["seed"] = opts.seed;
    iqtcfm::RunConfig cfg = iqtcfm::run_config_from_json_text(j.dump());
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate")
      iqtcfm::cmd_simulate(cfg);
    else if (cmd == "train")
      iqtcfm::cmd_train(cfg);
    else if (cmd == "infer")
      iqtcfm::cmd_infer(cfg);
    else if (cmd == "evaluate")
      iqtcfm::cmd_evaluate(cfg);
    else
      iqtcfm::cmd_report(cfg);
    return 0;
  } catch (const iqtcfm::ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
