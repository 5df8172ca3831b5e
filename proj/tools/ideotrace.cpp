#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ideotrace/pipeline.hpp"

int main(int argc, char** argv) {
  namespace pl = ideotrace::pipeline;
  CLI::App app{"Topic linkage networks and trajectory models for forum archives"};
  std::string command;
  std::string config;
  std::vector<std::string> overrides;
  std::string commands;
  for (const auto& c : pl::commands()) commands += (commands.empty() ? "" : ", ") + c;
  app.add_option("command", command, "one of: " + commands)->required();
  app.add_option("-c,--config", config, "INI config file");
  app.add_option("--set", overrides, "override a config key, section.key=value")->take_all();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto cfg = config.empty() ? pl::Config{} : pl::Config::load(config);
    for (const auto& o : overrides) cfg.apply_override(o);
    pl::Runner runner(std::move(cfg));
    runner.execute(command);
  } catch (const ideotrace::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ideotrace::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
