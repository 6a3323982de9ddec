#include <livescaler/bench.hpp>
#include <livescaler/conductor_runtime.hpp>
#include <livescaler/render.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace livescaler;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kConfig = 3 };

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);
  std::signal(SIGPIPE, SIG_IGN);
}

void log_line(const std::string& line) { std::cerr << "livescaler: " << line << std::endl; }

ConductorConfig load_conductor_config(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return ConductorConfig::parse(read_text_file(path), [&](const std::string& map_path) {
    const auto p = std::filesystem::path(map_path);
    return parse_periodic_map(read_text_file((p.is_absolute() ? p : dir / p).string()));
  });
}

int cmd_instrument(const std::string& config_path) {
  const auto cfg = InstrumentConfig::parse(read_text_file(config_path));
  install_signal_handlers();
  run_instrument(cfg, g_stop, log_line);
  return kOk;
}

int cmd_conductor(const std::string& config_path, const std::string& ui_listen) {
  auto cfg = load_conductor_config(config_path);
  if (!ui_listen.empty()) cfg.ui_listen = ui_listen;
  install_signal_handlers();
  run_conductor(cfg, g_stop, log_line);
  return kOk;
}

int cmd_render(const std::string& in, const std::string& script_path, const std::string& config_path,
               const std::string& out) {
  const auto cfg = InstrumentConfig::parse(read_text_file(config_path));
  const auto script = parse_command_script(read_text_file(script_path));
  const auto file = smf::read(read_binary_file(in));
  const auto res = render_offline(file, script, cfg);
  write_binary_file(out, smf::write(res.file));
  log_line("rendered " + std::to_string(file.track_count()) + " tracks, dropped notes " +
           std::to_string(res.stats.dropped_notes) + ", stale records " + std::to_string(res.stats.stale_records) +
           ", rejected records " + std::to_string(res.stats.rejected_records));
  return kOk;
}

int cmd_bench(const LatencyBenchOptions& opt) {
  const auto report = run_latency_bench(opt);
  std::cout << report.summary() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Live scale transformation for MIDI instruments"};
  app.require_subcommand(1);

  std::string config, ui_listen, in, script, out;
  auto* instrument = app.add_subcommand("instrument", "Transform a live MIDI stream under conductor broadcasts");
  instrument->add_option("--config", config, "Instrument config file")->required();

  auto* conductor = app.add_subcommand("conductor", "Host the pad-grid UI and broadcast transforms");
  conductor->add_option("--config", config, "Conductor config file")->required();
  conductor->add_option("--ui-listen", ui_listen, "WebSocket listen address, host:port");

  auto* render = app.add_subcommand("render", "Apply a command script to a standard MIDI file");
  render->add_option("--in", in, "Input MIDI file")->required();
  render->add_option("--script", script, "Command script")->required();
  render->add_option("--config", config, "Instrument config file")->required();
  render->add_option("--out", out, "Output MIDI file")->required();

  LatencyBenchOptions bench_opt;
  std::int64_t spacing_us = bench_opt.spacing.count();
  std::string mode = "legato";
  auto* bench = app.add_subcommand("bench-latency", "Measure gesture to engine latency");
  bench->add_option("--gestures", bench_opt.gestures, "Number of pad presses")->check(CLI::PositiveNumber);
  bench->add_option("--spacing-us", spacing_us, "Time between presses")->check(CLI::NonNegativeNumber);
  bench->add_option("--udp", bench_opt.udp_address, "Loopback host:port to go through UDP instead of in-process");
  bench->add_option("--mode", mode, "stop, legato, retrigger or wait");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*instrument) return cmd_instrument(config);
    if (*conductor) return cmd_conductor(config, ui_listen);
    if (*render) return cmd_render(in, script, config, out);
    if (*bench) {
      bench_opt.spacing = std::chrono::microseconds(spacing_us);
      bench_opt.mode = parse_switch_mode(mode);
      return cmd_bench(bench_opt);
    }
  } catch (const ConfigError& e) {
    log_line("config: " + std::string(e.what()));
    return kConfig;
  } catch (const ParseError& e) {
    log_line("config: " + std::string(e.what()));
    return kConfig;
  } catch (const LookupError& e) {
    log_line("config: " + std::string(e.what()));
    return kConfig;
  } catch (const SmfError& e) {
    log_line("MIDI file: " + std::string(e.what()));
    return kIo;
  } catch (const std::system_error& e) {
    log_line(e.what());
    return kIo;
  } catch (const std::exception& e) {
    log_line(e.what());
    return kIo;
  }
  return kUsage;
}
