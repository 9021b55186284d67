// bitrap: synthesize scenes, train, evaluate, predict and plot.
//
//   bitrap synth   --out DIR [--seed N] [--set key=value ...]
//   bitrap train   --data FILE --out DIR [--config FILE]
//   bitrap eval    --checkpoint FILE --data FILE --out DIR
//   bitrap predict --checkpoint FILE --data FILE --out DIR
//   bitrap plot    --dump FILE --out DIR
//   bitrap --print-defaults
//
// Exit codes: 0 ok, 2 configuration, 3 data, 4 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "bitrap/config.hpp"
#include "bitrap/errors.hpp"
#include "bitrap/plot.hpp"
#include "bitrap/report.hpp"

namespace fs = std::filesystem;
using namespace bitrap;

namespace {

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out, data, checkpoint, dump;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "key = value config file");
  cmd->add_option("--set", f.overrides, "override one key (key=value); repeatable");
  cmd->add_option("--seed", f.seed, "master seed (default 0)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--data", f.data, "scene file");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  cmd->add_option("--dump", f.dump, "prediction dump");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  if (!f.config_file.empty()) load_config_file(c, f.config_file);
  for (const auto& o : f.overrides) apply_override(c, o);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  if (!f.data.empty()) c.data = f.data;
  if (!f.checkpoint.empty()) c.checkpoint = f.checkpoint;
  if (!f.dump.empty()) c.dump = f.dump;
  c.sync();
  fs::create_directories(c.out);
  return c;
}

std::string out_path(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

Scene load_scene(const RunConfig& c, const std::string& path) {
  if (path.empty()) throw ConfigError("no data file given (--data or data = ...)");
  Scene s;
  if (c.format == "bev") {
    s = load_bev_scene(path, c.dt, c.frame_step);
  } else if (c.format == "fpv") {
    s = load_fpv_tracks(path, c.dt, c.frame_step);
  } else {
    throw ConfigError("format must be bev or fpv, got '" + c.format + "'");
  }
  if (fs::exists(path + ".meta.json")) load_scene_metadata(s, path + ".meta.json");
  return s;
}

Checkpoint require_checkpoint(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or checkpoint = ...)");
  return load_checkpoint(c.checkpoint);
}

int cmd_synth(const RunConfig& c) {
  const Scene scene = synth_multimodal_dataset(c.synth);
  const std::string path = out_path(c, "scene.txt");
  save_bev_scene(scene, path);
  save_scene_metadata(scene, path + ".meta.json");
  save_config_file(c, out_path(c, "synth.config"));
  const auto ex = make_windows(scene, c.train.tau, c.train.delta, c.train.stride);
  std::cout << "wrote " << path << ": " << scene.tracks.size() << " agents, " << ex.windows.size()
            << " windows (tau " << c.train.tau << ", delta " << c.train.delta << ")\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  const Scene scene = load_scene(c, c.data);
  const auto ex = make_windows(scene, c.train.tau, c.train.delta, c.train.stride);
  std::vector<TrajectoryWindow> val;
  if (!c.val_data.empty()) {
    val = make_windows(load_scene(c, c.val_data), c.train.tau, c.train.delta, c.train.stride).windows;
  }
  std::optional<Checkpoint> resume;
  if (!c.resume.empty()) resume = load_checkpoint(c.resume);
  const Checkpoint ck = train(c.train, ex.windows, scene.dt, val.empty() ? nullptr : &val,
                              resume ? &*resume : nullptr);
  save_checkpoint(ck, out_path(c, "model.ckpt"));
  std::ofstream log(out_path(c, "loss.ndjson"));
  for (const auto& r : ck.curve) {
    log << nlohmann::json{{"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"lr", r.lr}}.dump() << '\n';
  }
  save_config_file(c, out_path(c, "train.config"));
  std::cout << "trained " << to_string(ck.config.model.variant) << " on " << ex.windows.size() << " windows ("
            << ex.skipped_tracks << " tracks skipped) to epoch " << ck.epoch;
  if (!ck.curve.empty()) std::cout << ", final train loss " << ck.curve.back().loss;
  std::cout << "\n";
  return 0;
}

std::vector<TrajectoryWindow> checkpoint_windows(const RunConfig& c, const Checkpoint& ck) {
  const Scene scene = load_scene(c, c.data);
  auto windows = make_windows(scene, ck.config.tau, ck.config.delta, c.train.stride).windows;
  if (windows.empty()) throw DataError("no windows of length tau + delta in " + c.data);
  return windows;
}

int cmd_eval(const RunConfig& c) {
  const Checkpoint ck = require_checkpoint(c);
  const auto windows = checkpoint_windows(c, ck);
  std::vector<WindowPrediction> preds;
  const MetricReport rep = evaluate(ck, windows, c.eval, &preds);
  write_report({rep}, out_path(c, "report.txt"), out_path(c, "report.ndjson"));
  std::vector<DumpRecord> dump;
  for (const auto& p : preds) dump.push_back(make_dump_record(p, rep.variant, rep.dt));
  write_dump(dump, out_path(c, "predictions.ndjson"));
  save_config_file(c, out_path(c, "eval.config"));
  if (rep.floored_kde_bandwidths > 0) {
    std::cerr << "warning: " << rep.floored_kde_bandwidths << " KDE bandwidths were raised to the floor\n";
  }
  std::cout << format_report_table({rep});
  return 0;
}

int cmd_predict(const RunConfig& c) {
  const Checkpoint ck = require_checkpoint(c);
  const auto windows = checkpoint_windows(c, ck);
  if (c.predict_window >= static_cast<long>(windows.size())) throw ConfigError("predict_window out of range");
  std::vector<DumpRecord> dump;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (c.predict_window >= 0 && static_cast<long>(i) != c.predict_window) continue;
    WindowPrediction p{i, windows[i], predict(ck, windows[i], c.predict_samples, derive_seed(c.seed, i)), {}};
    dump.push_back(make_dump_record(p, to_string(ck.config.model.variant), ck.config.model.dt));
  }
  write_dump(dump, out_path(c, "predictions.ndjson"));
  save_config_file(c, out_path(c, "predict.config"));
  std::cout << "wrote " << dump.size() << " predictions to " << out_path(c, "predictions.ndjson") << "\n";
  return 0;
}

int cmd_plot(const RunConfig& c) {
  if (c.dump.empty()) throw ConfigError("no dump given (--dump or dump = ...)");
  const auto records = read_dump(c.dump);
  if (records.empty()) throw DataError("dump " + c.dump + " is empty");
  Vec nll_sum;
  int with_nll = 0;
  for (const auto& r : records) {
    const std::string id = std::to_string(r.index);
    plot_overlay(r, out_path(c, "overlay_" + id + ".svg"), c.eval.center_top_left);
    plot_kde_heatmap(r, out_path(c, "heatmap_" + id + ".svg"), 60, c.eval.center_top_left);
    if (r.nll_per_step.size() > 0) {
      nll_sum = with_nll == 0 ? r.nll_per_step : Vec(nll_sum + r.nll_per_step);
      ++with_nll;
    }
  }
  if (with_nll > 0) {
    plot_nll_curves({{records.front().variant, nll_sum / with_nll}}, records.front().dt,
                    out_path(c, "nll_per_step.svg"));
  }
  save_config_file(c, out_path(c, "plot.config"));
  std::cout << "plotted " << records.size() << " windows into " << c.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-conditioned bi-directional trajectory prediction"};
  app.require_subcommand(0, 1);
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "print every config key with its default and exit");

  CommonFlags flags;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"synth", "write a synthetic branching scene", cmd_synth},
      {"train", "train a model and write a checkpoint and loss log", cmd_train},
      {"eval", "evaluate a checkpoint and write reports and a prediction dump", cmd_eval},
      {"predict", "sample trajectories for windows of a scene", cmd_predict},
      {"plot", "draw SVG figures from a prediction dump", cmd_plot},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, flags);
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (print_defaults) {
      std::cout << format_config(RunConfig{}, true);
      return 0;
    }
    for (const auto& [sub, cmd] : subs) {
      if (sub->parsed()) return cmd->run(resolve(flags));
    }
    std::cout << app.help();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
}
