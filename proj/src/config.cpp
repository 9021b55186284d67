#include "bitrap/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "bitrap/errors.hpp"

namespace bitrap {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("bad value for " + key + ": '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_number<double>(key, item));
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

std::string fmt(bool b) { return b ? "true" : "false"; }

struct Entry {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

#define BITRAP_STRING(name, field, help)                                            \
  Entry {                                                                           \
    {name, help}, [](const RunConfig& c) { return c.field; },                       \
        [](RunConfig& c, const std::string&, const std::string& v) { c.field = v; } \
  }
#define BITRAP_NUMBER(name, type, field, help)                                                              \
  Entry {                                                                                                   \
    {name, help}, [](const RunConfig& c) { return fmt(static_cast<double>(c.field)); },                     \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_number<type>(k, v); } \
  }
#define BITRAP_INTEGER(name, type, field, help)                                                             \
  Entry {                                                                                                   \
    {name, help}, [](const RunConfig& c) { return std::to_string(c.field); },                               \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_number<type>(k, v); } \
  }
#define BITRAP_BOOL(name, field, help)                                                               \
  Entry {                                                                                            \
    {name, help}, [](const RunConfig& c) { return fmt(c.field); },                                   \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); } \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      BITRAP_STRING("data", data, "scene file to read"),
      BITRAP_STRING("format", format, "scene format: bev (frame id x y) or fpv (JSON lines with boxes)"),
      BITRAP_STRING("val_data", val_data, "optional validation scene for the loss log"),
      BITRAP_STRING("checkpoint", checkpoint, "checkpoint file to evaluate or predict with"),
      BITRAP_STRING("resume", resume, "checkpoint to continue training from"),
      BITRAP_STRING("dump", dump, "prediction dump to plot"),
      BITRAP_STRING("out", out, "output directory"),
      BITRAP_INTEGER("frame_step", long, frame_step, "frame index increment; 0 infers it from the data"),
      BITRAP_NUMBER("dt", double, dt, "seconds between consecutive samples"),
      BITRAP_INTEGER("seed", std::uint64_t, seed, "master random seed"),
      BITRAP_INTEGER("tau", int, train.tau, "observed steps"),
      BITRAP_INTEGER("delta", int, train.delta, "predicted steps"),
      BITRAP_INTEGER("stride", int, train.stride, "window start step"),
      BITRAP_INTEGER("n_agents", int, synth.n_agents, "synthetic agents"),
      Entry{{"branch_probs", "synthetic branch probabilities (comma separated)"},
            [](const RunConfig& c) { return fmt(c.synth.branch_probs); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.branch_probs = parse_list(k, v); }},
      BITRAP_NUMBER("noise_std", double, synth.noise_std, "synthetic position noise (m)"),
      BITRAP_NUMBER("speed", double, synth.speed, "synthetic walking speed (m/s)"),
      BITRAP_NUMBER("area", double, synth.area, "synthetic start area side (m)"),
      BITRAP_NUMBER("heading_spread", double, synth.heading_spread, "synthetic heading range +/- (rad)"),
      Entry{{"variant", "model variant: NP, GMM, D or NP-forward-only"},
            [](const RunConfig& c) { return to_string(c.train.model.variant); },
            [](RunConfig& c, const std::string&, const std::string& v) { c.train.model.variant = parse_variant(trim(v)); }},
      BITRAP_INTEGER("hidden", int, train.model.hidden, "hidden width of encoders and decoders"),
      BITRAP_INTEGER("latent", int, train.model.latent, "Gaussian latent dimension"),
      BITRAP_INTEGER("components", int, train.model.components, "mixture components (GMM)"),
      BITRAP_INTEGER("train_samples", int, train.model.train_samples, "best-of-many samples in training"),
      Entry{{"backward_feed", "backward decoder input after the goal: readout, output or goal"},
            [](const RunConfig& c) { return to_string(c.train.model.feed); },
            [](RunConfig& c, const std::string&, const std::string& v) { c.train.model.feed = parse_feed(trim(v)); }},
      BITRAP_BOOL("backward_latent", train.model.backward_latent, "feed z into the backward decoder start state too"),
      BITRAP_NUMBER("cov_floor", double, train.model.gmm.cov_floor, "covariance diagonal floor"),
      BITRAP_BOOL("anchor_predicted_goal", train.model.gmm.anchor_predicted_goal,
                  "anchor backward integration on the predicted goal mixture"),
      BITRAP_INTEGER("batch_size", int, train.batch_size, "windows per optimizer step"),
      BITRAP_NUMBER("lr", double, train.lr, "initial learning rate"),
      BITRAP_NUMBER("lr_decay", double, train.lr_decay, "learning rate factor per epoch"),
      BITRAP_INTEGER("epochs", int, train.epochs, "total training epochs"),
      BITRAP_NUMBER("clip_norm", double, train.clip_norm, "global gradient norm limit; 0 disables"),
      BITRAP_NUMBER("adam_beta1", double, train.adam_beta1, "first-moment decay"),
      BITRAP_NUMBER("adam_beta2", double, train.adam_beta2, "second-moment decay"),
      BITRAP_NUMBER("adam_eps", double, train.adam_eps, "optimizer denominator offset"),
      BITRAP_INTEGER("best_of", int, eval.best_of, "samples for best-of-N displacement"),
      BITRAP_INTEGER("kde_samples", int, eval.kde_samples, "samples for the KDE likelihood"),
      BITRAP_NUMBER("kde_floor", double, eval.kde_floor, "KDE bandwidth floor; 0 picks 0.01 m or 1 px"),
      BITRAP_NUMBER("log_density_floor", double, eval.log_density_floor, "per-step log-density floor (nats)"),
      Entry{{"center_anchor", "box anchor for centers: top_left or center"},
            [](const RunConfig& c) { return std::string(c.eval.center_top_left ? "top_left" : "center"); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const std::string t = trim(v);
              if (t != "top_left" && t != "center") throw ConfigError("bad value for " + k + ": '" + v + "'");
              c.eval.center_top_left = t == "top_left";
            }},
      Entry{{"horizons", "extra ADE horizons in seconds (comma separated)"},
            [](const RunConfig& c) { return fmt(c.eval.horizons_s); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.eval.horizons_s = parse_list(k, v); }},
      BITRAP_INTEGER("dump_samples", int, eval.dump_samples, "samples kept per window in dumps"),
      BITRAP_INTEGER("predict_samples", int, predict_samples, "samples drawn by predict"),
      BITRAP_INTEGER("predict_window", long, predict_window, "window index for predict; -1 for all"),
  };
  return table;
}

#undef BITRAP_STRING
#undef BITRAP_NUMBER
#undef BITRAP_INTEGER
#undef BITRAP_BOOL

const Entry& find_entry(const std::string& key) {
  for (const Entry& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::sync() {
  synth.seed = seed;
  synth.dt = dt;
  synth.tau = train.tau;
  synth.delta = train.delta;
  train.seed = seed;
  train.center_anchor_top_left = eval.center_top_left;
  eval.seed = seed;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const Entry& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_entry(key).set(config, key, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return find_entry(key).get(config); }

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: '" + assignment + "'");
  set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void parse_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    try {
      apply_override(config, body);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
}

void load_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config_text(config, ss.str());
}

std::string format_config(const RunConfig& config, bool with_help) {
  std::string out;
  for (const Entry& e : entries()) {
    if (with_help) out += "# " + e.key.help + "\n";
    out += e.key.name + " = " + e.get(config) + "\n";
  }
  return out;
}

void save_config_file(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << format_config(config);
}

}  // namespace bitrap
