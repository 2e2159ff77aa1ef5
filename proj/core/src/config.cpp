#include "capfuse/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace capfuse {

bool operator==(const StageSchedule& a, const StageSchedule& b) {
  return a.xe_epochs == b.xe_epochs && a.lr_xe == b.lr_xe && a.lr_oracle == b.lr_oracle &&
         a.lr_sc1 == b.lr_sc1 && a.lr_sc2 == b.lr_sc2 &&
         a.plateau_patience == b.plateau_patience &&
         a.plateau_min_delta == b.plateau_min_delta && a.max_epochs == b.max_epochs &&
         a.batch_size == b.batch_size && a.grad_clip == b.grad_clip &&
         a.oracle_mu == b.oracle_mu && a.decode_max_len == b.decode_max_len;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_modalities(const std::vector<std::pair<std::string, int>>& mods) {
  std::string s;
  for (std::size_t i = 0; i < mods.size(); ++i) {
    if (i > 0) s += ',';
    s += mods[i].first + ":" + std::to_string(mods[i].second);
  }
  return s;
}

std::vector<std::pair<std::string, int>> parse_modalities(const std::string& s) {
  std::vector<std::pair<std::string, int>> mods;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("config: modality entry '" + item + "' must be name:dim");
    }
    const std::string name = item.substr(0, colon);
    int dim = 0;
    try {
      dim = std::stoi(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("config: bad modality dim in '" + item + "'");
    }
    mods.emplace_back(name, dim);
  }
  if (mods.empty()) throw ConfigError("config: empty modality list");
  return mods;
}

// Key table: getter (serializes) and setter (parses) per key.
struct KeyHandler {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

void set_int(int& field, const std::string& key, const std::string& value) {
  try {
    field = std::stoi(value);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
  }
}

void set_double(double& field, const std::string& key, const std::string& value) {
  try {
    field = std::stod(value);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  }
}

void set_bool(bool& field, const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") {
    field = true;
  } else if (value == "false" || value == "0") {
    field = false;
  } else {
    throw ConfigError("config: '" + key + "' expects true/false, got '" + value + "'");
  }
}

const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
  static const std::vector<std::pair<std::string, KeyHandler>> table = [] {
    std::vector<std::pair<std::string, KeyHandler>> t;
    const auto add = [&t](const std::string& key, KeyHandler h) { t.emplace_back(key, std::move(h)); };

    add("seed", {[](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.seed = std::stoull(v);
                   } catch (const std::exception&) {
                     throw ConfigError("config: 'seed' expects an unsigned integer, got '" + v + "'");
                   }
                 }});

    const auto add_str = [&](const std::string& key, std::string RunConfig::Paths::* field) {
      add(key, {[field](const RunConfig& c) { return c.paths.*field; },
                [field](RunConfig& c, const std::string& v) { c.paths.*field = v; }});
    };
    add_str("paths.features", &RunConfig::Paths::features);
    add_str("paths.captions", &RunConfig::Paths::captions);
    add_str("paths.val_features", &RunConfig::Paths::val_features);
    add_str("paths.val_captions", &RunConfig::Paths::val_captions);
    add_str("paths.vocab", &RunConfig::Paths::vocab);
    add_str("paths.attrs", &RunConfig::Paths::attrs);
    add_str("paths.checkpoint_dir", &RunConfig::Paths::checkpoint_dir);
    add_str("paths.log", &RunConfig::Paths::log);

    add("model.decoder", {[](const RunConfig& c) { return c.model.decoder; },
                          [](RunConfig& c, const std::string& v) {
                            if (v != "topdown" && v != "xlan") {
                              throw ConfigError("config: model.decoder must be topdown or xlan");
                            }
                            c.model.decoder = v;
                          }});
    add("model.dim", {[](const RunConfig& c) { return std::to_string(c.model.dim); },
                      [](RunConfig& c, const std::string& v) { set_int(c.model.dim, "model.dim", v); }});
    add("model.attn_dim",
        {[](const RunConfig& c) { return std::to_string(c.model.attn_dim); },
         [](RunConfig& c, const std::string& v) { set_int(c.model.attn_dim, "model.attn_dim", v); }});
    add("model.embed_relu",
        {[](const RunConfig& c) { return c.model.embed_relu ? "true" : "false"; },
         [](RunConfig& c, const std::string& v) { set_bool(c.model.embed_relu, "model.embed_relu", v); }});

    const auto add_data_int = [&](const std::string& key, int RunConfig::Data::* field) {
      add(key, {[field](const RunConfig& c) { return std::to_string(c.data.*field); },
                [field, key](RunConfig& c, const std::string& v) { set_int(c.data.*field, key, v); }});
    };
    add_data_int("data.frames", &RunConfig::Data::frames);
    add_data_int("data.videos", &RunConfig::Data::videos);
    add_data_int("data.val_videos", &RunConfig::Data::val_videos);
    add_data_int("data.vocab_size", &RunConfig::Data::vocab_size);
    add_data_int("data.min_caption_len", &RunConfig::Data::min_caption_len);
    add_data_int("data.max_caption_len", &RunConfig::Data::max_caption_len);
    add_data_int("data.min_count", &RunConfig::Data::min_count);
    add_data_int("data.tokenizer_max_len", &RunConfig::Data::tokenizer_max_len);
    add("data.noise_sigma",
        {[](const RunConfig& c) { return format_double(c.data.noise_sigma); },
         [](RunConfig& c, const std::string& v) { set_double(c.data.noise_sigma, "data.noise_sigma", v); }});
    add("data.modalities",
        {[](const RunConfig& c) { return format_modalities(c.data.modalities); },
         [](RunConfig& c, const std::string& v) { c.data.modalities = parse_modalities(v); }});

    const auto add_train_int = [&](const std::string& key, int StageSchedule::* field) {
      add(key, {[field](const RunConfig& c) { return std::to_string(c.train.*field); },
                [field, key](RunConfig& c, const std::string& v) { set_int(c.train.*field, key, v); }});
    };
    const auto add_train_double = [&](const std::string& key, double StageSchedule::* field) {
      add(key, {[field](const RunConfig& c) { return format_double(c.train.*field); },
                [field, key](RunConfig& c, const std::string& v) { set_double(c.train.*field, key, v); }});
    };
    add_train_int("train.xe_epochs", &StageSchedule::xe_epochs);
    add_train_double("train.lr_xe", &StageSchedule::lr_xe);
    add_train_double("train.lr_oracle", &StageSchedule::lr_oracle);
    add_train_double("train.lr_sc1", &StageSchedule::lr_sc1);
    add_train_double("train.lr_sc2", &StageSchedule::lr_sc2);
    add_train_int("train.plateau_patience", &StageSchedule::plateau_patience);
    add_train_double("train.plateau_min_delta", &StageSchedule::plateau_min_delta);
    add_train_int("train.max_epochs", &StageSchedule::max_epochs);
    add_train_int("train.batch_size", &StageSchedule::batch_size);
    add_train_double("train.grad_clip", &StageSchedule::grad_clip);
    add_train_double("train.oracle_mu", &StageSchedule::oracle_mu);
    add_train_int("train.decode_max_len", &StageSchedule::decode_max_len);

    add("decode.beam", {[](const RunConfig& c) { return std::to_string(c.decode.beam); },
                        [](RunConfig& c, const std::string& v) { set_int(c.decode.beam, "decode.beam", v); }});
    add("decode.max_len",
        {[](const RunConfig& c) { return std::to_string(c.decode.max_len); },
         [](RunConfig& c, const std::string& v) { set_int(c.decode.max_len, "decode.max_len", v); }});
    add("decode.length_alpha",
        {[](const RunConfig& c) { return format_double(c.decode.length_alpha); },
         [](RunConfig& c, const std::string& v) {
           set_double(c.decode.length_alpha, "decode.length_alpha", v);
         }});
    add("eval.jobs", {[](const RunConfig& c) { return std::to_string(c.eval.jobs); },
                      [](RunConfig& c, const std::string& v) { set_int(c.eval.jobs, "eval.jobs", v); }});
    return t;
  }();
  return table;
}

}  // namespace

RunConfig profile_config(const std::string& profile) {
  RunConfig c;
  if (profile == "desk") {
    // Defaults above are the desk profile.
  } else if (profile == "paper") {
    c.model.dim = 512;
    c.data.frames = 32;
    c.data.videos = 0;  // real data expected; generator sizes unused
    c.data.max_caption_len = 30;
    c.train.batch_size = 16;
    c.decode.max_len = 30;
  } else {
    throw ConfigError("config: unknown profile '" + profile + "' (expected desk or paper)");
  }
  return c;
}

void apply_override(RunConfig& config, const std::string& key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("config: expected key=value, got '" + key_value + "'");
  }
  const std::string key = key_value.substr(0, eq);
  const std::string value = key_value.substr(eq + 1);
  for (const auto& [k, h] : key_table()) {
    if (k == key) {
      h.set(config, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // Trim.
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    if (line.empty()) continue;
    try {
      apply_override(base, line);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

void apply_env_seed(RunConfig& config) {
  const char* env = std::getenv("CAPFUSE_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    config.seed = std::stoull(env);
  } catch (const std::exception&) {
    throw ConfigError(std::string("CAPFUSE_SEED must be an unsigned integer, got '") + env + "'");
  }
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, h] : key_table()) {
    out += key;
    out += '=';
    out += h.get(config);
    out += '\n';
  }
  return out;
}

}  // namespace capfuse
