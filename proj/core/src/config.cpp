#include "av/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "av/common.hpp"

namespace av::cfg {

const std::vector<SchemaEntry>& schema() {
  static const std::vector<SchemaEntry> s = {
      {"run.preset", ValueType::text, "toy"},
      {"run.seed", ValueType::integer, "0"},
      {"run.deterministic", ValueType::boolean, "true"},
      {"run.threads", ValueType::integer, "1"},

      {"scene.window_frames", ValueType::integer, "8"},
      {"scene.source_frames", ValueType::integer, "30"},
      {"scene.fps", ValueType::real, "7.5"},
      {"scene.height", ValueType::integer, "32"},
      {"scene.width", ValueType::integer, "32"},
      {"scene.samples_per_frame", ValueType::integer, "256"},
      {"scene.audio_channels", ValueType::integer, "1"},
      {"scene.n_sounding", ValueType::integer, "1"},
      {"scene.n_distractors", ValueType::integer, "1"},
      {"scene.onset_gap_min_s", ValueType::real, "0.35"},
      {"scene.onset_gap_max_s", ValueType::real, "0.8"},
      {"scene.tone_min_hz", ValueType::real, "150"},
      {"scene.tone_max_hz", ValueType::real, "700"},
      {"scene.burst_s", ValueType::real, "0.25"},
      {"scene.noise_burst_prob", ValueType::real, "0.25"},
      {"scene.sprite_min_px", ValueType::integer, "8"},
      {"scene.sprite_max_px", ValueType::integer, "12"},

      {"stft.frame_ms", ValueType::real, "66.66666666666667"},
      {"stft.hop_ms", ValueType::real, "16.666666666666668"},
      {"stft.fft_size", ValueType::integer, "0"},
      {"stft.log_eps", ValueType::real, "1e-5"},
      {"stft.normalize_target", ValueType::real, "0.01"},

      {"fusenet.stem_channels", ValueType::integer, "12"},
      {"fusenet.stem_kernel", ValueType::int_list, "3,3,3"},
      {"fusenet.audio_channels", ValueType::int_list, "8,8,16,16,24"},
      {"fusenet.audio_kernels", ValueType::int_list, "8,8,8,8,8"},
      {"fusenet.audio_strides", ValueType::int_list, "4,4,4,4,4"},
      {"fusenet.fused_blocks", ValueType::int_list, "1,1,1"},
      {"fusenet.fused_channels", ValueType::int_list, "24,32,40"},
      {"fusenet.fused_tstrides", ValueType::int_list, "1,2,2"},
      {"fusenet.fused_sstrides", ValueType::int_list, "1,1,1"},
      {"fusenet.fused_taps", ValueType::int_list, "0,1,2"},
      {"fusenet.spectrogram_audio", ValueType::boolean, "false"},
      {"fusenet.spec_win_ms", ValueType::real, "66.66666666666667"},
      {"fusenet.spec_hop_ms", ValueType::real, "16.666666666666668"},
      {"fusenet.spec_fft", ValueType::integer, "128"},
      {"fusenet.spec_channels", ValueType::int_list, "8,12,16,20,24"},
      {"fusenet.spec_tstrides", ValueType::int_list, "2,2,2,2,2"},
      {"fusenet.spec_fstrides", ValueType::int_list, "2,2,2,1,1"},
      {"fusenet.spec_out_channels", ValueType::integer, "24"},

      {"pretext.steps", ValueType::integer, "500"},
      {"pretext.batch", ValueType::integer, "8"},
      {"pretext.lr", ValueType::real, "0.01"},
      {"pretext.momentum", ValueType::real, "0.9"},
      {"pretext.lr_decay", ValueType::real, "0.5"},
      {"pretext.lr_decay_interval", ValueType::integer, "0"},
      {"pretext.shift_min_s", ValueType::real, "0.4"},
      {"pretext.shift_max_s", ValueType::real, "1.4"},
      {"pretext.augment_flip", ValueType::boolean, "true"},
      {"pretext.augment_jitter", ValueType::boolean, "true"},
      {"pretext.warmup_low_fps", ValueType::boolean, "false"},
      {"pretext.warmup_steps", ValueType::integer, "0"},

      {"separate.steps", ValueType::integer, "700"},
      {"separate.batch", ValueType::integer, "4"},
      {"separate.lr", ValueType::real, "0.001"},
      {"separate.lr_decay", ValueType::real, "0.1"},
      {"separate.lr_decay_interval", ValueType::integer, "0"},
      {"separate.phase_weight", ValueType::real, "0.01"},
      {"separate.use_pit", ValueType::boolean, "false"},
      {"separate.pit_weight", ValueType::real, "1.0"},
      {"separate.enc_channels", ValueType::int_list, "8,16,24,32,40,48,56"},
      {"separate.head_hidden", ValueType::integer, "16"},
      {"separate.predict_phase", ValueType::boolean, "true"},
      {"separate.condition", ValueType::boolean, "true"},
      {"separate.mono", ValueType::boolean, "true"},
      {"separate.single_frame", ValueType::boolean, "false"},
      {"separate.ablate_audio", ValueType::boolean, "false"},
      {"separate.scratch", ValueType::boolean, "false"},
      {"separate.ambient_prob", ValueType::real, "0.0"},
      {"separate.mix_frames", ValueType::integer, "8"},

      {"transfer.n_classes", ValueType::integer, "4"},
      {"transfer.steps", ValueType::integer, "80"},
      {"transfer.batch", ValueType::integer, "6"},
      {"transfer.lr", ValueType::real, "0.0003"},
      {"transfer.lr_decay", ValueType::real, "0.1"},
      {"transfer.lr_decay_interval", ValueType::integer, "0"},
      {"transfer.clip_window_frames", ValueType::integer, "8"},
      {"transfer.eval_clips_k", ValueType::integer, "3"},
      {"transfer.ablate_audio", ValueType::boolean, "false"},

      {"metrics.resample_hz", ValueType::integer, "0"},
      {"metrics.db_cap", ValueType::real, "100"},

      {"localize.alpha", ValueType::real, "0.45"},
      {"localize.fixed_max", ValueType::real, "0"},
  };
  return s;
}

namespace {

const SchemaEntry* find_entry(const std::string& key) {
  for (const auto& e : schema())
    if (key == e.key) return &e;
  return nullptr;
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

void validate_value(const SchemaEntry& e, const std::string& value) {
  switch (e.type) {
    case ValueType::integer: {
      try {
        size_t pos = 0;
        (void)std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(std::string("config key ") + e.key + " expects an integer, got '" +
                          value + "'");
      }
      break;
    }
    case ValueType::real: {
      try {
        size_t pos = 0;
        (void)std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(std::string("config key ") + e.key + " expects a real, got '" + value +
                          "'");
      }
      break;
    }
    case ValueType::boolean: {
      bool b;
      if (!parse_bool(value, b))
        throw ConfigError(std::string("config key ") + e.key + " expects a boolean, got '" +
                          value + "'");
      break;
    }
    case ValueType::text:
      break;
    case ValueType::int_list: {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          size_t pos = 0;
          (void)std::stoll(item, &pos);
          if (pos != item.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw ConfigError(std::string("config key ") + e.key +
                            " expects a comma-separated integer list, got '" + value + "'");
        }
      }
      break;
    }
  }
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Preset overrides on top of the toy defaults.
const std::vector<std::pair<const char*, const char*>>& paper_geometry_overrides() {
  static const std::vector<std::pair<const char*, const char*>> o = {
      {"run.preset", "paper-geometry"},
      {"scene.window_frames", "125"},
      {"scene.source_frames", "300"},
      {"scene.fps", "29.97"},
      {"scene.height", "256"},
      {"scene.width", "256"},
      {"scene.samples_per_frame", "700"},
      {"scene.audio_channels", "2"},
      {"scene.onset_gap_min_s", "0.8"},
      {"scene.onset_gap_max_s", "2.0"},
      {"scene.tone_max_hz", "2000"},
      {"scene.sprite_min_px", "40"},
      {"scene.sprite_max_px", "70"},
      {"stft.frame_ms", "64.0"},
      {"stft.hop_ms", "16.0"},
      {"stft.fft_size", "0"},
      {"fusenet.stem_channels", "64"},
      {"fusenet.stem_kernel", "3,5,5"},
      {"fusenet.audio_channels", "64,64,128,128,256"},
      {"fusenet.audio_kernels", "8,8,10,10,14"},
      {"fusenet.audio_strides", "4,4,5,5,7"},
      {"fusenet.fused_blocks", "2,2,2,2"},
      {"fusenet.fused_channels", "64,128,256,512"},
      {"fusenet.fused_tstrides", "1,2,2,1"},
      {"fusenet.fused_sstrides", "1,2,2,1"},
      {"fusenet.fused_taps", "0,1,3"},
      {"fusenet.spec_win_ms", "24.0"},
      {"fusenet.spec_hop_ms", "8.342"},
      {"fusenet.spec_fft", "512"},
      {"fusenet.spec_channels", "64,64,128,128"},
      {"fusenet.spec_tstrides", "2,2,2,2"},
      {"fusenet.spec_fstrides", "2,1,2,2"},
      {"fusenet.spec_out_channels", "512"},
      {"pretext.steps", "650000"},
      {"pretext.batch", "15"},
      {"pretext.lr_decay_interval", "200000"},
      {"pretext.shift_min_s", "2.0"},
      {"pretext.shift_max_s", "5.8"},
      {"pretext.warmup_low_fps", "true"},
      {"pretext.warmup_steps", "30000"},
      {"separate.steps", "160000"},
      {"separate.batch", "18"},
      {"separate.lr", "0.0001"},
      {"separate.mix_frames", "63"},
      {"separate.enc_channels", "64,128,256,512,512,512,512"},
      {"separate.head_hidden", "64"},
      {"transfer.steps", "30000"},
      {"transfer.batch", "24"},
      {"transfer.lr", "0.0001"},
      {"transfer.clip_window_frames", "76"},
      {"transfer.eval_clips_k", "25"},
      {"metrics.resample_hz", "16000"},
  };
  return o;
}

// Large-scale variant: shorter analysis frames, heavier phase term, ambient
// background mixing, longer mixture windows.
const std::vector<std::pair<const char*, const char*>>& large_scale_overrides() {
  static const std::vector<std::pair<const char*, const char*>> o = {
      {"run.preset", "large-scale"},
      {"stft.frame_ms", "40.0"},
      {"stft.hop_ms", "16.0"},
      {"stft.fft_size", "1024"},
      {"separate.phase_weight", "0.2"},
      {"separate.ambient_prob", "0.08"},
      {"separate.mix_frames", "124"},
  };
  return o;
}

}  // namespace

RunConfig RunConfig::defaults(const std::string& preset) {
  RunConfig c;
  for (const auto& e : schema()) c.values_[e.key] = e.default_value;
  if (preset == "toy") return c;
  if (preset == "paper-geometry") {
    for (const auto& [k, v] : paper_geometry_overrides()) c.values_[k] = v;
    return c;
  }
  if (preset == "large-scale") {
    for (const auto& [k, v] : paper_geometry_overrides()) c.values_[k] = v;
    for (const auto& [k, v] : large_scale_overrides()) c.values_[k] = v;
    return c;
  }
  throw ConfigError("unknown preset: " + preset +
                    " (expected toy, paper-geometry or large-scale)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const SchemaEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key: " + key);
  validate_value(*e, value);
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

int64_t RunConfig::get_int(const std::string& key) const {
  const SchemaEntry* e = find_entry(key);
  if (!e || e->type != ValueType::integer) throw ConfigError("not an integer key: " + key);
  return std::stoll(values_.at(key));
}

double RunConfig::get_real(const std::string& key) const {
  const SchemaEntry* e = find_entry(key);
  if (!e || e->type != ValueType::real) throw ConfigError("not a real key: " + key);
  return std::stod(values_.at(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const SchemaEntry* e = find_entry(key);
  if (!e || e->type != ValueType::boolean) throw ConfigError("not a boolean key: " + key);
  bool b = false;
  parse_bool(values_.at(key), b);
  return b;
}

std::string RunConfig::get_text(const std::string& key) const {
  const SchemaEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key: " + key);
  return values_.at(key);
}

std::vector<int64_t> RunConfig::get_int_list(const std::string& key) const {
  const SchemaEntry* e = find_entry(key);
  if (!e || e->type != ValueType::int_list) throw ConfigError("not an int-list key: " + key);
  std::vector<int64_t> out;
  std::stringstream ss(values_.at(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  return out;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  std::string section;
  for (const auto& e : schema()) {
    const std::string key = e.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << values_.at(key) << "\n";
  }
  return os.str();
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write resolved config: " + path.string());
  f << "# resolved configuration (" << av::kVersion << ")\n" << serialize();
}

std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line, section;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed line (expected key = value): " + t);
    std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(key, value);
  }
  return out;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  // Preset selection may appear in the file itself; read it first so explicit
  // keys override the preset they sit on.
  std::vector<std::pair<std::string, std::string>> kvs;
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
      throw ConfigError("invalid JSON config: " + std::string(err.what()));
    }
    if (!j.is_object()) throw ConfigError("JSON config must be an object of sections");
    for (const auto& [sec, body] : j.items()) {
      if (!body.is_object()) throw ConfigError("JSON config section must be an object: " + sec);
      for (const auto& [k, v] : body.items()) {
        std::string value;
        if (v.is_string()) {
          value = v.get<std::string>();
        } else if (v.is_boolean()) {
          value = v.get<bool>() ? "true" : "false";
        } else if (v.is_number_integer()) {
          value = std::to_string(v.get<int64_t>());
        } else if (v.is_number_float()) {
          std::ostringstream os;
          os.precision(17);
          os << v.get<double>();
          value = os.str();
        } else if (v.is_array()) {
          std::ostringstream os;
          bool first = true;
          for (const auto& item : v) {
            if (!first) os << ",";
            first = false;
            os << item.get<int64_t>();
          }
          value = os.str();
        } else {
          throw ConfigError("unsupported JSON value for key " + sec + "." + k);
        }
        kvs.emplace_back(sec + "." + k, value);
      }
    }
  } else {
    kvs = parse_kv_text(text);
  }

  std::string preset = "toy";
  for (const auto& [k, v] : kvs)
    if (k == "run.preset") preset = v;
  RunConfig c = defaults(preset);
  for (const auto& [k, v] : kvs) c.set(k, v);
  return c;
}

}  // namespace av::cfg
