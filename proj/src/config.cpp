#include "edsep/config.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace edsep::config {

using nlohmann::json;

namespace {

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t pos) {
  pos = std::min(pos, text.size());
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < pos; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

// Input iterator that records how many characters the lexer has consumed.
class CountingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator(const char* p, std::size_t* consumed) : p_(p), consumed_(consumed) {}
  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    ++p_;
    ++*consumed_;
    return *this;
  }
  CountingIterator operator++(int) {
    CountingIterator old = *this;
    ++*this;
    return old;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }
  bool operator!=(const CountingIterator& o) const { return p_ != o.p_; }

 private:
  const char* p_;
  std::size_t* consumed_;
};

class StrictSax : public nlohmann::detail::json_sax_dom_parser<json> {
 public:
  StrictSax(json& result, const std::size_t* consumed)
      : json_sax_dom_parser(result, false), consumed_(consumed) {}

  bool start_object(std::size_t n) {
    keys_.emplace_back();
    return json_sax_dom_parser::start_object(n);
  }
  bool end_object() {
    keys_.pop_back();
    return json_sax_dom_parser::end_object();
  }
  bool key(string_t& k) {
    if (!keys_.back().insert(k).second) {
      duplicate_ = k;
      duplicate_pos_ = *consumed_;
      return false;
    }
    return json_sax_dom_parser::key(k);
  }
  bool parse_error(std::size_t position, const std::string& token,
                   const nlohmann::detail::exception& ex) {
    error_pos_ = position;
    error_ = ex.what();
    (void)token;
    return false;
  }

  std::optional<std::string> duplicate_;
  std::size_t duplicate_pos_ = 0;
  std::optional<std::string> error_;
  std::size_t error_pos_ = 0;

 private:
  const std::size_t* consumed_;
  std::vector<std::set<std::string>> keys_;
};

// Reads one section, rejecting keys outside `allowed`.
void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || k == a;
    if (!known) throw UnknownKeyError(section.empty() ? k : section + "." + k);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string name = section.empty() ? key : section + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError("'" + name + "' must be a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError("'" + name + "' must be a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("'" + name + "' must be a number");
    out = v.get<T>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) {
      throw ConfigError("'" + name + "' must be a non-negative integer");
    }
    out = v.get<T>();
  } else {
    if (!v.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
    out = v.get<T>();
  }
}

std::string to_string(NoiseConditioning c) {
  return c == NoiseConditioning::kLogHalfSigma ? "log_half_sigma" : "half_log_sigma";
}

NoiseConditioning conditioning_from_string(const std::string& s) {
  if (s == "log_half_sigma") return NoiseConditioning::kLogHalfSigma;
  if (s == "half_log_sigma") return NoiseConditioning::kHalfLogSigma;
  throw ConfigError("unknown conditioning '" + s + "'");
}

std::string to_string(Precision p) { return p == Precision::kF64 ? "f64" : "f32"; }

Precision precision_from_string(const std::string& s) {
  if (s == "f64") return Precision::kF64;
  if (s == "f32") return Precision::kF32;
  throw ConfigError("unknown precision '" + s + "'");
}

json train_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"total_steps", c.total_steps},
          {"p_T", c.p_boundary},
          {"checkpoint_interval", c.checkpoint_interval},
          {"log_interval", c.log_interval},
          {"segment_samples", c.segment_samples}};
}

TrainConfig train_from_json(const json& j) {
  check_keys(j, "train",
             {"batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
              "total_steps", "p_T", "checkpoint_interval", "log_interval", "segment_samples"});
  TrainConfig c;
  read(j, "batch_size", c.batch_size, "train");
  read(j, "learning_rate", c.learning_rate, "train");
  read(j, "adam_beta1", c.adam_beta1, "train");
  read(j, "adam_beta2", c.adam_beta2, "train");
  read(j, "adam_eps", c.adam_eps, "train");
  read(j, "total_steps", c.total_steps, "train");
  read(j, "p_T", c.p_boundary, "train");
  read(j, "checkpoint_interval", c.checkpoint_interval, "train");
  read(j, "log_interval", c.log_interval, "train");
  read(j, "segment_samples", c.segment_samples, "train");
  c.validate();
  return c;
}

json sample_to_json(const SamplerConfig& c) {
  return {{"n_steps", c.n_steps},
          {"grid", "linear"},
          {"sampler", edsep::to_string(c.kind)},
          {"mean_correct", c.mean_correct},
          {"reuse_denoise", c.reuse_denoise}};
}

SamplerConfig sample_from_json(const json& j) {
  check_keys(j, "sample", {"n_steps", "grid", "sampler", "mean_correct", "reuse_denoise"});
  SamplerConfig c;
  read(j, "n_steps", c.n_steps, "sample");
  std::string grid = "linear";
  read(j, "grid", grid, "sample");
  if (grid != "linear") throw ConfigError("unknown sample.grid '" + grid + "'");
  std::string kind = edsep::to_string(c.kind);
  read(j, "sampler", kind, "sample");
  c.kind = sampler_from_string(kind);
  read(j, "mean_correct", c.mean_correct, "sample");
  read(j, "reuse_denoise", c.reuse_denoise, "sample");
  c.validate();
  return c;
}

json paths_to_json(const Paths& p) {
  return {{"out_dir", p.out_dir}, {"checkpoint", p.checkpoint}, {"manifest", p.manifest}};
}

Paths paths_from_json(const json& j) {
  check_keys(j, "paths", {"out_dir", "checkpoint", "manifest"});
  Paths p;
  read(j, "out_dir", p.out_dir, "paths");
  read(j, "checkpoint", p.checkpoint, "paths");
  read(j, "manifest", p.manifest, "paths");
  return p;
}

}  // namespace

json parse_strict_json(const std::string& text) {
  std::size_t consumed = 0;
  json result;
  StrictSax sax(result, &consumed);
  CountingIterator first(text.data(), &consumed);
  CountingIterator last(text.data() + text.size(), &consumed);
  const bool ok = json::sax_parse(first, last, &sax);
  if (sax.duplicate_) {
    const auto [line, col] = line_column(text, sax.duplicate_pos_);
    throw ConfigParseError("duplicate key '" + *sax.duplicate_ + "' at line " +
                               std::to_string(line) + ", column " + std::to_string(col),
                           line, col);
  }
  if (!ok || sax.error_) {
    const std::size_t pos = sax.error_pos_ > 0 ? sax.error_pos_ - 1 : consumed;
    const auto [line, col] = line_column(text, pos);
    throw ConfigParseError("JSON parse error at line " + std::to_string(line) + ", column " +
                               std::to_string(col) + ": " + sax.error_.value_or("invalid input"),
                           line, col);
  }
  return result;
}

json to_json(const SdeParams& p) {
  return {{"gamma", p.gamma()},
          {"sigma_min", p.sigma_min()},
          {"sigma_max", p.sigma_max()},
          {"t_eps", p.t_eps()},
          {"t_max", p.t_max()}};
}

SdeParams sde_from_json(const json& j) {
  check_keys(j, "sde", {"gamma", "sigma_min", "sigma_max", "t_eps", "t_max"});
  const SdeParams d;
  double gamma = d.gamma(), smin = d.sigma_min(), smax = d.sigma_max(), teps = d.t_eps(),
         tmax = d.t_max();
  read(j, "gamma", gamma, "sde");
  read(j, "sigma_min", smin, "sde");
  read(j, "sigma_max", smax, "sde");
  read(j, "t_eps", teps, "sde");
  read(j, "t_max", tmax, "sde");
  try {
    return SdeParams(gamma, smin, smax, teps, tmax);
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
}

json to_json(const data::DatasetSpec& s) {
  return {{"kind", data::to_string(s.kind)},
          {"num_sources", s.num_sources},
          {"num_samples", s.num_samples},
          {"count", s.count},
          {"seed", s.seed},
          {"snr_lo_db", s.snr_lo_db},
          {"snr_hi_db", s.snr_hi_db},
          {"sigma_s", s.sigma_s},
          {"sample_rate", s.sample_rate}};
}

data::DatasetSpec dataset_from_json(const json& j) {
  check_keys(j, "data",
             {"kind", "num_sources", "num_samples", "count", "seed", "snr_lo_db", "snr_hi_db",
              "sigma_s", "sample_rate"});
  data::DatasetSpec s;
  std::string kind = data::to_string(s.kind);
  read(j, "kind", kind, "data");
  try {
    s.kind = data::kind_from_string(kind);
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
  read(j, "num_sources", s.num_sources, "data");
  read(j, "num_samples", s.num_samples, "data");
  read(j, "count", s.count, "data");
  read(j, "seed", s.seed, "data");
  read(j, "snr_lo_db", s.snr_lo_db, "data");
  read(j, "snr_hi_db", s.snr_hi_db, "data");
  read(j, "sigma_s", s.sigma_s, "data");
  read(j, "sample_rate", s.sample_rate, "data");
  s.validate();
  return s;
}

json network_to_json(const NetworkConfig& c) {
  json model = {{"num_sources", c.num_sources},
                {"hidden", c.hidden},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"conditioning", to_string(c.conditioning)},
                {"precision", to_string(c.precision)}};
  json stft = {{"n_fft", c.stft.n_fft}, {"hop", c.stft.hop}, {"sample_rate", c.stft.sample_rate}};
  return {{"model", model}, {"stft", stft}};
}

NetworkConfig network_from_json(const json& j) {
  NetworkConfig c;
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model",
               {"num_sources", "hidden", "alpha", "beta", "conditioning", "precision"});
    read(m, "num_sources", c.num_sources, "model");
    if (m.contains("hidden")) {
      const json& h = m.at("hidden");
      if (!h.is_array()) throw ConfigError("'model.hidden' must be an array");
      c.hidden.clear();
      for (const json& w : h) {
        if (!w.is_number_integer()) throw ConfigError("'model.hidden' must hold integers");
        c.hidden.push_back(w.get<int>());
      }
    }
    read(m, "alpha", c.alpha, "model");
    read(m, "beta", c.beta, "model");
    std::string cond = to_string(c.conditioning);
    read(m, "conditioning", cond, "model");
    c.conditioning = conditioning_from_string(cond);
    std::string prec = to_string(c.precision);
    read(m, "precision", prec, "model");
    c.precision = precision_from_string(prec);
  }
  if (j.contains("stft")) {
    const json& s = j.at("stft");
    check_keys(s, "stft", {"n_fft", "hop", "sample_rate"});
    read(s, "n_fft", c.stft.n_fft, "stft");
    read(s, "hop", c.stft.hop, "stft");
    read(s, "sample_rate", c.stft.sample_rate, "stft");
  }
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
  return c;
}

RunConfig config_from_json(const json& j) {
  check_keys(j, "",
             {"seed", "jobs", "sde", "stft", "model", "train", "sample", "data", "paths"});
  RunConfig c;
  try {
    read(j, "seed", c.seed, "");
    read(j, "jobs", c.jobs, "");
    if (c.jobs < 1) throw ConfigError("'jobs' must be >= 1");
    if (j.contains("sde")) c.sde = sde_from_json(j.at("sde"));
    json net = json::object();
    if (j.contains("model")) net["model"] = j.at("model");
    if (j.contains("stft")) net["stft"] = j.at("stft");
    c.model = network_from_json(net);
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    c.train.jobs = c.jobs;
    if (j.contains("sample")) c.sample = sample_from_json(j.at("sample"));
    if (j.contains("data")) c.data = dataset_from_json(j.at("data"));
    if (j.contains("paths")) c.paths = paths_from_json(j.at("paths"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
  if (c.model.num_sources != c.data.num_sources) {
    throw ConfigError("model.num_sources and data.num_sources differ");
  }
  return c;
}

json to_json(const RunConfig& c) {
  const json net = network_to_json(c.model);
  return {{"seed", c.seed},
          {"jobs", c.jobs},
          {"sde", to_json(c.sde)},
          {"stft", net.at("stft")},
          {"model", net.at("model")},
          {"train", train_to_json(c.train)},
          {"sample", sample_to_json(c.sample)},
          {"data", to_json(c.data)},
          {"paths", paths_to_json(c.paths)}};
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot open config " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    doc = parse_strict_json(ss.str());
    if (!doc.is_object()) throw ConfigError("config root must be an object");
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      doc[key] = value;
    } else {
      const std::string section = key.substr(0, dot);
      if (doc.contains(section) && !doc.at(section).is_object()) {
        throw ConfigError("section '" + section + "' must be an object");
      }
      doc[section][key.substr(dot + 1)] = value;
    }
  }
  return config_from_json(doc);
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace edsep::config
