#include "vsm/config.hpp"

#include "vsm/arm_world.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vsm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& v, const std::string& what) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(what + ": bad number '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(what + ": bad number '" + v + "'");
  return d;
}

long long parse_int(const std::string& v, const std::string& what) {
  std::size_t pos = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(what + ": bad integer '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(what + ": bad integer '" + v + "'");
  return i;
}

bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(what + ": bad boolean '" + v + "'");
}

std::string format_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Published schema; unknown sections or keys are config errors.
const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"corpus", {"n", "train_fraction", "width", "height", "background"}},
      {"noise", {"specs"}},
      {"filters", {"blur", "sp", "gauss"}},
      {"segmenter",
       {"bands", "include_rgb", "hidden", "learning_rate", "epochs", "minibatch",
        "batches_per_epoch", "momentum", "train", "white_threshold"}},
      {"eval", {"baselines"}},
      {"run", {"out", "seed", "seeds", "jobs", "skip_denoise"}},
  };
  return s;
}

}  // namespace

const std::string* IniFile::find(const std::string& section, const std::string& key) const {
  for (const auto& [name, entries] : sections) {
    if (name != section) continue;
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
  }
  return nullptr;
}

void IniFile::set(const std::string& section, const std::string& key, const std::string& value) {
  for (auto& [name, entries] : sections) {
    if (name != section) continue;
    for (auto& [k, v] : entries)
      if (k == key) {
        v = value;
        return;
      }
    entries.emplace_back(key, value);
    return;
  }
  sections.push_back({section, {{key, value}}});
}

std::string IniFile::serialize() const {
  std::string out;
  for (const auto& [name, entries] : sections) {
    out += "[" + name + "]\n";
    for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
    out += "\n";
  }
  return out;
}

IniFile IniFile::parse_string(const std::string& text) {
  IniFile ini;
  std::stringstream ss(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      ini.sections.push_back({section, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside any section");
    ini.sections.back().second.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

FilterChoice FilterChoice::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  const std::string what = "filter '" + text + "'";

  std::map<std::string, std::string> kv;
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError(what + ": expected key=value");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto get_num = [&](const char* key, double fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : parse_double(it->second, what);
  };

  FilterChoice f;
  if (kind == "wiener") {
    f.kind = Kind::Wiener;
    f.nsr = get_num("nsr", 1e-3);
    if (f.nsr < 0) throw ConfigError(what + ": nsr must be >= 0");
  } else if (kind == "median") {
    f.kind = Kind::Median;
    f.median_halfwidth = static_cast<int>(get_num("k", 1));
    if (f.median_halfwidth < 1) throw ConfigError(what + ": k must be >= 1");
  } else if (kind == "nlm" || kind == "nlm+iftsvm") {
    f.kind = kind == "nlm" ? Kind::Nlm : Kind::NlmIftsvm;
    f.nlm.h = get_num("h", f.nlm.h);
    f.nlm.patch_halfwidth = static_cast<int>(get_num("patch", f.nlm.patch_halfwidth));
    f.nlm.window_halfwidth = static_cast<int>(get_num("window", f.nlm.window_halfwidth));
    try {
      f.nlm.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(what + ": " + e.what());
    }
    if (f.kind == Kind::NlmIftsvm) {
      f.adaptive.alpha_edge = get_num("ae", f.adaptive.alpha_edge);
      f.adaptive.alpha_smooth = get_num("as", f.adaptive.alpha_smooth);
      if (!(f.adaptive.alpha_edge > 0) || !(f.adaptive.alpha_smooth > 0))
        throw ConfigError(what + ": bandwidth factors must be > 0");
      if (kv.count("model")) f.model_path = kv["model"];
    }
  } else {
    throw ConfigError(what + ": unknown filter (wiener|median|nlm|nlm+iftsvm)");
  }
  return f;
}

std::string FilterChoice::to_string() const {
  switch (kind) {
    case Kind::Wiener: return "wiener:nsr=" + format_num(nsr);
    case Kind::Median: return "median:k=" + std::to_string(median_halfwidth);
    case Kind::Nlm:
      return "nlm:h=" + format_num(nlm.h) + ",patch=" + std::to_string(nlm.patch_halfwidth) +
             ",window=" + std::to_string(nlm.window_halfwidth);
    case Kind::NlmIftsvm:
      return "nlm+iftsvm:h=" + format_num(nlm.h) + ",patch=" + std::to_string(nlm.patch_halfwidth) +
             ",window=" + std::to_string(nlm.window_halfwidth) +
             ",ae=" + format_num(adaptive.alpha_edge) + ",as=" + format_num(adaptive.alpha_smooth) +
             (model_path.empty() ? "" : ",model=" + model_path);
  }
  return "?";
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig cfg;
  cfg.noise = {NoiseSpec::blur(2.0, 6), NoiseSpec::salt_pepper(0.1), NoiseSpec::gaussian(25.0)};
  cfg.filters = {{"blur", "wiener:nsr=1e-3"},
                 {"sp", "median:k=1"},
                 {"gauss", "nlm+iftsvm:h=0.1,patch=3,window=10,ae=0.6,as=1.4"}};
  return cfg;
}

PipelineConfig PipelineConfig::from_ini(const IniFile& ini) {
  for (const auto& [name, entries] : ini.sections) {
    const auto it = schema().find(name);
    if (it == schema().end()) throw ConfigError("config: unknown section [" + name + "]");
    for (const auto& [k, v] : entries)
      if (!it->second.count(k))
        throw ConfigError("config: unknown key '" + k + "' in section [" + name + "]");
  }

  PipelineConfig cfg = defaults();
  auto get = [&](const char* s, const char* k) { return ini.find(s, k); };

  if (auto* v = get("corpus", "n")) cfg.corpus_n = static_cast<int>(parse_int(*v, "corpus.n"));
  if (auto* v = get("corpus", "train_fraction"))
    cfg.train_fraction = parse_double(*v, "corpus.train_fraction");
  if (auto* v = get("corpus", "width")) cfg.width = static_cast<int>(parse_int(*v, "corpus.width"));
  if (auto* v = get("corpus", "height"))
    cfg.height = static_cast<int>(parse_int(*v, "corpus.height"));
  if (auto* v = get("corpus", "background")) cfg.background = *v;

  if (auto* v = get("noise", "specs")) {
    cfg.noise.clear();
    for (const auto& tok : split_ws(*v)) {
      try {
        cfg.noise.push_back(NoiseSpec::parse(tok));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
  }

  if (auto* v = get("filters", "blur")) cfg.filters["blur"] = *v;
  if (auto* v = get("filters", "sp")) cfg.filters["sp"] = *v;
  if (auto* v = get("filters", "gauss")) cfg.filters["gauss"] = *v;

  if (auto* v = get("segmenter", "bands"))
    cfg.encoding.bands = static_cast<int>(parse_int(*v, "segmenter.bands"));
  if (auto* v = get("segmenter", "include_rgb"))
    cfg.encoding.include_rgb = parse_bool(*v, "segmenter.include_rgb");
  if (auto* v = get("segmenter", "hidden"))
    cfg.train.hidden = static_cast<int>(parse_int(*v, "segmenter.hidden"));
  if (auto* v = get("segmenter", "learning_rate"))
    cfg.train.learning_rate = parse_double(*v, "segmenter.learning_rate");
  if (auto* v = get("segmenter", "epochs"))
    cfg.train.epochs = static_cast<int>(parse_int(*v, "segmenter.epochs"));
  if (auto* v = get("segmenter", "minibatch"))
    cfg.train.minibatch = static_cast<int>(parse_int(*v, "segmenter.minibatch"));
  if (auto* v = get("segmenter", "batches_per_epoch"))
    cfg.train.batches_per_epoch = static_cast<int>(parse_int(*v, "segmenter.batches_per_epoch"));
  if (auto* v = get("segmenter", "momentum"))
    cfg.train.momentum = parse_double(*v, "segmenter.momentum");
  if (auto* v = get("segmenter", "train")) cfg.allow_training = parse_bool(*v, "segmenter.train");
  if (auto* v = get("segmenter", "white_threshold"))
    cfg.white_threshold = parse_double(*v, "segmenter.white_threshold");

  if (auto* v = get("eval", "baselines")) cfg.eval_baselines = parse_bool(*v, "eval.baselines");

  if (auto* v = get("run", "out")) cfg.out_dir = *v;
  if (auto* v = get("run", "seed"))
    cfg.seed = static_cast<std::uint64_t>(parse_int(*v, "run.seed"));
  if (auto* v = get("run", "seeds")) {
    cfg.seeds.clear();
    for (const auto& tok : split_ws(*v))
      cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(tok, "run.seeds")));
  }
  if (auto* v = get("run", "jobs")) cfg.jobs = static_cast<int>(parse_int(*v, "run.jobs"));
  if (auto* v = get("run", "skip_denoise"))
    cfg.skip_denoise = parse_bool(*v, "run.skip_denoise");
  return cfg;
}

IniFile PipelineConfig::to_ini() const {
  IniFile ini;
  ini.set("corpus", "n", std::to_string(corpus_n));
  ini.set("corpus", "train_fraction", format_num(train_fraction));
  ini.set("corpus", "width", std::to_string(width));
  ini.set("corpus", "height", std::to_string(height));
  ini.set("corpus", "background", background);
  std::string specs;
  for (const auto& s : noise) specs += (specs.empty() ? "" : " ") + s.to_string();
  ini.set("noise", "specs", specs);
  for (const auto& [k, v] : filters) ini.set("filters", k, v);
  ini.set("segmenter", "bands", std::to_string(encoding.bands));
  ini.set("segmenter", "include_rgb", encoding.include_rgb ? "true" : "false");
  ini.set("segmenter", "hidden", std::to_string(train.hidden));
  ini.set("segmenter", "learning_rate", format_num(train.learning_rate));
  ini.set("segmenter", "epochs", std::to_string(train.epochs));
  ini.set("segmenter", "minibatch", std::to_string(train.minibatch));
  ini.set("segmenter", "batches_per_epoch", std::to_string(train.batches_per_epoch));
  ini.set("segmenter", "momentum", format_num(train.momentum));
  ini.set("segmenter", "train", allow_training ? "true" : "false");
  ini.set("segmenter", "white_threshold", format_num(white_threshold));
  ini.set("eval", "baselines", eval_baselines ? "true" : "false");
  ini.set("run", "out", out_dir);
  ini.set("run", "seed", std::to_string(seed));
  if (!seeds.empty()) {
    std::string s;
    for (auto v : seeds) s += (s.empty() ? "" : " ") + std::to_string(v);
    ini.set("run", "seeds", s);
  }
  ini.set("run", "jobs", std::to_string(jobs));
  ini.set("run", "skip_denoise", skip_denoise ? "true" : "false");
  return ini;
}

std::vector<std::uint64_t> PipelineConfig::effective_seeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

void PipelineConfig::validate() const {
  if (corpus_n < 2) throw ConfigError("config: corpus n must be >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("config: train_fraction must be in (0,1)");
  if (width < 16 || height < 16) throw ConfigError("config: corpus images must be >= 16x16");
  try {
    Background::parse(background, 0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::set<std::string> kinds;
  for (const auto& s : noise) {
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (!kinds.insert(to_string(s.kind)).second)
      throw ConfigError("config: duplicate noise kind '" + to_string(s.kind) + "'");
  }
  for (const auto& [kind, text] : filters) {
    if (kind != "blur" && kind != "sp" && kind != "gauss")
      throw ConfigError("config: filter bound to unknown noise kind '" + kind + "'");
    const FilterChoice f = FilterChoice::parse(text);
    if (f.kind == FilterChoice::Kind::Wiener && kind != "blur")
      throw ConfigError("config: wiener needs the known blur kernel; bind it to 'blur'");
    if (!f.model_path.empty() && !std::filesystem::exists(f.model_path))
      throw ConfigError("config: filter model path not found: " + f.model_path);
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (encoding.bands < 0) throw ConfigError("config: segmenter bands must be >= 0");
  if (!(white_threshold > 0.0 && white_threshold < 1.0))
    throw ConfigError("config: white_threshold must be in (0,1)");
  if (out_dir.empty()) throw ConfigError("config: output directory must be set");
  if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
}

}  // namespace vsm
