#include "atrium/experiments/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/hashing.hpp"
#include "atrium/common/strings.hpp"

namespace atrium::experiments {

std::string to_string(SweepMode mode) {
  switch (mode) {
    case SweepMode::kFull: return "full";
    case SweepMode::kFractionSweep: return "fraction_sweep";
    case SweepMode::kPatientSweep: return "patient_sweep";
  }
  return "unknown";
}

SweepMode parse_sweep_mode(std::string_view text) {
  if (text == "full") return SweepMode::kFull;
  if (text == "fraction_sweep") return SweepMode::kFractionSweep;
  if (text == "patient_sweep") return SweepMode::kPatientSweep;
  throw ConfigError("unknown sweep mode '" + std::string(text) + "'");
}

namespace {

const std::set<std::string> kDataKeys{"root", "image_glob", "label_glob", "pad_target", "crop_oversize",
                                      "vit_normalization"};
const std::set<std::string> kSplitKeys{"seed", "counts", "manifest"};
const std::set<std::string> kMethodKeys{"name",          "architecture",       "variant",
                                        "input_size",    "base_channels",      "head_channels",
                                        "pretrained_encoder", "encoder_checkpoint", "backbone_checkpoint",
                                        "tiny",          "train"};
const std::set<std::string> kTrainKeys{"lr", "batch", "epochs", "patience", "early_stop_metric"};
const std::set<std::string> kExperimentKeys{"seeds", "fractions", "patients", "fewshot_max_epochs", "overlays"};
const std::set<std::string> kTopKeys{"data", "split", "methods", "experiment"};

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& where) {
  if (!node.IsMap()) throw ConfigError(where + " must be a mapping");
  for (const auto& item : node) {
    const auto key = item.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const YAML::Node& node, const std::string& key, T fallback, const std::string& where) {
  if (!node[key]) return fallback;
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  if (value.empty()) return {};
  std::filesystem::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

data::IntensityNormalization parse_normalization(const std::string& text) {
  if (text == "pretrain" || text == "imagenet") return data::IntensityNormalization::kPretrainStatistics;
  if (text == "zscore") return data::IntensityNormalization::kPerSliceZScore;
  throw ConfigError("vit_normalization must be 'pretrain' or 'zscore', got '" + text + "'");
}

std::string normalization_name(data::IntensityNormalization n) {
  return n == data::IntensityNormalization::kPerSliceZScore ? "zscore" : "pretrain";
}

MethodConfig parse_method(const YAML::Node& node, const std::filesystem::path& base, std::size_t index) {
  const auto where = "methods[" + std::to_string(index) + "]";
  check_keys(node, kMethodKeys, where);
  const auto arch_name = get<std::string>(node, "architecture", get<std::string>(node, "name", "", where), where);
  if (arch_name.empty()) throw ConfigError(where + " needs an architecture");
  MethodConfig method;
  method.model = models::ModelSpec::defaults(models::parse_architecture(arch_name));
  const auto arch = models::to_string(method.model.architecture);
  method.name = get<std::string>(node, "name", arch, where);
  auto& m = method.model;
  m.variant = get<std::string>(node, "variant", m.variant, where);
  m.input_size = get<std::int64_t>(node, "input_size", m.input_size, where);
  m.base_channels = get<std::int64_t>(node, "base_channels", m.base_channels, where);
  m.head_channels = get<std::int64_t>(node, "head_channels", m.head_channels, where);
  m.pretrained_encoder = get<bool>(node, "pretrained_encoder", m.pretrained_encoder, where);
  m.encoder_checkpoint = resolve(base, get<std::string>(node, "encoder_checkpoint", "", where));
  m.backbone_checkpoint = resolve(base, get<std::string>(node, "backbone_checkpoint", "", where));
  if (const auto tiny = node["tiny"]) {
    check_keys(tiny, {"embed_dim", "depth", "heads"}, where + ".tiny");
    m.tiny_embed_dim = get<std::int64_t>(tiny, "embed_dim", m.tiny_embed_dim, where + ".tiny");
    m.tiny_depth = get<std::int64_t>(tiny, "depth", m.tiny_depth, where + ".tiny");
    m.tiny_heads = get<std::int64_t>(tiny, "heads", m.tiny_heads, where + ".tiny");
  }
  method.train = train::TrainConfig::defaults_for(arch);
  method.train.method = method.name;
  if (const auto t = node["train"]) {
    check_keys(t, kTrainKeys, where + ".train");
    auto& c = method.train;
    c.learning_rate = get<double>(t, "lr", c.learning_rate, where + ".train");
    c.batch_size = get<std::int64_t>(t, "batch", c.batch_size, where + ".train");
    c.max_epochs = get<std::int64_t>(t, "epochs", c.max_epochs, where + ".train");
    c.patience = get<std::int64_t>(t, "patience", c.patience, where + ".train");
    if (t["early_stop_metric"]) c.early_stop_metric = train::parse_early_stop_metric(t["early_stop_metric"].as<std::string>());
  }
  return method;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_yaml(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
  ExperimentConfig config;
  if (!root || root.IsNull()) throw ConfigError("empty experiment configuration");
  check_keys(root, kTopKeys, "configuration");

  if (const auto d = root["data"]) {
    check_keys(d, kDataKeys, "data");
    config.data.root = resolve(base_dir, get<std::string>(d, "root", "", "data"));
    config.data.patterns.image_glob = get<std::string>(d, "image_glob", config.data.patterns.image_glob, "data");
    config.data.patterns.label_glob = get<std::string>(d, "label_glob", config.data.patterns.label_glob, "data");
    config.data.pad_target = get<std::int64_t>(d, "pad_target", 0, "data");
    config.data.crop_oversize = get<bool>(d, "crop_oversize", false, "data");
    if (d["vit_normalization"]) config.data.vit_normalization = parse_normalization(d["vit_normalization"].as<std::string>());
  }
  if (const auto s = root["split"]) {
    check_keys(s, kSplitKeys, "split");
    config.split.seed = get<std::uint64_t>(s, "seed", 0, "split");
    if (s["counts"]) {
      const auto c = get<std::vector<std::size_t>>(s, "counts", {}, "split");
      if (c.size() != 3) throw ConfigError("split.counts needs [train, val, test]");
      config.split.counts = data::SplitCounts{c[0], c[1], c[2]};
    }
    config.split.manifest = resolve(base_dir, get<std::string>(s, "manifest", "", "split"));
  }
  if (const auto m = root["methods"]) {
    if (!m.IsSequence()) throw ConfigError("methods must be a list");
    for (std::size_t i = 0; i < m.size(); ++i) config.methods.push_back(parse_method(m[i], base_dir, i));
  }
  if (const auto e = root["experiment"]) {
    check_keys(e, kExperimentKeys, "experiment");
    config.seeds = get<std::vector<std::uint64_t>>(e, "seeds", config.seeds, "experiment");
    config.fractions = get<std::vector<double>>(e, "fractions", config.fractions, "experiment");
    if (const auto p = e["patients"]) {
      if (!p.IsSequence()) throw ConfigError("experiment.patients must be a list");
      config.patients.clear();
      for (const auto& v : p) {
        const auto s = v.as<std::string>();
        config.patients.push_back(s == "all" ? 0 : static_cast<std::int64_t>(parse_double(s)));
        if (s != "all" && config.patients.back() < 1) throw ConfigError("patient counts must be >= 1 or 'all'");
      }
    }
    config.fewshot_max_epochs = get<std::int64_t>(e, "fewshot_max_epochs", config.fewshot_max_epochs, "experiment");
    config.overlays = get<bool>(e, "overlays", config.overlays, "experiment");
  }
  config.validate();
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read configuration " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_yaml(text.str(), path.parent_path());
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("no methods configured");
  std::set<std::string> names;
  for (const auto& m : methods) {
    if (!names.insert(m.name).second) throw ConfigError("duplicate method name '" + m.name + "'");
    m.model.validate();
    m.train.validate();
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1], got " + format_double(f));
  }
  for (auto p : patients) {
    if (p < 0) throw ConfigError("patient counts must be >= 1 or 'all'");
  }
  if (fewshot_max_epochs < 1) throw ConfigError("fewshot_max_epochs must be >= 1");
  if (data.pad_target < 0) throw ConfigError("pad_target must be >= 0");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "data.root=" << data.root.generic_string() << "\n"
      << "data.image_glob=" << data.patterns.image_glob << "\n"
      << "data.label_glob=" << data.patterns.label_glob << "\n"
      << "data.pad_target=" << data.pad_target << "\n"
      << "data.crop_oversize=" << data.crop_oversize << "\n"
      << "data.vit_normalization=" << normalization_name(data.vit_normalization) << "\n"
      << "split.seed=" << split.seed << "\n";
  if (split.counts) out << "split.counts=" << split.counts->train << "," << split.counts->val << "," << split.counts->test << "\n";
  out << "split.manifest=" << split.manifest.generic_string() << "\n";
  for (const auto& m : methods) {
    const auto& s = m.model;
    const auto& t = m.train;
    out << "method=" << m.name << "|" << models::to_string(s.architecture) << "|" << s.input_size << "|"
        << s.base_channels << "|" << s.pretrained_encoder << "|" << s.encoder_checkpoint.generic_string() << "|"
        << s.variant << "|" << s.backbone_checkpoint.generic_string() << "|" << s.head_channels << "|"
        << s.tiny_embed_dim << "|" << s.tiny_depth << "|" << s.tiny_heads << "|" << format_double(t.learning_rate)
        << "|" << t.batch_size << "|" << t.max_epochs << "|" << t.patience << "|" << train::to_string(t.early_stop_metric)
        << "\n";
  }
  out << "seeds=";
  for (auto s : seeds) out << s << ",";
  out << "\nfractions=";
  for (auto f : fractions) out << format_double(f) << ",";
  out << "\npatients=";
  for (auto p : patients) out << p << ",";
  out << "\nfewshot_max_epochs=" << fewshot_max_epochs << "\noverlays=" << overlays << "\n";
  return out.str();
}

std::string ExperimentConfig::hash() const { return Fnv1a().update(canonical()).hex(); }

std::vector<std::pair<std::string, std::string>> load_flat_section(const std::filesystem::path& path,
                                                                    const std::string& section) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read configuration " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::string>> out;
  const auto node = root[section];
  if (!node) return out;
  if (!node.IsMap()) throw ConfigError(section + " must be a mapping");
  for (const auto& item : node) {
    const auto key = item.first.as<std::string>();
    if (item.second.IsSequence()) {
      std::string joined;
      for (const auto& v : item.second) joined += (joined.empty() ? "" : ",") + v.as<std::string>();
      out.emplace_back(key, joined);
    } else if (item.second.IsScalar()) {
      out.emplace_back(key, item.second.as<std::string>());
    } else {
      throw ConfigError(section + "." + key + " must be a scalar or a list");
    }
  }
  return out;
}

}  // namespace atrium::experiments
