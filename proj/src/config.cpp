#include "protomp/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "protomp/rng.hpp"

namespace protomp {

const char* backbone_name(Backbone b) {
  return b == Backbone::gcn ? "gcn" : "sgc";
}

void SplitSpec::validate() const {
  if (mode == Mode::fixed_file) {
    if (file.empty()) throw ConfigError("split: fixed_file mode needs a file");
    return;
  }
  if (train_frac <= 0.0 || val_frac <= 0.0 || test_frac <= 0.0) {
    throw ConfigError("split: fractions must be positive");
  }
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
}

void ExperimentConfig::validate() const {
  if (num_layers < 1) throw ConfigError("config: layers must be >= 1");
  if (hidden < 1) throw ConfigError("config: hidden must be >= 1");
  if (k_n < 0 || k_a < 0) throw ConfigError("config: prototype counts must be >= 0");
  if (lambda_align < 0 || lambda_div < 0 || lambda_sparse < 0) {
    throw ConfigError("config: loss weights must be >= 0");
  }
  if (!(temperature > 0)) throw ConfigError("config: temperature must be > 0");
  if (!(lr > 0)) throw ConfigError("config: lr must be > 0");
  if (weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("config: patience must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("config: dropout must be in [0, 1)");
  }
  split.validate();
}

namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      if (section != "model" && section != "loss" && section != "train" &&
          section != "data") {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unknown section [" + section + "]");
      }
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    std::string key = trim(s.substr(0, eq));
    std::string v = trim(s.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;

    if (full == "model.backbone") {
      if (v == "gcn") c.backbone = Backbone::gcn;
      else if (v == "sgc") c.backbone = Backbone::sgc;
      else throw ConfigError("config: unknown backbone '" + v + "'");
    } else if (full == "model.layers") {
      c.num_layers = int(parse_int(full, v));
    } else if (full == "model.hidden") {
      c.hidden = int(parse_int(full, v));
    } else if (full == "model.k_n") {
      c.k_n = int(parse_int(full, v));
    } else if (full == "model.k_a") {
      c.k_a = int(parse_int(full, v));
    } else if (full == "model.temperature") {
      c.temperature = parse_double(full, v);
    } else if (full == "loss.lambda_align") {
      c.lambda_align = parse_double(full, v);
    } else if (full == "loss.lambda_div") {
      c.lambda_div = parse_double(full, v);
    } else if (full == "loss.lambda_sparse") {
      c.lambda_sparse = parse_double(full, v);
    } else if (full == "loss.div_axis") {
      if (v == "samples") c.div_axis = DiversityAxis::samples;
      else if (v == "prototypes") c.div_axis = DiversityAxis::prototypes;
      else throw ConfigError("config: unknown div_axis '" + v + "'");
    } else if (full == "train.lr") {
      c.lr = parse_double(full, v);
    } else if (full == "train.weight_decay") {
      c.weight_decay = parse_double(full, v);
    } else if (full == "train.max_epochs") {
      c.max_epochs = int(parse_int(full, v));
    } else if (full == "train.patience") {
      c.patience = int(parse_int(full, v));
    } else if (full == "train.dropout") {
      c.dropout = parse_double(full, v);
    } else if (full == "train.seed") {
      c.seed = uint64_t(parse_int(full, v));
    } else if (full == "data.dataset") {
      c.dataset = v;
    } else if (full == "data.split_mode") {
      if (v == "random_fraction") c.split.mode = SplitSpec::Mode::random_fraction;
      else if (v == "fixed_file") c.split.mode = SplitSpec::Mode::fixed_file;
      else throw ConfigError("config: unknown split_mode '" + v + "'");
    } else if (full == "data.train_frac") {
      c.split.train_frac = parse_double(full, v);
    } else if (full == "data.val_frac") {
      c.split.val_frac = parse_double(full, v);
    } else if (full == "data.test_frac") {
      c.split.test_frac = parse_double(full, v);
    } else if (full == "data.split_seed") {
      c.split.seed = uint64_t(parse_int(full, v));
    } else if (full == "data.split_file") {
      c.split.file = v;
    } else {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + full + "'");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[model]\n";
  o << "backbone = " << backbone_name(c.backbone) << "\n";
  o << "layers = " << c.num_layers << "\n";
  o << "hidden = " << c.hidden << "\n";
  o << "k_n = " << c.k_n << "\n";
  o << "k_a = " << c.k_a << "\n";
  o << "temperature = " << fmt_double(c.temperature) << "\n";
  o << "[loss]\n";
  o << "lambda_align = " << fmt_double(c.lambda_align) << "\n";
  o << "lambda_div = " << fmt_double(c.lambda_div) << "\n";
  o << "lambda_sparse = " << fmt_double(c.lambda_sparse) << "\n";
  o << "div_axis = "
    << (c.div_axis == DiversityAxis::samples ? "samples" : "prototypes")
    << "\n";
  o << "[train]\n";
  o << "lr = " << fmt_double(c.lr) << "\n";
  o << "weight_decay = " << fmt_double(c.weight_decay) << "\n";
  o << "max_epochs = " << c.max_epochs << "\n";
  o << "patience = " << c.patience << "\n";
  o << "dropout = " << fmt_double(c.dropout) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "[data]\n";
  o << "dataset = " << c.dataset << "\n";
  o << "split_mode = "
    << (c.split.mode == SplitSpec::Mode::random_fraction ? "random_fraction"
                                                         : "fixed_file")
    << "\n";
  o << "train_frac = " << fmt_double(c.split.train_frac) << "\n";
  o << "val_frac = " << fmt_double(c.split.val_frac) << "\n";
  o << "test_frac = " << fmt_double(c.split.test_frac) << "\n";
  o << "split_seed = " << c.split.seed << "\n";
  o << "split_file = " << c.split.file << "\n";
  return o.str();
}

std::vector<ExperimentConfig> random_search_configs(
    const ExperimentConfig& base, int count, uint64_t seed) {
  static const int kGrid[] = {2, 4, 8, 16, 32, 64};
  static const double lGrid[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  Rng rng(seed);
  std::vector<ExperimentConfig> out;
  out.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    ExperimentConfig c = base;
    c.k_n = kGrid[rng.below(6)];
    c.k_a = kGrid[rng.below(6)];
    c.lambda_align = lGrid[rng.below(5)];
    c.lambda_div = lGrid[rng.below(5)];
    c.lambda_sparse = lGrid[rng.below(5)];
    out.push_back(c);
  }
  return out;
}

}  // namespace protomp
