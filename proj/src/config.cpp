#include "fedsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedsim {

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message
                                  : source + ": " + message),
      line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

ConfigDoc parse_config_text(const std::string& text, const std::string& source) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!section.empty() && !valid_key(section)) {
        throw ConfigError(source, line_no, "invalid section name '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    if (!valid_key(key)) throw ConfigError(source, line_no, "invalid key '" + key + "'");
    // csv paths may be blank so canonical renderings parse back
    if (value.empty() && key != "data.csv_train" && key != "data.csv_test") {
      throw ConfigError(source, line_no, "missing value for '" + key + "'");
    }
    if (doc.count(key)) {
      throw ConfigError(source, line_no,
                        "duplicate key '" + key + "' (first set on line " +
                            std::to_string(doc[key].line) + ")");
    }
    doc[key] = ConfigEntry{value, source, line_no};
  }
  return doc;
}

ConfigDoc parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_override(ConfigDoc& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set", 0, "override '" + assignment + "' must look like key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (!valid_key(key) || value.empty()) {
    throw ConfigError("--set", 0, "malformed override '" + assignment + "'");
  }
  doc[key] = ConfigEntry{value, "--set", 0};
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------

namespace {

struct Reader {
  const ConfigEntry& e;
  const std::string& key;

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(e.source, e.line, key + ": " + msg); }

  double real() const {
    double v = 0.0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    const auto res = std::from_chars(b, end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
      fail("expected a real number, got '" + e.value + "'");
    }
    return v;
  }
  long long integer() const {
    long long v = 0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    const auto res = std::from_chars(b, end, v);
    if (res.ec != std::errc() || res.ptr != end) fail("expected an integer, got '" + e.value + "'");
    return v;
  }
  std::size_t count() const {
    const long long v = integer();
    if (v < 0) fail("must be >= 0");
    return static_cast<std::size_t>(v);
  }
  template <typename E>
  E choice(std::initializer_list<std::pair<const char*, E>> options) const {
    std::string names;
    for (const auto& [name, val] : options) {
      if (e.value == name) return val;
      names += names.empty() ? "" : ", ";
      names += name;
    }
    fail("unknown value '" + e.value + "'; expected one of: " + names);
  }
};

using Setter = std::function<void(ExperimentConfig&, const Reader&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"method.name", [](ExperimentConfig&, const Reader&) {}},  // resolved first
      {"method.eta_l", [](ExperimentConfig& c, const Reader& r) { c.method.eta_l = r.real(); }},
      {"method.eta_g", [](ExperimentConfig& c, const Reader& r) { c.method.eta_g = r.real(); }},
      {"method.alpha", [](ExperimentConfig& c, const Reader& r) { c.method.alpha = r.real(); }},
      {"method.beta1", [](ExperimentConfig& c, const Reader& r) { c.method.beta1 = r.real(); }},
      {"method.beta2", [](ExperimentConfig& c, const Reader& r) { c.method.beta2 = r.real(); }},
      {"method.eps_v", [](ExperimentConfig& c, const Reader& r) { c.method.eps_v = r.real(); }},
      {"method.mu_prox", [](ExperimentConfig& c, const Reader& r) { c.method.mu_prox = r.real(); }},
      {"method.scale", [](ExperimentConfig& c, const Reader& r) { c.method.scaffold_scale = r.real(); }},
      {"method.adam_v0", [](ExperimentConfig& c, const Reader& r) { c.method.adam_v0 = r.real(); }},
      {"method.server_variant",
       [](ExperimentConfig& c, const Reader& r) {
         c.method.server_variant =
             r.choice<ServerVariant>({{"adam", ServerVariant::kAdam}, {"amsgrad", ServerVariant::kAmsgrad}});
       }},
      {"method.decay", [](ExperimentConfig& c, const Reader& r) { c.method.decay = r.real(); }},
      {"method.weight_decay",
       [](ExperimentConfig& c, const Reader& r) { c.method.weight_decay = r.real(); }},
      {"model.kind",
       [](ExperimentConfig& c, const Reader& r) {
         c.model.kind = r.choice<ModelKind>({{"quadratic", ModelKind::kQuadratic},
                                             {"softmax", ModelKind::kSoftmaxLinear},
                                             {"mlp", ModelKind::kMlp1}});
       }},
      {"model.features", [](ExperimentConfig& c, const Reader& r) { c.model.p = r.count(); }},
      {"model.classes", [](ExperimentConfig& c, const Reader& r) { c.model.classes = r.count(); }},
      {"model.hidden", [](ExperimentConfig& c, const Reader& r) { c.model.hidden = r.count(); }},
      {"model.activation",
       [](ExperimentConfig& c, const Reader& r) {
         c.model.activation = r.choice<Activation>(
             {{"relu", Activation::kRelu}, {"gelu", Activation::kGelu}, {"smu", Activation::kSmu}});
       }},
      {"model.smu_mu", [](ExperimentConfig& c, const Reader& r) { c.model.smu_mu = r.real(); }},
      {"data.source",
       [](ExperimentConfig& c, const Reader& r) {
         c.data.source = r.choice<DataSource>({{"synthetic", DataSource::kSynthetic},
                                               {"csv", DataSource::kCsv},
                                               {"quadratic", DataSource::kQuadratic}});
       }},
      {"data.n_per_class", [](ExperimentConfig& c, const Reader& r) { c.data.n_per_class = r.count(); }},
      {"data.test_per_class",
       [](ExperimentConfig& c, const Reader& r) { c.data.test_per_class = r.count(); }},
      {"data.sep", [](ExperimentConfig& c, const Reader& r) { c.data.sep = r.real(); }},
      {"data.beta", [](ExperimentConfig& c, const Reader& r) { c.data.dirichlet_beta = r.real(); }},
      {"data.csv_train", [](ExperimentConfig& c, const Reader& r) { c.data.csv_train = r.e.value; }},
      {"data.csv_test", [](ExperimentConfig& c, const Reader& r) { c.data.csv_test = r.e.value; }},
      {"data.csv_label", [](ExperimentConfig& c, const Reader& r) { c.data.csv_label = r.e.value; }},
      {"data.quad_mu", [](ExperimentConfig& c, const Reader& r) { c.data.quad_mu = r.real(); }},
      {"data.quad_L", [](ExperimentConfig& c, const Reader& r) { c.data.quad_smoothness = r.real(); }},
      {"data.quad_b_scale", [](ExperimentConfig& c, const Reader& r) { c.data.quad_b_scale = r.real(); }},
      {"data.quad_noise", [](ExperimentConfig& c, const Reader& r) { c.data.quad_noise = r.real(); }},
      {"fed.clients", [](ExperimentConfig& c, const Reader& r) { c.clients = r.count(); }},
      {"fed.rate", [](ExperimentConfig& c, const Reader& r) { c.rate = r.real(); }},
      {"fed.rounds", [](ExperimentConfig& c, const Reader& r) { c.rounds = static_cast<int>(r.integer()); }},
      {"fed.local_steps",
       [](ExperimentConfig& c, const Reader& r) { c.local_steps = static_cast<int>(r.integer()); }},
      {"fed.local_epochs", [](ExperimentConfig&, const Reader&) {}},  // resolved last
      {"fed.batch", [](ExperimentConfig& c, const Reader& r) { c.batch = r.count(); }},
      {"run.seeds",
       [](ExperimentConfig& c, const Reader& r) {
         c.seeds.clear();
         for (const auto& item : split_list(r.e.value)) {
           ConfigEntry one{item, r.e.source, r.e.line};
           const long long v = Reader{one, r.key}.integer();
           if (v < 0) r.fail("seeds must be non-negative");
           c.seeds.push_back(static_cast<std::uint64_t>(v));
         }
       }},
      {"run.metric_every",
       [](ExperimentConfig& c, const Reader& r) { c.metric_every = static_cast<int>(r.integer()); }},
  };
  return table;
}

std::size_t count_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open CSV");
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line))
    if (!trim(line).empty()) ++n;
  return n;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, setter] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

ExperimentConfig build_config(const ConfigDoc& doc) {
  for (const auto& [key, entry] : doc) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(entry.source, entry.line, "unknown key '" + key + "'");
    }
  }
  ExperimentConfig cfg;
  Method method = Method::kFedLada;
  if (auto it = doc.find("method.name"); it != doc.end()) {
    const auto parsed = parse_method(it->second.value);
    if (!parsed) {
      throw ConfigError(it->second.source, it->second.line,
                        "unknown method '" + it->second.value + "'; valid methods: " +
                            method_names());
    }
    method = *parsed;
  }
  cfg.method = MethodConfig::defaults(method);
  cfg.model = Model{ModelKind::kSoftmaxLinear, 20, 5, 8, Activation::kGelu, 25.0, 0.0};
  for (const auto& [key, setter] : setters()) {
    if (auto it = doc.find(key); it != doc.end()) setter(cfg, Reader{it->second, key});
  }
  if (method == Method::kLocalAdam) cfg.method.alpha = 1.0;

  if (auto it = doc.find("fed.local_epochs"); it != doc.end()) {
    const Reader r{it->second, it->first};
    const long long epochs = r.integer();
    if (epochs < 1) r.fail("must be >= 1");
    if (doc.count("fed.local_steps")) r.fail("set either fed.local_steps or fed.local_epochs, not both");
    std::size_t train_n = 0;
    if (cfg.data.source == DataSource::kSynthetic) {
      train_n = cfg.data.n_per_class * cfg.model.classes;
    } else if (cfg.data.source == DataSource::kCsv) {
      train_n = count_csv_rows(cfg.data.csv_train);
      if (cfg.data.csv_test.empty()) {
        train_n -= std::min(train_n, cfg.data.test_per_class * cfg.model.classes);
      }
    } else {
      r.fail("epochs are undefined for quadratic clients; use fed.local_steps");
    }
    const std::size_t shard = std::max<std::size_t>(1, train_n / std::max<std::size_t>(1, cfg.clients));
    const std::size_t per_epoch = (shard + cfg.batch - 1) / std::max<std::size_t>(1, cfg.batch);
    cfg.local_steps = static_cast<int>(epochs * static_cast<long long>(per_epoch));
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    // Validation messages lead with the key they concern; point at its line.
    const std::string msg = e.what();
    const std::string key = msg.substr(0, msg.find(' '));
    if (auto it = doc.find(key); it != doc.end()) {
      throw ConfigError(it->second.source, it->second.line, msg);
    }
    throw ConfigError("config", 0, msg);
  }
  return cfg;
}

std::string canonical_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  const auto& m = c.method;
  kv["method.name"] = std::string(method_name(m.method));
  kv["method.eta_l"] = format_double(m.eta_l);
  kv["method.eta_g"] = format_double(m.eta_g);
  kv["method.alpha"] = format_double(m.alpha);
  kv["method.beta1"] = format_double(m.beta1);
  kv["method.beta2"] = format_double(m.beta2);
  kv["method.eps_v"] = format_double(m.eps_v);
  kv["method.mu_prox"] = format_double(m.mu_prox);
  kv["method.scale"] = format_double(m.scaffold_scale);
  kv["method.adam_v0"] = format_double(m.adam_v0);
  kv["method.server_variant"] = m.server_variant == ServerVariant::kAdam ? "adam" : "amsgrad";
  kv["method.decay"] = format_double(m.decay);
  kv["method.weight_decay"] = format_double(m.weight_decay);
  const char* kinds[] = {"quadratic", "softmax", "mlp"};
  const char* acts[] = {"relu", "gelu", "smu"};
  kv["model.kind"] = kinds[static_cast<int>(c.model.kind)];
  kv["model.features"] = std::to_string(c.model.p);
  kv["model.classes"] = std::to_string(c.model.classes);
  kv["model.hidden"] = std::to_string(c.model.hidden);
  kv["model.activation"] = acts[static_cast<int>(c.model.activation)];
  kv["model.smu_mu"] = format_double(c.model.smu_mu);
  const char* sources[] = {"synthetic", "csv", "quadratic"};
  kv["data.source"] = sources[static_cast<int>(c.data.source)];
  kv["data.n_per_class"] = std::to_string(c.data.n_per_class);
  kv["data.test_per_class"] = std::to_string(c.data.test_per_class);
  kv["data.sep"] = format_double(c.data.sep);
  kv["data.beta"] = format_double(c.data.dirichlet_beta);
  kv["data.csv_train"] = c.data.csv_train;
  kv["data.csv_test"] = c.data.csv_test;
  kv["data.csv_label"] = c.data.csv_label;
  kv["data.quad_mu"] = format_double(c.data.quad_mu);
  kv["data.quad_L"] = format_double(c.data.quad_smoothness);
  kv["data.quad_b_scale"] = format_double(c.data.quad_b_scale);
  kv["data.quad_noise"] = format_double(c.data.quad_noise);
  kv["fed.clients"] = std::to_string(c.clients);
  kv["fed.rate"] = format_double(c.rate);
  kv["fed.rounds"] = std::to_string(c.rounds);
  kv["fed.local_steps"] = std::to_string(c.local_steps);
  kv["fed.batch"] = std::to_string(c.batch);
  std::string seeds;
  for (auto s : c.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  kv["run.seeds"] = seeds;
  kv["run.metric_every"] = std::to_string(c.metric_every);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fedsim
