#include "fedsnt/scenario.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fedsnt/error.hpp"

namespace fedsnt {

using nlohmann::json;

std::string_view to_string(AttackMode mode) {
  return mode == AttackMode::kSignFlip ? "sign_flip" : "unaligned";
}

int ScenarioConfig::malicious_count() const {
  return static_cast<int>(std::llround(num_clients * malicious_ratio));
}

void ScenarioConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kInvalidConfig, m); };
  if (num_clients < 1) bad("num_clients must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients) {
    bad("clients_per_round must lie in [1, num_clients]");
  }
  if (!(malicious_ratio >= 0.0 && malicious_ratio < 1.0)) bad("malicious_ratio must lie in [0, 1)");
  if (rounds < 0) bad("rounds must be >= 0");
  if (samples_per_client == 0 && client_files.empty()) bad("samples_per_client must be > 0");
  if (byzantine_f && *byzantine_f < 0) bad("aggregator.f must be >= 0");
  if (byzantine_f && clients_per_round >= 1 &&
      *byzantine_f > max_admissible_f(aggregator, static_cast<std::size_t>(clients_per_round),
                                      robust.dnc_filter_multiplier_c)) {
    bad("aggregator.f is too large for " + std::string(to_string(aggregator)) +
        " with clients_per_round=" + std::to_string(clients_per_round));
  }
  if (!(robust.dnc_filter_multiplier_c > 0.0)) bad("aggregator.dnc_c must be > 0");
  if (robust.dnc_subsample_dims == 0) bad("aggregator.dnc_subsample_dims must be > 0");
  if (robust.dnc_iterations < 1) bad("aggregator.dnc_iterations must be >= 1");
  if (!(robust.foolsgold_confidence_kappa > 0.0)) bad("aggregator.foolsgold_kappa must be > 0");
  if (!(robust.residual_lambda > 0.0)) bad("aggregator.residual_lambda must be > 0");
  if (!(robust.residual_mad_scale > 0.0)) bad("aggregator.residual_mad_scale must be > 0");
  if (aggregator == AggregatorKind::kResidual && clients_per_round < 3) {
    bad("aggregator.rule residual needs clients_per_round >= 3");
  }
  if (task.dim == 0) bad("task.dim must be > 0");
  if (!(task.margin > 0.0)) bad("task.margin must be > 0");
  if (!(task.intensity_spread >= 0.0)) bad("task.intensity_spread must be >= 0");
  if (!(task.noise_std >= 0.0)) bad("task.noise_std must be >= 0");
  if (eval.probe_count == 0) bad("eval.probe_count must be > 0");
  if (threads < 1) bad("run.threads must be >= 1");
  if (!client_files.empty() && static_cast<int>(client_files.size()) != num_clients) {
    bad("data.client_files must list one file per client");
  }
  trainer.validate();
  if (defense) defense->validate();
}

SurrogateTaskSpec ScenarioConfig::make_task() const {
  return SurrogateTaskSpec::make(task.dim, task.margin, task.intensity_spread, task.noise_std,
                                 task.seed.value_or(seed));
}

namespace {

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

json trainer_json(const TrainerConfig& t) {
  return {{"local_steps", t.local_steps}, {"batch_size", t.batch_size},
          {"lr", t.lr},                   {"optimizer", optimizer_name(t.optimizer)},
          {"beta1", t.beta1},             {"beta2", t.beta2},
          {"epsilon", t.epsilon},         {"weight_decay", t.weight_decay}};
}

json defense_json(const PostHocConfig& d) {
  return {{"level", d.level},
          {"samples", d.defense_samples},
          {"steps", d.defense_steps},
          {"aligned_fraction", d.aligned_fraction},
          {"source", d.source.string()},
          {"provider", d.provider},
          {"lr", d.trainer.lr},
          {"batch_size", d.trainer.batch_size}};
}

// Overlays `user` onto `base`, rejecting keys the base does not know.
void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) fail(ErrorKind::kInvalidConfig, (path.empty() ? "config" : path) + ": expected a table");
  for (const auto& [key, value] : user.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) fail(ErrorKind::kInvalidConfig, p + ": unknown key");
    json& slot = base[key];
    if (p == "defense") {
      if (value.is_null()) {
        slot = nullptr;
      } else {
        if (slot.is_null()) slot = defense_json(PostHocConfig{});
        merge(slot, value, p);
      }
    } else if (slot.is_object()) {
      merge(slot, value, p);
    } else {
      slot = value;
    }
  }
}

struct Reader {
  const json& j;
  std::string path;

  const json& at(const char* key) const { return j.at(key); }
  std::string where(const char* key) const { return path.empty() ? key : path + "." + key; }

  long long integer(const char* key) const {
    const json& v = at(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) {
      return static_cast<long long>(v.get<double>());
    }
    fail(ErrorKind::kInvalidConfig, where(key) + ": expected an integer");
  }
  std::uint64_t unsigned_integer(const char* key) const {
    const json& v = at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    fail(ErrorKind::kInvalidConfig, where(key) + ": expected a non-negative integer");
  }
  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(ErrorKind::kInvalidConfig, where(key) + ": expected a number");
    return v.get<double>();
  }
  bool boolean(const char* key) const {
    const json& v = at(key);
    if (!v.is_boolean()) fail(ErrorKind::kInvalidConfig, where(key) + ": expected true or false");
    return v.get<bool>();
  }
  std::string string(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(ErrorKind::kInvalidConfig, where(key) + ": expected a string");
    return v.get<std::string>();
  }
  Reader sub(const char* key) const { return Reader{at(key), where(key)}; }
};

// Re-raises any library error with the field path in front.
template <typename F>
auto field(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    fail(ErrorKind::kInvalidConfig, path + ": " + e.what());
  }
}

TrainerConfig read_trainer(const Reader& r) {
  TrainerConfig t;
  t.local_steps = static_cast<int>(r.integer("local_steps"));
  t.batch_size = static_cast<int>(r.integer("batch_size"));
  t.lr = r.number("lr");
  const std::string opt = r.string("optimizer");
  if (opt == "sgd") t.optimizer = Optimizer::kSgd;
  else if (opt == "adam") t.optimizer = Optimizer::kAdamMoment;
  else fail(ErrorKind::kInvalidConfig, r.where("optimizer") + ": expected sgd or adam");
  t.beta1 = r.number("beta1");
  t.beta2 = r.number("beta2");
  t.epsilon = r.number("epsilon");
  t.weight_decay = r.number("weight_decay");
  return t;
}

}  // namespace

json to_json(const ScenarioConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["num_clients"] = c.num_clients;
  j["malicious_ratio"] = c.malicious_ratio;
  j["clients_per_round"] = c.clients_per_round;
  j["rounds"] = c.rounds;
  j["samples_per_client"] = c.samples_per_client;
  j["attack"] = to_string(c.attack);
  j["sybil"] = c.sybil;
  j["aggregator"] = {
      {"rule", to_string(c.aggregator)},
      {"f", c.byzantine_f ? json(*c.byzantine_f) : json(nullptr)},
      {"dnc_c", c.robust.dnc_filter_multiplier_c},
      {"dnc_subsample_dims", c.robust.dnc_subsample_dims},
      {"dnc_iterations", c.robust.dnc_iterations},
      {"foolsgold_kappa", c.robust.foolsgold_confidence_kappa},
      {"residual_lambda", c.robust.residual_lambda},
      {"residual_mad_scale", c.robust.residual_mad_scale},
  };
  j["trainer"] = trainer_json(c.trainer);
  j["trainer"]["cosine_schedule"] = c.cosine_schedule;
  j["task"] = {{"dim", c.task.dim},
               {"margin", c.task.margin},
               {"intensity_spread", c.task.intensity_spread},
               {"noise_std", c.task.noise_std},
               {"seed", c.task.seed ? json(*c.task.seed) : json(nullptr)}};
  j["eval"] = {{"probe_count", c.eval.probe_count}, {"refusal_patterns", c.eval.refusal_patterns}};
  j["defense"] = c.defense ? defense_json(*c.defense) : json(nullptr);
  j["data"] = {{"client_files", c.client_files}};
  j["run"] = {{"threads", c.threads}, {"log_updates", c.log_updates}};
  return j;
}

ScenarioConfig scenario_from_json(const json& user) {
  json j = to_json(ScenarioConfig{});
  merge(j, user, "");
  const Reader r{j, ""};
  ScenarioConfig c;
  c.seed = r.unsigned_integer("seed");
  c.num_clients = static_cast<int>(r.integer("num_clients"));
  c.malicious_ratio = r.number("malicious_ratio");
  c.clients_per_round = static_cast<int>(r.integer("clients_per_round"));
  c.rounds = static_cast<int>(r.integer("rounds"));
  const long long spc = r.integer("samples_per_client");
  if (spc < 0) fail(ErrorKind::kInvalidConfig, "samples_per_client must be >= 0");
  c.samples_per_client = static_cast<std::size_t>(spc);
  const std::string attack = r.string("attack");
  if (attack == "unaligned") c.attack = AttackMode::kUnaligned;
  else if (attack == "sign_flip") c.attack = AttackMode::kSignFlip;
  else fail(ErrorKind::kInvalidConfig, "attack: expected unaligned or sign_flip");
  c.sybil = r.boolean("sybil");

  const Reader a = r.sub("aggregator");
  c.aggregator = field("aggregator.rule", [&] { return parse_aggregator(a.string("rule")); });
  if (!a.at("f").is_null()) c.byzantine_f = static_cast<int>(a.integer("f"));
  c.robust.dnc_filter_multiplier_c = a.number("dnc_c");
  const long long sub = a.integer("dnc_subsample_dims");
  if (sub <= 0) fail(ErrorKind::kInvalidConfig, "aggregator.dnc_subsample_dims must be > 0");
  c.robust.dnc_subsample_dims = static_cast<std::size_t>(sub);
  c.robust.dnc_iterations = static_cast<int>(a.integer("dnc_iterations"));
  c.robust.foolsgold_confidence_kappa = a.number("foolsgold_kappa");
  c.robust.residual_lambda = a.number("residual_lambda");
  c.robust.residual_mad_scale = a.number("residual_mad_scale");

  const Reader t = r.sub("trainer");
  c.trainer = read_trainer(t);
  c.cosine_schedule = t.boolean("cosine_schedule");

  const Reader k = r.sub("task");
  const long long dim = k.integer("dim");
  if (dim <= 0) fail(ErrorKind::kInvalidConfig, "task.dim must be > 0");
  c.task.dim = static_cast<std::size_t>(dim);
  c.task.margin = k.number("margin");
  c.task.intensity_spread = k.number("intensity_spread");
  c.task.noise_std = k.number("noise_std");
  if (!k.at("seed").is_null()) c.task.seed = k.unsigned_integer("seed");

  const Reader e = r.sub("eval");
  const long long probes = e.integer("probe_count");
  if (probes <= 0) fail(ErrorKind::kInvalidConfig, "eval.probe_count must be > 0");
  c.eval.probe_count = static_cast<std::size_t>(probes);
  c.eval.refusal_patterns = e.string("refusal_patterns");

  if (!j["defense"].is_null()) {
    const Reader d = r.sub("defense");
    PostHocConfig p;
    p.level = static_cast<int>(d.integer("level"));
    const long long ds = d.integer("samples");
    if (ds < 0) fail(ErrorKind::kInvalidConfig, "defense.samples must be >= 0");
    p.defense_samples = static_cast<std::size_t>(ds);
    p.defense_steps = static_cast<int>(d.integer("steps"));
    p.aligned_fraction = d.number("aligned_fraction");
    p.source = d.string("source");
    p.provider = d.string("provider");
    p.trainer = c.trainer;
    p.trainer.lr = d.number("lr");
    p.trainer.batch_size = static_cast<int>(d.integer("batch_size"));
    c.defense = p;
  }

  const json& files = j["data"]["client_files"];
  if (!files.is_array()) fail(ErrorKind::kInvalidConfig, "data.client_files: expected an array");
  for (const auto& f : files) {
    if (!f.is_string()) fail(ErrorKind::kInvalidConfig, "data.client_files: expected strings");
    c.client_files.push_back(f.get<std::string>());
  }
  const Reader run = r.sub("run");
  c.threads = static_cast<int>(run.integer("threads"));
  c.log_updates = run.boolean("log_updates");

  c.validate();
  return c;
}

namespace {

struct TomlCursor {
  std::string_view s;
  std::size_t i = 0;
  std::size_t line;

  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::kInvalidConfig, "toml line " + std::to_string(line) + ": " + msg);
  }
  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool done() {
    skip_ws();
    return i >= s.size() || s[i] == '#';
  }
};

json toml_value(TomlCursor& c) {
  c.skip_ws();
  if (c.i >= c.s.size()) c.error("missing value");
  const char ch = c.s[c.i];
  if (ch == '"') {
    std::string out;
    ++c.i;
    while (c.i < c.s.size() && c.s[c.i] != '"') {
      char x = c.s[c.i++];
      if (x == '\\') {
        if (c.i >= c.s.size()) c.error("dangling escape");
        const char e = c.s[c.i++];
        switch (e) {
          case 'n': x = '\n'; break;
          case 't': x = '\t'; break;
          case '"': x = '"'; break;
          case '\\': x = '\\'; break;
          default: c.error(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(x);
    }
    if (c.i >= c.s.size()) c.error("unterminated string");
    ++c.i;
    return out;
  }
  if (ch == '\'') {
    const auto end = c.s.find('\'', c.i + 1);
    if (end == std::string_view::npos) c.error("unterminated string");
    std::string out(c.s.substr(c.i + 1, end - c.i - 1));
    c.i = end + 1;
    return out;
  }
  if (ch == '[') {
    ++c.i;
    json arr = json::array();
    c.skip_ws();
    if (c.i < c.s.size() && c.s[c.i] == ']') {
      ++c.i;
      return arr;
    }
    while (true) {
      arr.push_back(toml_value(c));
      c.skip_ws();
      if (c.i < c.s.size() && c.s[c.i] == ',') {
        ++c.i;
        c.skip_ws();
        if (c.i < c.s.size() && c.s[c.i] == ']') {
          ++c.i;
          return arr;
        }
        continue;
      }
      if (c.i < c.s.size() && c.s[c.i] == ']') {
        ++c.i;
        return arr;
      }
      c.error("expected ',' or ']' in array");
    }
  }
  std::size_t end = c.i;
  while (end < c.s.size() && c.s[end] != ',' && c.s[end] != ']' && c.s[end] != '#' &&
         c.s[end] != ' ' && c.s[end] != '\t') {
    ++end;
  }
  std::string tok(c.s.substr(c.i, end - c.i));
  c.i = end;
  if (tok == "true") return true;
  if (tok == "false") return false;
  std::string digits;
  for (char x : tok) {
    if (x != '_') digits.push_back(x);
  }
  try {
    std::size_t used = 0;
    if (digits.find_first_of(".eE") == std::string::npos || digits.rfind("0x", 0) == 0) {
      const long long v = std::stoll(digits, &used, 0);
      if (used == digits.size()) return v;
    } else {
      const double v = std::stod(digits, &used);
      if (used == digits.size()) return v;
    }
  } catch (const std::exception&) {
  }
  if (digits == "inf" || digits == "nan") c.error("non-finite numbers are not allowed");
  c.error("cannot parse value '" + tok + "'");
}

std::vector<std::string> split_key(std::string_view key, TomlCursor& c) {
  std::vector<std::string> parts;
  std::string cur;
  for (char x : key) {
    if (x == '.') {
      if (cur.empty()) c.error("empty key segment");
      parts.push_back(cur);
      cur.clear();
    } else if (x == ' ' || x == '\t') {
      continue;
    } else if (std::isalnum(static_cast<unsigned char>(x)) || x == '_' || x == '-') {
      cur.push_back(x);
    } else {
      c.error(std::string("invalid character '") + x + "' in key");
    }
  }
  if (cur.empty()) c.error("empty key");
  parts.push_back(cur);
  return parts;
}

}  // namespace

json parse_toml(std::string_view text) {
  json root = json::object();
  json* table = &root;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    TomlCursor c{line, 0, line_no};
    if (!c.done()) {
      if (line[c.i] == '[') {
        const auto close = line.find(']', c.i);
        if (close == std::string_view::npos) c.error("unterminated table header");
        const auto parts = split_key(line.substr(c.i + 1, close - c.i - 1), c);
        table = &root;
        for (const auto& p : parts) {
          json& next = (*table)[p];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) c.error("'" + p + "' is not a table");
          table = &next;
        }
        c.i = close + 1;
        if (!c.done()) c.error("trailing characters after table header");
      } else {
        const auto eq = line.find('=', c.i);
        if (eq == std::string_view::npos) c.error("expected key = value");
        const auto parts = split_key(line.substr(c.i, eq - c.i), c);
        c.i = eq + 1;
        json value = toml_value(c);
        if (!c.done()) c.error("trailing characters after value");
        json* t = table;
        for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
          json& next = (*t)[parts[k]];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) c.error("'" + parts[k] + "' is not a table");
          t = &next;
        }
        if (t->contains(parts.back())) c.error("duplicate key '" + parts.back() + "'");
        (*t)[parts.back()] = std::move(value);
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return root;
}

json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInvalidConfig, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (path.extension() == ".toml") return parse_toml(text);
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::kInvalidConfig, path.string() + ": " + e.what());
  }
}

std::string resolve_key_alias(std::string_view key) {
  if (key == "aggregator") return "aggregator.rule";
  if (key == "defense_steps") return "defense.steps";
  if (key == "defense_level") return "defense.level";
  if (key == "defense_samples") return "defense.samples";
  return std::string(key);
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorKind::kInvalidConfig, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key = resolve_key_alias(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const std::exception&) {
    value = raw;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorKind::kInvalidConfig, "override key '" + key + "' is malformed");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kIo, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::string config_hash(const ScenarioConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

}  // namespace fedsnt
