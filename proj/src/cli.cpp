#include "fedsnt/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"

#include "fedsnt/datagen.hpp"
#include "fedsnt/dataset_io.hpp"
#include "fedsnt/defense.hpp"
#include "fedsnt/error.hpp"
#include "fedsnt/evaluation.hpp"
#include "fedsnt/forensics.hpp"
#include "fedsnt/model_io.hpp"
#include "fedsnt/provider.hpp"
#include "fedsnt/seed.hpp"
#include "fedsnt/simulation.hpp"

namespace fedsnt {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

const std::vector<std::string> kSummaryHeader{
    "aggregator", "attack", "malicious_ratio", "num_clients", "defense_level",
    "safety_rate (proxy)", "helpfulness_rate (proxy)"};

std::vector<std::string> summary_row(const ScenarioConfig& cfg, const std::string& defense,
                                     const EvalSnapshot& s) {
  const std::string attack =
      cfg.malicious_count() == 0 ? "none" : std::string(to_string(cfg.attack));
  return {std::string(to_string(cfg.aggregator)), attack, fixed(cfg.malicious_ratio, 2),
          std::to_string(cfg.num_clients), defense, fixed(s.safety_rate), fixed(s.helpfulness_rate)};
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << std::left << std::setw(static_cast<int>(width[i])) << r[i]
          << (i + 1 == r.size() ? "\n" : "  ");
    }
  }
}

DataKind parse_kind_arg(const std::string& kind) {
  try {
    return parse_data_kind(kind);
  } catch (const Error&) {
    fail(ErrorKind::kInvalidConfig, "--kind must be unaligned, aligned or normal");
  }
}

struct RunOutcome {
  SimulationResult result;
  json manifest;
};

RunOutcome execute_run(const ScenarioConfig& cfg, const fs::path& out_dir, bool forensics,
                       const std::string& dump_defense, std::ostream& log) {
  ensure_dir(out_dir);
  const std::string started = utc_now();
  const fs::path run_log = out_dir / "run_log.jsonl";
  std::ofstream log_out(run_log, std::ios::binary);
  if (!log_out) fail(ErrorKind::kIo, "cannot write " + run_log.string());

  RunOutcome o;
  o.result = run_simulation(
      cfg, [&](const RoundRecord& r) { append_run_log(log_out, r, cfg.log_updates); }, forensics);
  log_out.close();

  json artifacts{{"run_log", run_log.string()}};
  const fs::path model = out_dir / "final_model.bin";
  save_model(model, o.result.final_model);
  artifacts["final_model"] = model.string();
  if (o.result.defended_model) {
    const fs::path defended = out_dir / "defended_model.bin";
    save_model(defended, *o.result.defended_model);
    artifacts["defended_model"] = defended.string();
    if (!dump_defense.empty()) {
      const auto task = cfg.make_task();
      std::vector<DataSample> data;
      apply(o.result.final_model, *cfg.defense, task, derive_seed(cfg.seed, "defense"), &data);
      write_dataset(dump_defense, data);
      artifacts["defense_data"] = dump_defense;
    }
  }
  if (forensics && !o.result.records.empty()) {
    export_forensics(o.result.records, out_dir / "forensics");
    artifacts["forensics"] = (out_dir / "forensics").string();
  }

  std::vector<std::vector<std::string>> rows{kSummaryHeader,
                                             summary_row(cfg, "none", o.result.final_metrics)};
  if (o.result.defended_metrics) {
    rows.push_back(summary_row(cfg, std::to_string(cfg.defense->level), *o.result.defended_metrics));
  }
  const fs::path summary = out_dir / "summary.csv";
  {
    std::ofstream s(summary, std::ios::binary);
    if (!s) fail(ErrorKind::kIo, "cannot write " + summary.string());
    for (const auto& r : rows) write_csv_row(s, r);
  }
  artifacts["summary"] = summary.string();
  print_table(log, rows);

  o.manifest = {
      {"config_hash", config_hash(cfg)},
      {"seeds",
       {{"global", cfg.seed},
        {"task", cfg.task.seed.value_or(cfg.seed)},
        {"probes", derive_seed(cfg.seed, "probes")},
        {"defense", derive_seed(cfg.seed, "defense")}}},
      {"started_at", started},
      {"finished_at", utc_now()},
      {"artifacts", artifacts},
      {"config", to_json(cfg)},
  };
  std::ofstream m(out_dir / "manifest.json", std::ios::binary);
  if (!m) fail(ErrorKind::kIo, "cannot write manifest");
  m << o.manifest.dump(2) << '\n';
  return o;
}

bool key_exists(const json& resolved, const std::string& key) {
  const json* node = &resolved;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part == "defense" && node == &resolved && dot != std::string::npos) {
      // Any defense field may be swept even when the base config has none.
      static const json kDefense = to_json([] {
        ScenarioConfig c;
        c.defense = PostHocConfig{};
        return c;
      }())["defense"];
      return kDefense.contains(key.substr(dot + 1));
    }
    if (!node->is_object() || !node->contains(part)) return false;
    node = &(*node)[part];
    if (dot == std::string::npos) return !node->is_object();
    start = dot + 1;
  }
}

std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

ScenarioConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    j = load_config_json(path);
    if (j.is_object() && j.contains("config_hash") && j.contains("config")) {
      // A run manifest: reuse its embedded config after checking the hash.
      const auto cfg = scenario_from_json(j["config"]);
      if (config_hash(cfg) != j["config_hash"].get<std::string>()) {
        fail(ErrorKind::kInvalidConfig, path + ": config hash does not match its embedded config");
      }
      j = j["config"];
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return scenario_from_json(j);
}

std::vector<json> parse_grid_values(const std::string& spec) {
  auto scalar = [](const std::string& text) -> json {
    try {
      return json::parse(text);
    } catch (const std::exception&) {
      return text;
    }
  };
  std::vector<json> out;
  const auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const auto colon = spec.find(':', dots);
    try {
      const double a = std::stod(spec.substr(0, dots));
      const double b = std::stod(spec.substr(dots + 2, colon == std::string::npos ? std::string::npos
                                                                                 : colon - dots - 2));
      const double step = colon == std::string::npos ? 1.0 : std::stod(spec.substr(colon + 1));
      if (!(step > 0.0)) fail(ErrorKind::kInvalidConfig, "grid step must be > 0");
      const bool integral = std::floor(a) == a && std::floor(step) == step;
      for (int i = 0;; ++i) {
        const double v = a + i * step;
        if (v > b + 1e-9 * std::max(1.0, std::abs(b))) break;
        out.push_back(integral ? json(static_cast<long long>(std::llround(v))) : json(v));
        if (out.size() > 100000) fail(ErrorKind::kInvalidConfig, "grid range too large");
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::kInvalidConfig, "cannot parse grid range '" + spec + "'");
    }
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto comma = spec.find(',', start);
    const std::string item = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item.empty()) fail(ErrorKind::kInvalidConfig, "empty value in grid '" + spec + "'");
    out.push_back(scalar(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated instruction-tuning safety simulator", "fedsnt"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "fedsnt_out", dump_defense;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool forensics = false;

  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("--config,-c", config_path, "Scenario file (.json, .toml or manifest.json)");
  run->add_option("--override,-o", overrides, "key=value (repeatable)");
  run->add_option("--seed", seed, "Global seed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--forensics", forensics, "Export similarity and weight CSVs");
  run->add_option("--dump-defense-data", dump_defense, "Write the defense dataset as JSONL");

  std::string kind, provider = "stub", gen_out, dump_prompts;
  std::size_t n = 0;
  int in_flight = 4;
  bool encode = false;
  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  gen->add_option("--kind", kind, "unaligned, aligned or normal")->required();
  gen->add_option("-n", n, "Number of samples")->required();
  gen->add_option("--provider", provider, "stub or http");
  gen->add_option("--out", gen_out, "Output JSONL")->required();
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("--in-flight", in_flight, "Concurrent provider calls");
  gen->add_option("--dump-prompts", dump_prompts, "Write the response prompts, one per line");
  gen->add_flag("--encode", encode, "Attach surrogate features for the configured task");
  gen->add_option("--config,-c", config_path, "Scenario file supplying the task for --encode");

  std::string model_path, defended_out;
  int level = 0;
  auto* defend = app.add_subcommand("defend", "Apply the post-hoc defense to a saved model");
  defend->add_option("--model", model_path, "Model file")->required();
  defend->add_option("--config,-c", config_path, "Scenario file (task and defense settings)");
  defend->add_option("--override,-o", overrides, "key=value (repeatable)");
  defend->add_option("--level", level, "Defense level 1, 2 or 3");
  defend->add_option("--out", defended_out, "Output model file")->required();
  defend->add_option("--dump-defense-data", dump_defense, "Write the defense dataset as JSONL");

  std::string log_path, rounds_spec;
  auto* foren = app.add_subcommand("forensics", "Re-export forensics from a run log");
  foren->add_option("--log", log_path, "run_log.jsonl")->required();
  foren->add_option("--out", out_dir, "Output directory");
  foren->add_option("--rounds", rounds_spec, "Comma-separated rounds, or 'all'");

  std::vector<std::string> grid;
  auto* sweep = app.add_subcommand("sweep", "Run a grid of scenarios");
  sweep->add_option("--config,-c", config_path, "Base scenario file");
  sweep->add_option("--override,-o", overrides, "key=value (repeatable)");
  sweep->add_option("--grid,-g", grid, "key=v1,v2 or key=a..b:step (repeatable)");
  sweep->add_option("--out", out_dir, "Output directory");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*run) {
      if (seed) overrides.push_back("seed=" + std::to_string(*seed));
      const auto cfg = resolve_config(config_path, overrides);
      if (forensics && !cfg.log_updates) {
        fail(ErrorKind::kInvalidConfig, "--forensics needs run.log_updates = true");
      }
      execute_run(cfg, out_dir, forensics, dump_defense, out);
      out << "manifest: " << (fs::path(out_dir) / "manifest.json").string() << "\n";
      return kExitOk;
    }
    if (*gen) {
      const DataKind k = parse_kind_arg(kind);
      GenerationOptions go;
      go.in_flight = in_flight;
      std::vector<DataSample> data;
      std::vector<std::string> prompts;
      GenerationStats stats;
      if (n > 0) {
        auto p = make_provider(provider);
        data = generate_dataset(*p, k, n, seed.value_or(0), go, &stats, &prompts);
        if (encode) {
          const auto cfg = resolve_config(config_path, overrides);
          Rng rng = make_rng(seed.value_or(0), "encode");
          data = surrogate_encode(std::move(data), cfg.make_task(), rng);
        }
      }
      write_dataset(gen_out, data);
      if (!dump_prompts.empty()) {
        std::ofstream pf(dump_prompts, std::ios::binary);
        if (!pf) fail(ErrorKind::kIo, "cannot write " + dump_prompts);
        for (const auto& p : prompts) pf << p << '\n';
      }
      out << "wrote " << data.size() << " samples to " << gen_out << " (" << stats.calls
          << " provider calls, " << stats.duplicates << " duplicates, " << stats.unparseable
          << " unparseable, " << stats.dropped_empty << " empty)\n";
      return kExitOk;
    }
    if (*defend) {
      if (level != 0) overrides.push_back("defense.level=" + std::to_string(level));
      auto cfg = resolve_config(config_path, overrides);
      if (!cfg.defense) cfg.defense = PostHocConfig{};
      cfg.defense->trainer.optimizer = cfg.trainer.optimizer;
      cfg.defense->validate();
      const auto task = cfg.make_task();
      const auto model = load_model(model_path);
      const auto probes = make_probes(task, cfg.eval.probe_count, cfg.seed);
      std::vector<DataSample> data;
      const auto defended = apply(model, *cfg.defense, task, derive_seed(cfg.seed, "defense"),
                                  dump_defense.empty() ? nullptr : &data);
      if (!dump_defense.empty()) write_dataset(dump_defense, data);
      save_model(defended_out, defended);
      const auto before = evaluate(model, task, probes, 0);
      const auto after = evaluate(defended, task, probes, 0);
      print_table(out, {{"model", "safety_rate (proxy)", "helpfulness_rate (proxy)"},
                        {"input", fixed(before.safety_rate), fixed(before.helpfulness_rate)},
                        {"defended (level " + std::to_string(cfg.defense->level) + ")",
                         fixed(after.safety_rate), fixed(after.helpfulness_rate)}});
      return kExitOk;
    }
    if (*foren) {
      const auto records = read_run_log(log_path);
      ForensicsOptions fo;
      if (rounds_spec == "all") {
        for (const auto& r : records) fo.similarity_rounds.push_back(r.round);
      } else if (!rounds_spec.empty()) {
        for (const auto& v : parse_grid_values(rounds_spec)) {
          if (!v.is_number_integer()) fail(ErrorKind::kInvalidConfig, "--rounds expects integers");
          fo.similarity_rounds.push_back(v.get<int>());
        }
      }
      const auto art = export_forensics(records, out_dir, fo);
      out << "wrote " << art.weights_csv.string() << " and " << art.similarity_csvs.size()
          << " similarity matrices\n";
      return kExitOk;
    }
    if (*sweep) {
      const auto base = resolve_config(config_path, overrides);
      const json resolved = to_json(base);
      std::vector<std::pair<std::string, std::vector<json>>> axes;
      for (const auto& g : grid) {
        const auto eq = g.find('=');
        if (eq == std::string::npos) fail(ErrorKind::kInvalidConfig, "grid '" + g + "' is not key=values");
        const std::string key = resolve_key_alias(g.substr(0, eq));
        if (!key_exists(resolved, key)) fail(ErrorKind::kInvalidConfig, "grid key '" + key + "' is not a config field");
        axes.emplace_back(key, parse_grid_values(g.substr(eq + 1)));
      }
      // Validate every point before running any.
      std::vector<std::vector<std::size_t>> points{{}};
      for (const auto& axis : axes) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& p : points) {
          for (std::size_t i = 0; i < axis.second.size(); ++i) {
            auto q = p;
            q.push_back(i);
            next.push_back(q);
          }
        }
        points = std::move(next);
      }
      std::vector<ScenarioConfig> cfgs;
      for (const auto& p : points) {
        json j = resolved;
        for (std::size_t a = 0; a < axes.size(); ++a) {
          const json& v = axes[a].second[p[a]];
          apply_override(j, axes[a].first + "=" + (v.is_string() ? v.get<std::string>() : v.dump()));
        }
        cfgs.push_back(scenario_from_json(j));
      }
      ensure_dir(out_dir);
      const fs::path csv = fs::path(out_dir) / "sweep.csv";
      std::ofstream s(csv, std::ios::binary);
      if (!s) fail(ErrorKind::kIo, "cannot write " + csv.string());
      std::vector<std::string> header;
      for (const auto& a : axes) header.push_back(a.first);
      header.insert(header.end(), {"aggregator", "attack", "num_clients", "defense_level",
                                   "safety_rate (proxy)", "helpfulness_rate (proxy)",
                                   "defended_safety_rate (proxy)",
                                   "defended_helpfulness_rate (proxy)", "config_hash"});
      write_csv_row(s, header);
      std::vector<std::vector<std::string>> table{header};
      for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const auto& cfg = cfgs[i];
        const auto r = run_simulation(cfg, {}, false);
        std::vector<std::string> row;
        for (std::size_t a = 0; a < axes.size(); ++a) row.push_back(value_text(axes[a].second[points[i][a]]));
        row.push_back(std::string(to_string(cfg.aggregator)));
        row.push_back(cfg.malicious_count() == 0 ? "none" : std::string(to_string(cfg.attack)));
        row.push_back(std::to_string(cfg.num_clients));
        row.push_back(cfg.defense ? std::to_string(cfg.defense->level) : "none");
        row.push_back(fixed(r.final_metrics.safety_rate));
        row.push_back(fixed(r.final_metrics.helpfulness_rate));
        row.push_back(r.defended_metrics ? fixed(r.defended_metrics->safety_rate) : "");
        row.push_back(r.defended_metrics ? fixed(r.defended_metrics->helpfulness_rate) : "");
        row.push_back(config_hash(cfg));
        write_csv_row(s, row);
        table.push_back(row);
      }
      print_table(out, table);
      out << "wrote " << csv.string() << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace fedsnt
