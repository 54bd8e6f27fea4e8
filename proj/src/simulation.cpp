#include "fedsnt/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "fedsnt/dataset_io.hpp"
#include "fedsnt/defense.hpp"
#include "fedsnt/error.hpp"
#include "fedsnt/seed.hpp"

namespace fedsnt {

using nlohmann::json;

double cosine_lr(double lr0, int round, int total_rounds) {
  if (total_rounds <= 0) return lr0;
  return 0.5 * lr0 * (1.0 + std::cos(M_PI * static_cast<double>(round) / total_rounds));
}

namespace {

std::vector<DataSample> generated_dataset(const SurrogateTaskSpec& task, std::size_t n,
                                          bool unaligned, ClientId id, Rng& rng) {
  std::vector<DataSample> data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DataSample s;
    s.kind = unaligned ? DataKind::kUnaligned : (i % 2 == 0 ? DataKind::kAligned : DataKind::kNormal);
    s.features = sample_features(task, s.kind, rng);
    s.label = expected_label(s.kind);
    s.instruction = "client " + std::to_string(id) + " " + std::string(to_string(s.kind)) +
                    " instruction " + std::to_string(i);
    s.response = s.kind == DataKind::kAligned ? "I cannot help with that." : "Here is an answer.";
    data.push_back(std::move(s));
  }
  return data;
}

json snapshot_json(const EvalSnapshot& s) {
  return {{"round", s.round},
          {"safety_rate", s.safety_rate},
          {"helpfulness_rate", s.helpfulness_rate},
          {"probe_count", s.probe_count}};
}

EvalSnapshot snapshot_from_json(const json& j) {
  EvalSnapshot s;
  s.round = j.at("round").get<int>();
  s.safety_rate = j.at("safety_rate").get<double>();
  s.helpfulness_rate = j.at("helpfulness_rate").get<double>();
  s.probe_count = j.at("probe_count").get<std::size_t>();
  return s;
}

}  // namespace

json record_to_json(const RoundRecord& r, bool include_updates) {
  json j;
  j["round"] = r.round;
  j["sampled"] = r.sampled;
  j["lr"] = r.lr;
  j["byzantine_f"] = r.byzantine_f;
  j["report"] = report_to_json(r.report, false);
  j["metrics"] = snapshot_json(r.metrics_after);
  j["global_after"] = r.global_after.vec();
  if (include_updates) {
    j["global_before"] = r.global_before.vec();
    json ups = json::array();
    for (const auto& u : r.updates) {
      ups.push_back({{"client_id", u.client_id},
                     {"sample_count", u.sample_count},
                     {"params", u.params.vec()}});
    }
    j["updates"] = std::move(ups);
  }
  return j;
}

RoundRecord record_from_json(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.sampled = j.at("sampled").get<std::vector<ClientId>>();
  r.lr = j.at("lr").get<double>();
  r.byzantine_f = j.at("byzantine_f").get<int>();
  r.report = report_from_json(j.at("report"));
  r.metrics_after = snapshot_from_json(j.at("metrics"));
  r.global_after = ParameterVector(j.at("global_after").get<std::vector<double>>());
  r.report.aggregated = r.global_after;
  if (j.contains("global_before")) {
    r.global_before = ParameterVector(j.at("global_before").get<std::vector<double>>());
  }
  if (j.contains("updates")) {
    for (const auto& u : j.at("updates")) {
      ClientUpdate cu;
      cu.client_id = u.at("client_id").get<ClientId>();
      cu.round = r.round;
      cu.sample_count = u.at("sample_count").get<std::size_t>();
      cu.params = ParameterVector(u.at("params").get<std::vector<double>>());
      r.updates.push_back(std::move(cu));
    }
  }
  return r;
}

std::vector<ClientSpec> build_roster(const ScenarioConfig& cfg, const SurrogateTaskSpec& task) {
  cfg.validate();
  const int k = cfg.num_clients;
  const int benign = cfg.benign_count();
  const bool data_attack = cfg.attack == AttackMode::kUnaligned;
  std::vector<ClientSpec> roster(static_cast<std::size_t>(k));
  std::vector<DataSample> sybil_data;
  for (int id = 0; id < k; ++id) {
    ClientSpec& c = roster[static_cast<std::size_t>(id)];
    c.client_id = id;
    c.is_malicious = id >= benign;
    Rng rng = make_rng(cfg.seed, "roster", static_cast<std::uint64_t>(id));
    if (!cfg.client_files.empty()) {
      c.dataset = read_dataset(cfg.client_files[static_cast<std::size_t>(id)]);
      for (auto& s : c.dataset) {
        if (!s.features) s.features = sample_features(task, s.kind, rng);
        if (!s.label) s.label = expected_label(s.kind);
        try {
          validate_sample(s, task.dim);
        } catch (const Error& e) {
          fail(ErrorKind::kDataLoad, cfg.client_files[static_cast<std::size_t>(id)] + ": " + e.what());
        }
      }
    } else if (c.is_malicious && cfg.sybil && !sybil_data.empty()) {
      c.dataset = sybil_data;
    } else {
      c.dataset = generated_dataset(task, cfg.samples_per_client, c.is_malicious && data_attack,
                                    id, rng);
      if (c.is_malicious && cfg.sybil) sybil_data = c.dataset;
    }
    c.sample_count = c.dataset.size();
    if (c.sample_count == 0) {
      fail(ErrorKind::kDataLoad, "client " + std::to_string(id) + " has an empty dataset");
    }
    try {
      validate_client(c, data_attack);
    } catch (const Error& e) {
      fail(ErrorKind::kDataLoad, e.what());
    }
  }
  return roster;
}

Simulation::Simulation(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  task_ = cfg_.make_task();
  roster_ = build_roster(cfg_, task_);
  probes_ = make_probes(task_, cfg_.eval.probe_count, cfg_.seed);
  global_ = ParameterVector::zeros(task_.dim + 1);
}

EvalSnapshot Simulation::initial_metrics() const {
  return evaluate(ParameterVector::zeros(task_.dim + 1), task_, probes_, 0);
}

std::set<ClientId> Simulation::malicious_ids() const {
  std::set<ClientId> out;
  for (const auto& c : roster_) {
    if (c.is_malicious) out.insert(c.client_id);
  }
  return out;
}

ClientUpdate Simulation::train_client(const ClientSpec& client, int round, double lr) const {
  // Sybils share the stream of the first malicious client.
  ClientId stream = client.client_id;
  if (client.is_malicious && cfg_.sybil) stream = static_cast<ClientId>(cfg_.benign_count());
  Rng rng = make_rng(cfg_.seed, "train",
                     (static_cast<std::uint64_t>(round) << 32) | static_cast<std::uint32_t>(stream));
  TrainerConfig tc = cfg_.trainer;
  tc.lr = lr;
  ClientUpdate u = local_train(global_, client.dataset, tc, rng, client.client_id, round);
  if (client.is_malicious && cfg_.attack == AttackMode::kSignFlip) {
    std::vector<double> flipped(global_.dim());
    for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] = 2.0 * global_[i] - u.params[i];
    u.params = ParameterVector(std::move(flipped));
  }
  return u;
}

const RoundRecord& Simulation::run_round() {
  if (finished()) fail(ErrorKind::kInvalidInput, "simulation already finished");
  const int t = round_;
  const int k = cfg_.num_clients;
  const int m = cfg_.clients_per_round;

  Rng sample_rng = make_rng(cfg_.seed, "sample", static_cast<std::uint64_t>(t));
  std::vector<ClientId> ids(static_cast<std::size_t>(k));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<int> pick(i, k - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(sample_rng))]);
  }
  std::vector<ClientId> sampled(ids.begin(), ids.begin() + m);
  std::sort(sampled.begin(), sampled.end());

  const double lr = cfg_.cosine_schedule ? cosine_lr(cfg_.trainer.lr, t, cfg_.rounds) : cfg_.trainer.lr;
  std::vector<ClientUpdate> updates(sampled.size());
  const int workers = std::min<int>(cfg_.threads, m);
  if (workers <= 1) {
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      updates[i] = train_client(roster_[static_cast<std::size_t>(sampled[i])], t, lr);
    }
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < sampled.size(); i += workers) {
            updates[i] = train_client(roster_[static_cast<std::size_t>(sampled[i])], t, lr);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (const auto& u : updates) {
    auto& h = history_[u.client_id];
    if (h.empty()) h.assign(global_.dim(), 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += u.params[i] - global_[i];
  }

  RobustConfig robust = cfg_.robust;
  const int default_f = static_cast<int>(std::ceil(m * cfg_.malicious_ratio - 1e-12));
  robust.byzantine_count_f = cfg_.byzantine_f.value_or(
      std::min(default_f,
               max_admissible_f(cfg_.aggregator, updates.size(), robust.dnc_filter_multiplier_c)));
  robust.seed = derive_seed(cfg_.seed, "aggregator", static_cast<std::uint64_t>(t));

  RoundRecord rec;
  rec.round = t;
  rec.sampled = sampled;
  rec.lr = lr;
  rec.byzantine_f = robust.byzantine_count_f;
  try {
    rec.report = aggregate(cfg_.aggregator, updates, robust, history_);
  } catch (const Error& e) {
    fail(e.kind(), "round " + std::to_string(t) + ": " + e.what());
  }
  rec.global_before = global_;
  global_ = rec.report.aggregated;
  rec.global_after = global_;
  rec.updates = std::move(updates);
  rec.metrics_after = evaluate(global_, task_, probes_, t + 1);
  ++round_;
  if (keep_records_) {
    records_.push_back(std::move(rec));
    return records_.back();
  }
  last_ = std::move(rec);
  return last_;
}

void Simulation::run(const std::function<void(const RoundRecord&)>& on_round) {
  while (!finished()) {
    const auto& r = run_round();
    if (on_round) on_round(r);
  }
}

SimulationResult run_simulation(const ScenarioConfig& cfg,
                                const std::function<void(const RoundRecord&)>& on_round,
                                bool keep_records) {
  Simulation sim(cfg);
  sim.keep_records(keep_records);
  SimulationResult out;
  out.initial = sim.initial_metrics();
  sim.run(on_round);
  out.records = sim.records();
  out.final_model = sim.global();
  out.final_metrics = evaluate(out.final_model, sim.task(), sim.probes(), sim.round());
  out.malicious = sim.malicious_ids();
  if (cfg.defense) {
    out.defended_model = apply(out.final_model, *cfg.defense, sim.task(),
                               derive_seed(cfg.seed, "defense"));
    out.defended_metrics = evaluate(*out.defended_model, sim.task(), sim.probes(), sim.round());
  }
  return out;
}

}  // namespace fedsnt
