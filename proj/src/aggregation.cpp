#include "fedsnt/aggregation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "fedsnt/error.hpp"
#include "fedsnt/seed.hpp"

namespace fedsnt {

using nlohmann::json;

namespace {

constexpr std::array kAllAggregators = {
    AggregatorKind::kFedAvg, AggregatorKind::kMedian,    AggregatorKind::kTrimmedMean,
    AggregatorKind::kKrum,   AggregatorKind::kDnC,       AggregatorKind::kFoolsGold,
    AggregatorKind::kResidual,
};

// Every rule works on updates ordered by client id so that results do not
// depend on input order and ties resolve toward the lowest id.
std::vector<const ClientUpdate*> canonical(std::span<const ClientUpdate> updates) {
  if (updates.empty()) fail(ErrorKind::kInvalidInput, "no updates to aggregate");
  std::vector<const ClientUpdate*> out;
  out.reserve(updates.size());
  for (const auto& u : updates) out.push_back(&u);
  std::sort(out.begin(), out.end(), [](const ClientUpdate* a, const ClientUpdate* b) {
    return a->client_id < b->client_id;
  });
  const std::size_t dim = out.front()->params.dim();
  if (dim == 0) fail(ErrorKind::kInvalidInput, "updates have zero dimension");
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i]->params.dim() != dim) {
      fail(ErrorKind::kInvalidInput,
           "dimension mismatch: client " + std::to_string(out[i]->client_id) +
               " has " + std::to_string(out[i]->params.dim()) + ", expected " +
               std::to_string(dim));
    }
    if (i > 0 && out[i]->client_id == out[i - 1]->client_id) {
      fail(ErrorKind::kInvalidInput,
           "duplicate client id " + std::to_string(out[i]->client_id));
    }
  }
  return out;
}

AggregationReport weighted_report(const std::vector<const ClientUpdate*>& ups,
                                  const std::vector<double>& weights,
                                  std::string rule) {
  const std::size_t dim = ups.front()->params.dim();
  std::vector<double> agg(dim, 0.0);
  AggregationReport r;
  for (std::size_t k = 0; k < ups.size(); ++k) {
    const auto v = ups[k]->params.values();
    for (std::size_t j = 0; j < dim; ++j) agg[j] += weights[k] * v[j];
    r.effective_weights[ups[k]->client_id] = weights[k];
    if (weights[k] == 0.0) r.excluded.insert(ups[k]->client_id);
  }
  r.aggregated = ParameterVector(std::move(agg));
  r.rule_name = std::move(rule);
  return r;
}

AggregationReport uniform_report(const std::vector<const ClientUpdate*>& ups,
                                 std::vector<double> aggregated, std::string rule) {
  AggregationReport r;
  const double w = 1.0 / static_cast<double>(ups.size());
  for (const auto* u : ups) r.effective_weights[u->client_id] = w;
  r.aggregated = ParameterVector(std::move(aggregated));
  r.rule_name = std::move(rule);
  return r;
}

std::vector<double> column(const std::vector<const ClientUpdate*>& ups, std::size_t j) {
  std::vector<double> c(ups.size());
  for (std::size_t k = 0; k < ups.size(); ++k) c[k] = ups[k]->params[j];
  return c;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::string_view to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::kFedAvg: return "fedavg";
    case AggregatorKind::kMedian: return "median";
    case AggregatorKind::kTrimmedMean: return "trimmedmean";
    case AggregatorKind::kKrum: return "krum";
    case AggregatorKind::kDnC: return "dnc";
    case AggregatorKind::kFoolsGold: return "foolsgold";
    case AggregatorKind::kResidual: return "residual";
  }
  return "fedavg";
}

std::span<const AggregatorKind> all_aggregators() { return kAllAggregators; }

std::string valid_aggregator_names() {
  std::string out;
  for (auto k : kAllAggregators) {
    if (!out.empty()) out += ", ";
    out += to_string(k);
  }
  return out;
}

AggregatorKind parse_aggregator(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto k : kAllAggregators) {
    if (lower == to_string(k)) return k;
  }
  fail(ErrorKind::kInvalidConfig, "unknown aggregator '" + std::string(name) +
                                      "'; valid rules: " + valid_aggregator_names());
}

int max_admissible_f(AggregatorKind kind, std::size_t participants,
                     double dnc_multiplier) {
  const int k = static_cast<int>(participants);
  switch (kind) {
    case AggregatorKind::kTrimmedMean: return std::max(0, (k - 1) / 2);
    case AggregatorKind::kKrum: return std::max(0, k - 3);
    case AggregatorKind::kDnC: {
      // need ceil(c*f) < k
      int f = 0;
      while (static_cast<int>(std::ceil(dnc_multiplier * (f + 1))) < k) ++f;
      return f;
    }
    default: return std::numeric_limits<int>::max();
  }
}

double median_of(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::kInvalidInput, "median of empty set");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

AggregationReport fedavg(std::span<const ClientUpdate> updates) {
  auto ups = canonical(updates);
  double total = 0.0;
  for (const auto* u : ups) {
    if (u->sample_count == 0) {
      fail(ErrorKind::kInvalidInput,
           "client " + std::to_string(u->client_id) + " reports zero samples");
    }
    total += static_cast<double>(u->sample_count);
  }
  std::vector<double> w(ups.size());
  for (std::size_t k = 0; k < ups.size(); ++k) {
    w[k] = static_cast<double>(ups[k]->sample_count) / total;
  }
  return weighted_report(ups, w, "fedavg");
}

AggregationReport coordinate_median(std::span<const ClientUpdate> updates) {
  auto ups = canonical(updates);
  const std::size_t dim = ups.front()->params.dim();
  std::vector<double> agg(dim);
  for (std::size_t j = 0; j < dim; ++j) agg[j] = median_of(column(ups, j));
  return uniform_report(ups, std::move(agg), "median");
}

AggregationReport trimmed_mean(std::span<const ClientUpdate> updates,
                               const RobustConfig& cfg) {
  auto ups = canonical(updates);
  const int k = static_cast<int>(ups.size());
  const int f = cfg.byzantine_count_f;
  if (f < 0 || k <= 2 * f) {
    fail(ErrorKind::kInvalidConfig, "trimmed mean needs K > 2f (K=" +
                                        std::to_string(k) + ", f=" +
                                        std::to_string(f) + ")");
  }
  const std::size_t dim = ups.front()->params.dim();
  std::vector<double> agg(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    auto c = column(ups, j);
    std::sort(c.begin(), c.end());
    double s = 0.0;
    for (int i = f; i < k - f; ++i) s += c[i];
    agg[j] = s / static_cast<double>(k - 2 * f);
  }
  return uniform_report(ups, std::move(agg), "trimmedmean");
}

AggregationReport krum(std::span<const ClientUpdate> updates, const RobustConfig& cfg) {
  auto ups = canonical(updates);
  const int k = static_cast<int>(ups.size());
  const int f = cfg.byzantine_count_f;
  if (f < 0 || k < f + 3) {
    fail(ErrorKind::kInvalidConfig, "krum needs K >= f + 3 (K=" + std::to_string(k) +
                                        ", f=" + std::to_string(f) + ")");
  }
  std::vector<double> dist(static_cast<std::size_t>(k * k), 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double d = squared_distance(ups[i]->params.values(), ups[j]->params.values());
      dist[i * k + j] = dist[j * k + i] = d;
    }
  }
  const int nearest = k - f - 2;
  std::vector<double> scores(k);
  std::vector<double> row;
  for (int i = 0; i < k; ++i) {
    row.clear();
    for (int j = 0; j < k; ++j) {
      if (j != i) row.push_back(dist[i * k + j]);
    }
    std::partial_sort(row.begin(), row.begin() + nearest, row.end());
    scores[i] = std::accumulate(row.begin(), row.begin() + nearest, 0.0);
  }
  int best = 0;
  for (int i = 1; i < k; ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  std::vector<double> w(k, 0.0);
  w[best] = 1.0;
  auto r = weighted_report(ups, w, "krum");
  r.aggregated = ups[best]->params;
  for (int i = 0; i < k; ++i) r.raw_scores[ups[i]->client_id] = scores[i];
  return r;
}

std::vector<double> top_right_singular_vector(std::span<const double> matrix,
                                              std::size_t rows, std::size_t cols,
                                              const PowerIterationOptions& options) {
  if (matrix.size() != rows * cols) {
    fail(ErrorKind::kInvalidInput, "matrix size does not match its shape");
  }
  std::vector<double> v(cols, 0.0);
  if (rows == 0 || cols == 0) return v;

  // Gram matrix G = C C^T (rows x rows).
  std::vector<double> gram(rows * rows, 0.0);
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = a; b < rows; ++b) {
      const double g = dot(matrix.subspan(a * cols, cols), matrix.subspan(b * cols, cols));
      gram[a * rows + b] = gram[b * rows + a] = g;
    }
  }
  auto frob = [](const std::vector<double>& m) {
    return std::sqrt(std::inner_product(m.begin(), m.end(), m.begin(), 0.0));
  };
  const double gnorm = frob(gram);
  if (gnorm == 0.0) return v;

  // Raise G to a large power by repeated squaring (normalized each time);
  // the result approaches the projector onto the top eigenvector.
  std::vector<double> power = gram, next(rows * rows);
  for (auto& x : power) x /= gnorm;
  for (int s = 0; s < 64; ++s) {
    for (std::size_t a = 0; a < rows; ++a) {
      for (std::size_t b = 0; b < rows; ++b) {
        double acc = 0.0;
        for (std::size_t c = 0; c < rows; ++c) acc += power[a * rows + c] * power[c * rows + b];
        next[a * rows + b] = acc;
      }
    }
    const double n = frob(next);
    if (n == 0.0 || !std::isfinite(n)) break;
    for (auto& x : next) x /= n;
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) change += std::abs(next[i] - power[i]);
    power.swap(next);
    if (change < options.tolerance) break;
  }

  // Seeded start, projected through the accumulated power.
  Rng rng = make_rng(options.seed, "power-iteration");
  std::normal_distribution<double> normal;
  std::vector<double> u(rows), gu(rows);
  for (auto& x : u) x = normal(rng);
  auto apply = [&](const std::vector<double>& m, const std::vector<double>& in,
                   std::vector<double>& out) {
    for (std::size_t a = 0; a < rows; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < rows; ++b) acc += m[a * rows + b] * in[b];
      out[a] = acc;
    }
  };
  apply(power, u, gu);
  double n = norm(gu);
  if (n < 1e-12) {
    // Start vector orthogonal to the dominant space; fall back to the
    // largest column of the converged power.
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t b = 0; b < rows; ++b) {
      double s = 0.0;
      for (std::size_t a = 0; a < rows; ++a) s += power[a * rows + b] * power[a * rows + b];
      if (s > best_norm) {
        best_norm = s;
        best = b;
      }
    }
    for (std::size_t a = 0; a < rows; ++a) gu[a] = power[a * rows + best];
    n = norm(gu);
  }
  for (std::size_t a = 0; a < rows; ++a) u[a] = gu[a] / n;

  // Plain power-iteration polish on G.
  for (int it = 0; it < options.max_iterations; ++it) {
    apply(gram, u, gu);
    n = norm(gu);
    if (n == 0.0) break;
    double change = 0.0;
    for (std::size_t a = 0; a < rows; ++a) {
      const double nu = gu[a] / n;
      change += (nu - u[a]) * (nu - u[a]);
      u[a] = nu;
    }
    if (std::sqrt(change) < options.tolerance) break;
  }

  // v = C^T u / |C^T u|
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t c = 0; c < cols; ++c) v[c] += matrix[a * cols + c] * u[a];
  }
  n = norm(v);
  if (n == 0.0) return std::vector<double>(cols, 0.0);
  for (auto& x : v) x /= n;
  return v;
}

AggregationReport dnc(std::span<const ClientUpdate> updates, const RobustConfig& cfg) {
  auto ups = canonical(updates);
  const std::size_t k = ups.size();
  const std::size_t dim = ups.front()->params.dim();
  const int f = cfg.byzantine_count_f;
  if (f < 0 || !(cfg.dnc_filter_multiplier_c > 0.0) || cfg.dnc_iterations <= 0 ||
      cfg.dnc_subsample_dims == 0) {
    fail(ErrorKind::kInvalidConfig, "dnc: f >= 0, c > 0, iterations > 0 and "
                                    "subsample_dims > 0 are required");
  }
  const auto removed = static_cast<std::size_t>(std::ceil(cfg.dnc_filter_multiplier_c * f));
  if (removed >= k) {
    fail(ErrorKind::kInvalidConfig, "dnc needs K > ceil(c*f) (K=" + std::to_string(k) +
                                        ", ceil(c*f)=" + std::to_string(removed) + ")");
  }
  const std::size_t b = std::min(cfg.dnc_subsample_dims, dim);

  std::set<ClientId> excluded;
  std::map<ClientId, double> raw;
  for (const auto* u : ups) raw[u->client_id] = 0.0;

  if (removed > 0) {
    std::vector<std::size_t> all(dim);
    std::vector<double> centered(k * b);
    for (int it = 0; it < cfg.dnc_iterations; ++it) {
      std::iota(all.begin(), all.end(), 0);
      Rng rng = make_rng(cfg.seed, "dnc-subsample", static_cast<std::uint64_t>(it));
      for (std::size_t i = 0; i < b; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, dim - 1);
        std::swap(all[i], all[pick(rng)]);
      }
      std::vector<std::size_t> idx(all.begin(), all.begin() + static_cast<long>(b));
      std::sort(idx.begin(), idx.end());

      for (std::size_t c = 0; c < b; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < k; ++r) mean += ups[r]->params[idx[c]];
        mean /= static_cast<double>(k);
        for (std::size_t r = 0; r < k; ++r) centered[r * b + c] = ups[r]->params[idx[c]] - mean;
      }
      PowerIterationOptions opts;
      opts.seed = derive_seed(cfg.seed, "dnc-power", static_cast<std::uint64_t>(it));
      const auto v = top_right_singular_vector(centered, k, b, opts);

      std::vector<std::pair<double, std::size_t>> scored(k);
      for (std::size_t r = 0; r < k; ++r) {
        const double proj = dot(std::span<const double>(centered).subspan(r * b, b), v);
        scored[r] = {proj * proj, r};
        raw[ups[r]->client_id] = std::max(raw[ups[r]->client_id], proj * proj);
      }
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& x, const auto& y) { return x.first > y.first; });
      for (std::size_t i = 0; i < removed; ++i) excluded.insert(ups[scored[i].second]->client_id);
    }
  }

  std::vector<double> w(k, 0.0);
  std::size_t survivors = 0;
  for (std::size_t r = 0; r < k; ++r) {
    if (!excluded.count(ups[r]->client_id)) ++survivors;
  }
  if (survivors == 0) {
    fail(ErrorKind::kAggregationDegenerate, "dnc excluded every client");
  }
  for (std::size_t r = 0; r < k; ++r) {
    if (!excluded.count(ups[r]->client_id)) w[r] = 1.0 / static_cast<double>(survivors);
  }
  auto rep = weighted_report(ups, w, "dnc");
  rep.raw_scores = std::move(raw);
  return rep;
}

AggregationReport foolsgold(const UpdateHistory& history,
                            std::span<const ClientUpdate> updates,
                            const RobustConfig& cfg) {
  auto ups = canonical(updates);
  const std::size_t k = ups.size();
  const std::size_t dim = ups.front()->params.dim();
  std::vector<const std::vector<double>*> hist(k);
  std::vector<double> hnorm(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto it = history.find(ups[i]->client_id);
    if (it == history.end()) {
      fail(ErrorKind::kInvalidInput,
           "no history for client " + std::to_string(ups[i]->client_id));
    }
    if (it->second.size() != dim) {
      fail(ErrorKind::kInvalidInput,
           "history dimension mismatch for client " + std::to_string(ups[i]->client_id));
    }
    hist[i] = &it->second;
    hnorm[i] = norm(it->second);
  }

  constexpr double kParallelTol = 1e-12;
  // Pairwise cosine similarity; zero-norm histories are treated as
  // dissimilar to everyone (cold start).
  std::vector<double> cs(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double c = 0.0;
      if (hnorm[i] > 0.0 && hnorm[j] > 0.0) {
        c = dot(*hist[i], *hist[j]) / (hnorm[i] * hnorm[j]);
        c = std::clamp(c, -1.0, 1.0);
        // Parallel histories must compare as exactly +-1 regardless of rounding.
        if (std::abs(c) > 1.0 - kParallelTol) c = std::copysign(1.0, c);
      }
      cs[i * k + j] = cs[j * k + i] = c;
    }
  }
  auto row_max = [&](std::size_t i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) m = std::max(m, cs[i * k + j]);
    }
    return k > 1 ? m : 0.0;
  };
  std::vector<double> max_cs(k);
  for (std::size_t i = 0; i < k; ++i) max_cs[i] = row_max(i);

  // Pardoning: a client less similar to the crowd than its partner has its
  // similarity to that partner scaled down by the ratio of their maxima.
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if (max_cs[j] > max_cs[i] && max_cs[j] > 0.0) {
        cs[i * k + j] *= max_cs[i] / max_cs[j];
      }
    }
  }

  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = std::clamp(1.0 - row_max(i), 0.0, 1.0);
  const double wmax = *std::max_element(w.begin(), w.end());
  if (wmax <= 0.0) {
    fail(ErrorKind::kAggregationDegenerate, "foolsgold assigned zero weight to every client");
  }
  for (auto& x : w) {
    x /= wmax;
    if (x >= 1.0) {
      x = 1.0;
    } else if (x > 0.0) {
      x = cfg.foolsgold_confidence_kappa * (std::log(x / (1.0 - x)) + 0.5);
      x = std::clamp(x, 0.0, 1.0);
    } else {
      x = 0.0;
    }
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) {
    fail(ErrorKind::kAggregationDegenerate, "foolsgold assigned zero weight to every client");
  }
  std::vector<double> normalized(k);
  for (std::size_t i = 0; i < k; ++i) normalized[i] = w[i] / total;
  auto rep = weighted_report(ups, normalized, "foolsgold");
  for (std::size_t i = 0; i < k; ++i) rep.raw_scores[ups[i]->client_id] = w[i];
  return rep;
}

LineFit repeated_median_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    fail(ErrorKind::kInvalidInput, "repeated median fit needs equal, nonempty inputs");
  }
  const std::size_t n = x.size();
  std::vector<double> inner, slopes;
  inner.reserve(n);
  slopes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    inner.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && x[j] != x[i]) inner.push_back((y[j] - y[i]) / (x[j] - x[i]));
    }
    if (!inner.empty()) slopes.push_back(median_of(inner));
  }
  LineFit fit;
  fit.slope = slopes.empty() ? 0.0 : median_of(slopes);
  std::vector<double> intercepts(n);
  for (std::size_t i = 0; i < n; ++i) intercepts[i] = y[i] - fit.slope * x[i];
  fit.intercept = median_of(intercepts);
  return fit;
}

AggregationReport residual_reweight(std::span<const ClientUpdate> updates,
                                    const RobustConfig& cfg) {
  auto ups = canonical(updates);
  const std::size_t k = ups.size();
  if (k < 3) fail(ErrorKind::kInvalidInput, "residual reweighting needs at least 3 clients");
  if (!(cfg.residual_lambda > 0.0) || !(cfg.residual_mad_scale > 0.0)) {
    fail(ErrorKind::kInvalidConfig, "residual: lambda and MAD scale must be > 0");
  }
  const std::size_t dim = ups.front()->params.dim();
  // sqrt(pi/2): mean absolute deviation to sigma under normality.
  constexpr double kMeanAbsScale = 1.2533141373155001;
  // A MAD this small next to the largest deviation is rounding noise around 0.
  constexpr double kNegligibleMad = 1e-9;

  std::vector<double> confidence_sum(k, 0.0);
  std::vector<std::size_t> order(k);
  std::vector<double> rank(k), values(k), resid(k), absdev(k);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < k; ++i) values[i] = ups[i]->params[j];
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    for (std::size_t r = 0; r < k; ++r) rank[order[r]] = static_cast<double>(r);

    const LineFit fit = repeated_median_fit(rank, values);
    for (std::size_t i = 0; i < k; ++i) resid[i] = values[i] - (fit.intercept + fit.slope * rank[i]);
    const double center = median_of(resid);
    double max_dev = 0.0, mean_dev = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      absdev[i] = std::abs(resid[i] - center);
      max_dev = std::max(max_dev, absdev[i]);
      mean_dev += absdev[i];
    }
    if (max_dev == 0.0) {
      for (auto& c : confidence_sum) c += 1.0;
      continue;
    }
    double scale = cfg.residual_mad_scale * median_of(absdev);
    if (scale <= kNegligibleMad * max_dev) {
      // More than half the residuals coincide (up to rounding); fall back to
      // the mean absolute deviation so the remaining outliers are still scored.
      scale = kMeanAbsScale * mean_dev / static_cast<double>(k);
    }
    for (std::size_t i = 0; i < k; ++i) {
      const double standardized = std::abs(resid[i]) / scale;
      confidence_sum[i] += 1.0 - std::min(1.0, standardized / cfg.residual_lambda);
    }
  }

  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = confidence_sum[i] / static_cast<double>(dim);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) {
    fail(ErrorKind::kAggregationDegenerate, "residual reweighting gave every client zero weight");
  }
  std::vector<double> normalized(k);
  for (std::size_t i = 0; i < k; ++i) normalized[i] = w[i] / total;
  auto rep = weighted_report(ups, normalized, "residual");
  for (std::size_t i = 0; i < k; ++i) rep.raw_scores[ups[i]->client_id] = w[i];
  return rep;
}

AggregationReport aggregate(AggregatorKind kind, std::span<const ClientUpdate> updates,
                            const RobustConfig& cfg, const UpdateHistory& history) {
  switch (kind) {
    case AggregatorKind::kFedAvg: return fedavg(updates);
    case AggregatorKind::kMedian: return coordinate_median(updates);
    case AggregatorKind::kTrimmedMean: return trimmed_mean(updates, cfg);
    case AggregatorKind::kKrum: return krum(updates, cfg);
    case AggregatorKind::kDnC: return dnc(updates, cfg);
    case AggregatorKind::kFoolsGold: return foolsgold(history, updates, cfg);
    case AggregatorKind::kResidual: return residual_reweight(updates, cfg);
  }
  fail(ErrorKind::kInvalidConfig, "unhandled aggregator");
}

json report_to_json(const AggregationReport& report, bool include_params) {
  json j;
  j["rule"] = report.rule_name;
  json weights = json::array();
  for (const auto& [id, w] : report.effective_weights) {
    json e{{"client_id", id}, {"weight", w}, {"excluded", report.excluded.count(id) > 0}};
    if (auto it = report.raw_scores.find(id); it != report.raw_scores.end()) {
      e["raw_score"] = it->second;
    }
    weights.push_back(std::move(e));
  }
  j["weights"] = std::move(weights);
  j["excluded"] = report.excluded;
  if (include_params) j["aggregated"] = report.aggregated.vec();
  return j;
}

AggregationReport report_from_json(const json& j) {
  AggregationReport r;
  r.rule_name = j.at("rule").get<std::string>();
  for (const auto& e : j.at("weights")) {
    const auto id = e.at("client_id").get<ClientId>();
    r.effective_weights[id] = e.at("weight").get<double>();
    if (e.value("excluded", false)) r.excluded.insert(id);
    if (e.contains("raw_score")) r.raw_scores[id] = e.at("raw_score").get<double>();
  }
  if (j.contains("aggregated")) {
    r.aggregated = ParameterVector(j.at("aggregated").get<std::vector<double>>());
  }
  return r;
}

}  // namespace fedsnt
