#include "drau/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "drau/errors.hpp"

namespace drau {

Stat summarize(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double parameter_gap(const std::vector<std::size_t>& counts) {
  if (counts.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  return *hi == 0 ? 0.0 : static_cast<double>(*hi - *lo) / static_cast<double>(*hi);
}

namespace {

std::string cell(const Stat& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f±%.4f", s.mean, s.std);
  return buf;
}

AblationRun run_one(const AblationConfig& cfg, const LoadedDataset& data, Variant v, std::uint64_t seed) {
  AblationRun run;
  run.variant = v;
  run.seed = seed;
  try {
    TrainConfig tc = cfg.train;
    tc.variant = v;
    tc.seed = seed;
    tc.eval_interval = 0;
    const auto result = train(cfg.model, data, tc);
    const auto params = restore_model(result.final);
    run.parameters = params.trainable_count();
    run.report = evaluate(params, data.data.val, data.data.vocab, data.regions, data.region_features);
    run.ok = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

}  // namespace

AblationTable run_ablation(const AblationConfig& cfg, const LoadedDataset& data) {
  if (cfg.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (cfg.variants.empty()) throw ConfigError("ablation needs at least one variant");
  cfg.train.validate();

  std::vector<std::pair<Variant, std::uint64_t>> jobs;
  for (auto v : cfg.variants)
    for (auto s : cfg.seeds) jobs.emplace_back(v, s);

  std::vector<AblationRun> runs(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      runs[i] = run_one(cfg, data, jobs[i].first, jobs[i].second);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.jobs, 1, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  AblationTable table;
  table.runs = runs;
  for (auto v : cfg.variants) {
    AblationRow row;
    row.variant = v;
    auto mc = model_config_for(cfg.model, data, cfg.train);
    mc.variant = v;
    row.parameters = ModelParams::create(mc).trainable_count();
    std::vector<double> all, yn, num, other, cr;
    for (const auto& r : runs) {
      if (r.variant != v) continue;
      if (!r.ok) {
        ++row.failures;
        continue;
      }
      all.push_back(r.report.overall);
      yn.push_back(r.report.yesno);
      num.push_back(r.report.number);
      other.push_back(r.report.other);
      cr.push_back(r.report.count_relational);
    }
    row.all = summarize(all);
    row.yesno = summarize(yn);
    row.number = summarize(num);
    row.other = summarize(other);
    row.count_relational = summarize(cr);
    table.rows.push_back(row);
  }

  std::vector<std::size_t> simple, dual;
  for (const auto& row : table.rows) (is_simple_net(row.variant) ? simple : dual).push_back(row.parameters);
  table.max_parameter_gap = std::max(parameter_gap(simple), parameter_gap(dual));

  auto subset = [&](Variant v) {
    std::vector<double> out;
    for (const auto& r : runs)
      if (r.variant == v && r.ok) out.push_back(r.report.count_relational);
    return out;
  };
  auto has = [&](Variant v) { return std::find(cfg.variants.begin(), cfg.variants.end(), v) != cfg.variants.end(); };
  const std::pair<Variant, Variant> pairs[] = {
      {Variant::simple_rvau, Variant::simple_conv},
      {Variant::dca_rvau, Variant::dca},
      {Variant::drau, Variant::dca_rtau},
  };
  for (const auto& [rec, conv] : pairs) {
    if (!has(rec) || !has(conv)) continue;
    DirectionalGap g{rec, conv, median(subset(rec)), median(subset(conv)), false};
    g.recurrent_ahead = g.recurrent_median >= g.convolutional_median;
    table.gaps.push_back(g);
  }
  return table;
}

std::string AblationTable::to_tsv() const {
  std::ostringstream out;
  out << "variant\tparams\tAll\tY/N\tNum\tOther\tCount+Rel\truns\tfailures\n";
  for (const auto& r : rows) {
    out << variant_name(r.variant) << '\t' << r.parameters << '\t' << cell(r.all) << '\t' << cell(r.yesno) << '\t'
        << cell(r.number) << '\t' << cell(r.other) << '\t' << cell(r.count_relational) << '\t' << r.all.n << '\t'
        << r.failures << '\n';
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "# max parameter gap %.4f (%s)\n", max_parameter_gap,
                counts_matched() ? "within 2%" : "NOT within 2%");
  out << buf;
  for (const auto& g : gaps) {
    std::snprintf(buf, sizeof buf, "# count+relational median: %s %.4f vs %s %.4f -> %s\n",
                  variant_name(g.recurrent).c_str(), g.recurrent_median, variant_name(g.convolutional).c_str(),
                  g.convolutional_median, g.recurrent_ahead ? "recurrent >= conv" : "recurrent < conv");
    out << buf;
  }
  for (const auto& r : runs) {
    if (!r.ok) out << "# failed " << variant_name(r.variant) << " seed " << r.seed << ": " << r.error << '\n';
  }
  return out.str();
}

}  // namespace drau
