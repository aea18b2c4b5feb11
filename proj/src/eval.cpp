#include "edsep/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "edsep/error.hpp"

namespace edsep {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw InvalidArgument("si_sdr: length mismatch");
  double ref_energy = 0.0;
  double cross = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    cross += estimate[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw InvalidArgument("si_sdr: zero reference");
  const double alpha = cross / ref_energy;
  double target = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = s - estimate[i];
    target += s * s;
    residual += e * e;
  }
  if (!(residual > 0.0)) return kSiSdrCapDb;
  if (!(target > 0.0)) return -kSiSdrCapDb;
  const double db = 10.0 * std::log10(target / residual);
  return std::clamp(db, -kSiSdrCapDb, kSiSdrCapDb);
}

PitResult pit_eval(const StackedSignal& estimates, const StackedSignal& references) {
  if (!estimates.same_shape(references)) throw InvalidArgument("pit_eval: shape mismatch");
  const std::size_t k = references.num_sources();
  if (k > 6) throw InvalidArgument("pit_eval: K must be <= 6");

  // Sorted sums make the score independent of how either side is labeled.
  std::vector<double> table(k * k);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t e = 0; e < k; ++e) {
      table[r * k + e] = si_sdr(estimates.row(e), references.row(r));
    }
  }
  PitResult best;
  bool have = false;
  for (const Permutation& p : all_permutations(k)) {
    std::array<double, 6> picked{};
    for (std::size_t r = 0; r < k; ++r) picked[r] = table[r * k + static_cast<std::size_t>(p[r])];
    std::sort(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(k));
    double sum = 0.0;
    for (std::size_t r = 0; r < k; ++r) sum += picked[r];
    const double mean = sum / static_cast<double>(k);
    if (!have || mean > best.mean_db) {
      have = true;
      best.perm = p;
      best.mean_db = mean;
    }
  }
  best.per_source_db.resize(k);
  for (std::size_t r = 0; r < k; ++r) {
    best.per_source_db[r] = table[r * k + static_cast<std::size_t>(best.perm[r])];
  }
  return best;
}

double mixture_baseline_db(const StackedSignal& references, std::span<const double> y) {
  if (y.size() != references.num_samples()) throw InvalidArgument("baseline: length mismatch");
  std::vector<double> values;
  for (std::size_t r = 0; r < references.num_sources(); ++r) {
    values.push_back(si_sdr(y, references.row(r)));
  }
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double si_sdr_improvement(const StackedSignal& estimates, const StackedSignal& references,
                          std::span<const double> y) {
  return pit_eval(estimates, references).mean_db - mixture_baseline_db(references, y);
}

InstanceReport evaluate_instance(std::size_t id, const StackedSignal& estimates,
                                 const StackedSignal& references, std::span<const double> y) {
  InstanceReport r;
  r.id = id;
  r.pit = pit_eval(estimates, references);
  r.baseline_db = mixture_baseline_db(references, y);
  r.improvement_db = r.pit.mean_db - r.baseline_db;
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalReport summarize(std::vector<InstanceReport> instances) {
  EvalReport rep;
  rep.instances = std::move(instances);
  std::vector<double> sdr;
  std::vector<double> imp;
  for (const InstanceReport& r : rep.instances) {
    sdr.push_back(r.pit.mean_db);
    imp.push_back(r.improvement_db);
  }
  if (!sdr.empty()) {
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < sdr.size(); ++i) {
      a += sdr[i];
      b += imp[i];
    }
    rep.mean_si_sdr = a / static_cast<double>(sdr.size());
    rep.mean_improvement = b / static_cast<double>(imp.size());
  }
  rep.median_si_sdr = median(sdr);
  rep.median_improvement = median(imp);
  return rep;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["instances"] = nlohmann::json::array();
  for (const InstanceReport& r : report.instances) {
    const std::vector<int>& perm = r.pit.perm.mapping();
    nlohmann::json e = {{"id", r.id},
                        {"permutation", perm},
                        {"si_sdr_db", r.pit.per_source_db},
                        {"mean_si_sdr_db", r.pit.mean_db},
                        {"baseline_db", r.baseline_db},
                        {"improvement_db", r.improvement_db},
                        {"pesq", nullptr},
                        {"estoi", nullptr}};
    if (r.pesq) e["pesq"] = *r.pesq;
    if (r.estoi) e["estoi"] = *r.estoi;
    j["instances"].push_back(e);
  }
  j["aggregate"] = {{"count", report.instances.size()},
                    {"mean_si_sdr_db", report.mean_si_sdr},
                    {"median_si_sdr_db", report.median_si_sdr},
                    {"mean_improvement_db", report.mean_improvement},
                    {"median_improvement_db", report.median_improvement}};
  return j.dump(2);
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%8s  %10s  %10s  %10s  %s\n", "id", "si-sdr", "baseline",
                "improve", "perm");
  os << line;
  for (const InstanceReport& r : report.instances) {
    std::string perm;
    for (int v : r.pit.perm.mapping()) perm += std::to_string(v);
    std::snprintf(line, sizeof line, "%8zu  %10.3f  %10.3f  %10.3f  %s\n", r.id, r.pit.mean_db,
                  r.baseline_db, r.improvement_db, perm.c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%8s  %10.3f  %10s  %10.3f\n", "mean", report.mean_si_sdr, "",
                report.mean_improvement);
  os << line;
  std::snprintf(line, sizeof line, "%8s  %10.3f  %10s  %10.3f\n", "median", report.median_si_sdr,
                "", report.median_improvement);
  os << line;
  return os.str();
}

}  // namespace edsep
