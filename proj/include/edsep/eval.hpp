#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edsep/mixalg.hpp"

namespace edsep {

inline constexpr double kSiSdrCapDb = 60.0;

// Scale-invariant SDR in dB, clamped to [-60, 60].
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

struct PitResult {
  Permutation perm = Permutation::identity(1);  // estimate row perm[k] matches reference k
  std::vector<double> per_source_db;
  double mean_db = 0.0;
};

// Exhaustive search over assignments; ties keep the lexicographically
// smallest permutation.
PitResult pit_eval(const StackedSignal& estimates, const StackedSignal& references);

// Mean SI-SDR with y used as every source estimate.
double mixture_baseline_db(const StackedSignal& references, std::span<const double> y);

double si_sdr_improvement(const StackedSignal& estimates, const StackedSignal& references,
                          std::span<const double> y);

struct InstanceReport {
  std::size_t id = 0;
  PitResult pit;
  double baseline_db = 0.0;
  double improvement_db = 0.0;
  // External metrics can be merged in here.
  std::optional<double> pesq;
  std::optional<double> estoi;
};

struct EvalReport {
  std::vector<InstanceReport> instances;
  double mean_si_sdr = 0.0;
  double median_si_sdr = 0.0;
  double mean_improvement = 0.0;
  double median_improvement = 0.0;
};

InstanceReport evaluate_instance(std::size_t id, const StackedSignal& estimates,
                                 const StackedSignal& references, std::span<const double> y);

// Fills the aggregate fields from the instances.
EvalReport summarize(std::vector<InstanceReport> instances);

std::string report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

double median(std::vector<double> values);

}  // namespace edsep
