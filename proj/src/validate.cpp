#include "edsep/validate.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "edsep/error.hpp"
#include "edsep/parallel.hpp"

namespace edsep {

namespace {

Check relative_check(std::string name, double measured, double expected, double tol) {
  const bool pass = std::abs(measured - expected) <= tol * std::abs(expected);
  return {std::move(name), measured, expected, tol, pass};
}

}  // namespace

std::string format_checks(const std::vector<Check>& checks) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%-34s %16s %16s %10s  %s\n", "check", "measured", "expected",
                "tol", "result");
  os << line;
  for (const Check& c : checks) {
    std::snprintf(line, sizeof line, "%-34s %16.9g %16.9g %10.3g  %s\n", c.name.c_str(),
                  c.measured, c.expected, c.tolerance, c.pass ? "PASS" : "FAIL");
    os << line;
  }
  return os.str();
}

bool all_pass(const std::vector<Check>& checks) {
  for (const Check& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

SubspaceStats subspace_stats(const std::vector<StackedSignal>& ensemble) {
  if (ensemble.size() < 2) throw InvalidArgument("subspace_stats: need at least 2 members");
  const std::size_t k = ensemble.front().num_sources();
  const std::size_t m = ensemble.front().num_samples();
  const double n = static_cast<double>(ensemble.size());

  // Coordinates per member: index 0 is the P coordinate, 1..K-1 the contrasts.
  std::vector<double> sum(k * m, 0.0);
  std::vector<double> sum_sq(k * m, 0.0);
  std::vector<double> c(k);
  for (const StackedSignal& x : ensemble) {
    for (std::size_t j = 0; j < m; ++j) {
      double total = 0.0;
      for (std::size_t r = 0; r < k; ++r) total += x.row(r)[j];
      c[0] = total / std::sqrt(static_cast<double>(k));
      double prefix = 0.0;
      for (std::size_t h = 1; h < k; ++h) {
        prefix += x.row(h - 1)[j];
        const double hd = static_cast<double>(h);
        c[h] = (prefix - hd * x.row(h)[j]) / std::sqrt(hd * (hd + 1.0));
      }
      for (std::size_t h = 0; h < k; ++h) {
        sum[h * m + j] += c[h];
        sum_sq[h * m + j] += c[h] * c[h];
      }
    }
  }
  SubspaceStats out;
  for (std::size_t h = 0; h < k; ++h) {
    for (std::size_t j = 0; j < m; ++j) {
      const double mu = sum[h * m + j] / n;
      const double var = (sum_sq[h * m + j] - n * mu * mu) / (n - 1.0);
      (h == 0 ? out.mean_variance : out.residual_variance) += var;
    }
  }
  out.mean_variance /= static_cast<double>(m);
  out.residual_variance /= static_cast<double>(m * (k - 1));
  return out;
}

std::vector<Check> check_forward_marginal(const StackedSignal& s, const SdeParams& p,
                                          const MarginalCheckOptions& opts) {
  const Signal y = s.row_sum();
  const std::vector<StackedSignal> ends =
      ensemble_endpoints_omp(s, y, p, opts.em_steps, opts.num_paths, opts.seed, opts.jobs);
  const StackedSignal mu = marginal_mean(s, y, p, p.t_max());
  const double n = static_cast<double>(ends.size());

  double worst_z = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double a = 0.0;
    double b = 0.0;
    for (const StackedSignal& x : ends) {
      a += x.flat()[i];
      b += x.flat()[i] * x.flat()[i];
    }
    const double mean = a / n;
    const double var = (b - n * mean * mean) / (n - 1.0);
    const double se = std::sqrt(var / n);
    worst_z = std::max(worst_z, std::abs(mean - mu.flat()[i]) / se);
  }
  const NoiseScales ns = noise_scales(p, p.t_max());
  const SubspaceStats st = subspace_stats(ends);
  return {
      {"mean: max |error| / std.err", worst_z, 0.0, 4.0, worst_z <= 4.0},
      relative_check("variance on P (lambda1)", st.mean_variance, ns.lambda1, 0.05),
      relative_check("variance on Pbar (lambda2)", st.residual_variance, ns.lambda2, 0.05),
  };
}

std::vector<Check> check_oracle_posterior(const Denoiser& model, double sigma_s,
                                          const Signal& y, std::size_t num_sources,
                                          const PosteriorCheckOptions& opts) {
  const SdeParams& p = model.sde();
  const std::vector<StackedSignal> outs = separate_many(
      model, [&](std::size_t) { return y; }, opts.runs, num_sources, opts.sampler, opts.seed,
      opts.jobs);
  const StackedSignal s_bar = stack_mixture(y, num_sources);
  double worst = 0.0;
  for (const StackedSignal& x : outs) {
    const StackedSignal pm = project_mean(x);
    for (std::size_t i = 0; i < pm.size(); ++i) {
      worst = std::max(worst, std::abs(pm.flat()[i] - s_bar.flat()[i]));
    }
  }
  const double target =
      std::exp(-2.0 * p.gamma() * p.t_eps()) * sigma_s * sigma_s + noise_scales(p, p.t_eps()).lambda2;
  const SubspaceStats st = subspace_stats(outs);
  return {
      {"P component max |x - s_bar|", worst, 0.0, 1e-8, worst <= 1e-8},
      relative_check("Pbar variance", st.residual_variance, target, 0.10),
  };
}

}  // namespace edsep
