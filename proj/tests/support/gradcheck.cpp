#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace gradcheck {

namespace {

constexpr double kRoundoffGrowth = 4;

double probe(const Build& build, const Leaves& leaves, const Tensor& r, double* magnitude = nullptr) {
  GradTape tape;
  const Tensor& y = tape.value(build(tape, leaves));
  double s = 0, m = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += double(y[i]) * double(r[i]);
    m += double(y[i]) * double(r[i]) * double(y[i]) * double(r[i]);
  }
  if (magnitude) *magnitude = std::sqrt(m);
  return s;
}

}  // namespace

std::vector<LeafReport> check(const Build& build, Leaves& leaves, const Options& opt) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<float> unit(-1.0f, 1.0f);

  GradTape tape;
  Var out = build(tape, leaves);
  Tensor r(tape.value(out).shape());
  for (float& v : r.data()) v = unit(rng);
  auto grads = tape.backward(tape.weighted_sum(out, r));
  double magnitude = 0;
  const double base = probe(build, leaves, r, &magnitude);
  // rms float32 round-off of the probe, seen through a difference quotient.
  const double resolution = kRoundoffGrowth * std::numeric_limits<float>::epsilon() * magnitude / opt.step;

  std::vector<LeafReport> reports;
  for (auto& [name, leaf] : leaves) {
    auto it = grads.parameters().find(name);
    if (it == grads.parameters().end()) continue;
    const Tensor& g = it->second;
    LeafReport rep{name};

    std::size_t peak = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (std::abs(g[i]) > std::abs(g[peak])) peak = i;
    }
    rep.peak_abs_grad = std::abs(g[peak]);
    const double floor = std::max({1e-3 * rep.peak_abs_grad, 100 * resolution, 1e-7});

    std::set<std::size_t> picks{peak};
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    while (picks.size() < std::min(g.size(), opt.samples + 1)) picks.insert(pick(rng));

    double best_mag = -1;
    for (std::size_t i : picks) {
      auto rel = [&](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}); };
      const float saved = leaf[i];
      leaf[i] = static_cast<float>(saved + opt.step);
      const double plus = probe(build, leaves, r);
      leaf[i] = static_cast<float>(saved - opt.step);
      const double minus = probe(build, leaves, r);
      leaf[i] = saved;
      const double fwd = (plus - base) / opt.step, bwd = (base - minus) / opt.step;
      const double numeric = (plus - minus) / (2 * opt.step);
      // relu/max kink inside the step: the one-sided differences disagree and
      // the analytic value must match the side that stays on its linear piece.
      const bool kinked = std::abs(fwd - bwd) > 1e-2 * std::max({std::abs(fwd), std::abs(bwd), floor});
      const double e = kinked ? std::min({rel(g[i], numeric), rel(g[i], fwd), rel(g[i], bwd)}) : rel(g[i], numeric);
      if (kinked) {
        ++rep.kinks;
        rep.max_kink_rel = std::max(rep.max_kink_rel, e);
        if (std::getenv("GRADCHECK_DEBUG")) {
          std::fprintf(stderr, "kink %s[%zu]: fwd %.6g bwd %.6g analytic %.6g floor %.3g\n", name.c_str(), i, fwd, bwd,
                       double(g[i]), floor);
        }
        continue;
      }
      const double analytic = g[i];
      ++rep.checked;
      rep.max_rel = std::max(rep.max_rel, e);
      if (std::abs(analytic) > best_mag) {
        best_mag = std::abs(analytic);
        rep.peak_rel = e;
      }
    }
    reports.push_back(rep);
  }
  return reports;
}

bool all_ok(const std::vector<LeafReport>& reports) {
  return !reports.empty() && std::all_of(reports.begin(), reports.end(), [](const LeafReport& r) { return r.ok(); });
}

std::string describe(const std::vector<LeafReport>& reports) {
  std::ostringstream os;
  for (const auto& r : reports) {
    os << (r.ok() ? "  ok   " : "  FAIL ") << r.name << " checked=" << r.checked << " kinks=" << r.kinks << " kink_rel=" << r.max_kink_rel
       << " max_rel=" << r.max_rel << " peak_rel=" << r.peak_rel << " |g|max=" << r.peak_abs_grad << "\n";
  }
  return os.str();
}

}  // namespace gradcheck
