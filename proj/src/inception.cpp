#include "igan/inception.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <tuple>

namespace igan {

std::string to_string(InceptionTemplate t) {
  switch (t) {
    case InceptionTemplate::Bottlenecked: return "T1-bottlenecked";
    case InceptionTemplate::Direct5x5: return "T2-direct-5x5";
    case InceptionTemplate::Direct3x3: return "T3-direct-3x3";
    case InceptionTemplate::SinglePointwise: return "single-1x1";
  }
  return "?";
}

InceptionTemplate template_from_string(const std::string& s) {
  for (auto t : {InceptionTemplate::Bottlenecked, InceptionTemplate::Direct5x5, InceptionTemplate::Direct3x3,
                 InceptionTemplate::SinglePointwise}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown inception template '" + s + "'");
}

std::vector<InceptionTemplate> default_templates() {
  return {InceptionTemplate::Bottlenecked, InceptionTemplate::Direct5x5, InceptionTemplate::Direct3x3};
}

std::size_t inception_parameter_count(InceptionTemplate t, std::size_t in, std::size_t a, std::size_t b2,
                                      std::size_t c, std::size_t b3, std::size_t e, std::size_t f) {
  const std::size_t pw = in + 1;  // 1x1 weight row plus bias, per output channel
  switch (t) {
    case InceptionTemplate::Bottlenecked:
      return pw * (a + b2 + b3 + f) + (9 * b2 + 1) * c + (25 * b3 + 1) * e;
    case InceptionTemplate::Direct5x5:
      return pw * (a + b2 + f) + (9 * b2 + 1) * c + (25 * in + 1) * e;
    case InceptionTemplate::Direct3x3:
      return pw * (a + b3 + f) + (9 * in + 1) * c + (25 * b3 + 1) * e;
    case InceptionTemplate::SinglePointwise:
      return pw * a;
  }
  return 0;
}

std::size_t InceptionAllocation::out_channels() const {
  return branch1_1x1_out + branch2_3x3_out + branch3_5x5_out + branch4_pool_1x1_out;
}

std::size_t InceptionAllocation::parameter_count() const {
  return inception_parameter_count(tmpl, in_channels, branch1_1x1_out, branch2_bottleneck, branch2_3x3_out,
                                   branch3_bottleneck, branch3_5x5_out, branch4_pool_1x1_out);
}

InceptionAllocation InceptionAllocation::scaled(std::size_t divisor) const {
  if (divisor == 0) throw std::invalid_argument("width divisor must be positive");
  auto up = [divisor](std::size_t w) { return (w + divisor - 1) / divisor; };
  InceptionAllocation r = *this;
  r.in_channels = up(in_channels);
  r.branch1_1x1_out = up(branch1_1x1_out);
  r.branch2_bottleneck = up(branch2_bottleneck);
  r.branch2_3x3_out = up(branch2_3x3_out);
  r.branch3_bottleneck = up(branch3_bottleneck);
  r.branch3_5x5_out = up(branch3_5x5_out);
  r.branch4_pool_1x1_out = up(branch4_pool_1x1_out);
  return r;
}

bool InceptionAllocation::same_widths(const InceptionAllocation& o) const {
  return tmpl == o.tmpl && in_channels == o.in_channels && branch1_1x1_out == o.branch1_1x1_out &&
         branch2_bottleneck == o.branch2_bottleneck && branch2_3x3_out == o.branch2_3x3_out &&
         branch3_bottleneck == o.branch3_bottleneck && branch3_5x5_out == o.branch3_5x5_out &&
         branch4_pool_1x1_out == o.branch4_pool_1x1_out;
}

std::string InceptionAllocation::describe() const {
  std::ostringstream os;
  os << to_string(tmpl) << " in=" << in_channels << " 1x1=" << branch1_1x1_out << " 3x3=";
  if (branch2_bottleneck) os << branch2_bottleneck << "->";
  os << branch2_3x3_out << " 5x5=";
  if (branch3_bottleneck) os << branch3_bottleneck << "->";
  os << branch3_5x5_out << " pool1x1=" << branch4_pool_1x1_out << " out=" << out_channels()
     << " params=" << parameter_count();
  return os.str();
}

namespace {

using Key = std::tuple<std::uint64_t, double, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                       std::size_t, std::size_t>;

struct Tracker {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t target = 0;
  std::optional<std::pair<Key, AllocationCandidate>> best_exact;
  std::size_t exact_count = 0;
  // a few closest candidates overall, ordered by key
  std::vector<std::pair<Key, AllocationCandidate>> closest;
  std::size_t keep = 5;

  void offer(InceptionTemplate t, std::size_t a, std::size_t b2, std::size_t c, std::size_t b3, std::size_t e,
             std::size_t f) {
    const auto params = inception_parameter_count(t, in, a, b2, c, b3, e, f);
    const auto dev = static_cast<std::int64_t>(params) - static_cast<std::int64_t>(target);
    const double q = static_cast<double>(out) / 4.0;
    double balance = 0.0;
    if (t != InceptionTemplate::SinglePointwise) {
      for (std::size_t w : {a, c, e, f}) balance += (static_cast<double>(w) - q) * (static_cast<double>(w) - q);
    }
    const Key key{static_cast<std::uint64_t>(std::llabs(dev)), balance, b2 + b3, a, b2, c, b3, e, f};
    AllocationCandidate cand;
    cand.allocation.tmpl = t;
    cand.allocation.in_channels = in;
    cand.allocation.branch1_1x1_out = a;
    cand.allocation.branch2_bottleneck = b2;
    cand.allocation.branch2_3x3_out = c;
    cand.allocation.branch3_bottleneck = b3;
    cand.allocation.branch3_5x5_out = e;
    cand.allocation.branch4_pool_1x1_out = f;
    cand.deviation = dev;
    if (dev == 0) {
      ++exact_count;
      if (!best_exact || key < best_exact->first) best_exact = {key, cand};
    }
    if (closest.size() < keep || key < closest.back().first) {
      auto it = std::upper_bound(closest.begin(), closest.end(), key,
                                 [](const Key& k, const auto& p) { return k < p.first; });
      closest.insert(it, {key, cand});
      if (closest.size() > keep) closest.pop_back();
    }
  }
};

// Integers on the grid {step, 2*step, ...} up to `hi` nearest to x.
std::vector<std::size_t> grid_neighbours(double x, std::size_t step, std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> r;
  if (lo > hi) return r;
  const double s = static_cast<double>(step);
  const double fl = std::floor(x / s) * s;
  for (double v : {fl, fl + s}) {
    const double clamped = std::clamp(v, static_cast<double>(lo), static_cast<double>(hi));
    const auto w = static_cast<std::size_t>(clamped);
    if (w % step == 0 && std::find(r.begin(), r.end(), w) == r.end()) r.push_back(w);
  }
  return r;
}

std::size_t round_up(std::size_t v, std::size_t step) { return (v + step - 1) / step * step; }

// Enumerates one template on one width grid; for each choice of the outer
// widths the last free width is solved for directly.
void search(Tracker& tr, InceptionTemplate t, std::size_t step, std::size_t min_width) {
  const std::size_t lo = round_up(std::max<std::size_t>(min_width, 1), step);
  const std::size_t out = tr.out;
  const std::size_t pw = tr.in + 1;
  const double target = static_cast<double>(tr.target);

  if (t == InceptionTemplate::SinglePointwise) {
    if (out >= lo && out % step == 0) tr.offer(t, out, 0, 0, 0, 0, 0);
    return;
  }
  for (std::size_t c = lo; c <= out; c += step) {
    for (std::size_t e = lo; c + e + 2 * lo <= out; e += step) {
      const std::size_t r = out - c - e;
      // 1x1 and pool widths share r; split evenly on the grid
      const std::size_t a = r / 2 / step * step;
      const std::size_t f = r - a;
      if (a < lo || f < lo) continue;
      if (t == InceptionTemplate::Bottlenecked) {
        for (std::size_t b2 = lo; b2 <= out; b2 += step) {
          const double rest = target - static_cast<double>(pw * (r + b2) + (9 * b2 + 1) * c + e);
          const double coef = static_cast<double>(pw + 25 * e);
          for (std::size_t b3 : grid_neighbours(rest / coef, step, lo, out)) tr.offer(t, a, b2, c, b3, e, f);
        }
      } else if (t == InceptionTemplate::Direct5x5) {
        const double rest = target - static_cast<double>(pw * r + c + (25 * tr.in + 1) * e);
        const double coef = static_cast<double>(pw + 9 * c);
        for (std::size_t b2 : grid_neighbours(rest / coef, step, lo, out)) tr.offer(t, a, b2, c, 0, e, f);
      } else {
        const double rest = target - static_cast<double>(pw * r + (9 * tr.in + 1) * c + e);
        const double coef = static_cast<double>(pw + 25 * e);
        for (std::size_t b3 : grid_neighbours(rest / coef, step, lo, out)) tr.offer(t, a, 0, c, b3, e, f);
      }
    }
  }
}

}  // namespace

SolveResult solve_allocation(std::size_t in_ch, std::size_t out_ch, std::size_t target,
                             const std::vector<InceptionTemplate>& templates, const SolveOptions& opts) {
  if (in_ch == 0 || out_ch == 0 || target == 0) {
    throw std::invalid_argument("solve_allocation: channel counts and target must be positive");
  }
  if (templates.empty()) throw std::invalid_argument("solve_allocation: no templates to search");
  if (opts.steps.empty()) throw std::invalid_argument("solve_allocation: no width grids to search");

  std::vector<std::pair<Key, AllocationCandidate>> overall;
  auto merge = [&](const Tracker& tr) {
    overall.insert(overall.end(), tr.closest.begin(), tr.closest.end());
    std::sort(overall.begin(), overall.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    if (overall.size() > 5) overall.resize(5);
  };

  for (std::size_t step : opts.steps) {
    if (step == 0) throw std::invalid_argument("solve_allocation: grid step must be positive");
    for (auto t : templates) {
      Tracker tr;
      tr.in = in_ch;
      tr.out = out_ch;
      tr.target = target;
      search(tr, t, step, opts.min_width);
      merge(tr);
      if (tr.best_exact) {
        SolveResult res;
        res.allocation = tr.best_exact->second.allocation;
        res.status = SolveStatus::Exact;
        res.deviation = 0;
        res.step = step;
        res.searched = templates;
        res.exact_solutions = tr.exact_count;
        return res;
      }
    }
  }

  std::vector<AllocationCandidate> closest;
  for (auto& [k, c] : overall) closest.push_back(c);
  if (closest.empty()) {
    throw UnresolvableAllocation("no allocation of " + std::to_string(out_ch) + " output channels fits the width bounds",
                                 {});
  }
  const auto& best = closest.front();
  const double rel = std::abs(static_cast<double>(best.deviation)) / static_cast<double>(target);
  if (rel > opts.max_relative_deviation) {
    std::ostringstream os;
    os << "unresolvable under templates:";
    for (auto t : templates) os << ' ' << to_string(t);
    os << "; closest deviation " << best.deviation << " (" << rel * 100.0 << "% of " << target << ")";
    throw UnresolvableAllocation(os.str(), closest);
  }
  SolveResult res;
  res.allocation = best.allocation;
  res.status = SolveStatus::BestFit;
  res.deviation = best.deviation;
  res.step = opts.steps.back();
  res.searched = templates;
  return res;
}

}  // namespace igan
