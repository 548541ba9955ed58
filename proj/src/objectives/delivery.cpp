#include "reachseg/objectives/delivery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "reachseg/errors.hpp"

namespace reachseg {

double MediaEconomics::reach_goal(std::size_t medium) const {
  return budget / (population * costs.at(medium));
}

void MediaEconomics::validate() const {
  if (!(budget > 0.0)) throw std::invalid_argument("MediaEconomics: budget must be positive");
  if (!(population > 0.0)) throw std::invalid_argument("MediaEconomics: population must be positive");
  if (costs.empty()) throw std::invalid_argument("MediaEconomics: no media costs");
  for (double c : costs) {
    if (!(c > 0.0)) throw std::invalid_argument("MediaEconomics: costs must be positive");
  }
}

std::vector<std::size_t> MediaEconomics::goals_above_ceiling() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < costs.size(); ++j) {
    if (reach_goal(j) > 1.0) out.push_back(j);
  }
  return out;
}

double default_budget(double population, std::span<const double> costs, double fraction) {
  if (costs.empty()) throw std::invalid_argument("default_budget: no media costs");
  const double cheapest = *std::min_element(costs.begin(), costs.end());
  return fraction * population * kMaxRate * kMaxRate * cheapest;
}

std::vector<MediaRate> expected_rates(std::span<const double> p, const MediaTable& table) {
  const StaticSchema& schema = table.schema;
  const std::vector<std::size_t> counts = schema.class_counts();
  std::size_t tuples = 1;
  for (std::size_t c : counts) {
    if (tuples > kMaxEnumeratedTuples / c) {
      throw Unsupported("expected_rates: tuple space exceeds the enumeration limit");
    }
    tuples *= c;
  }
  if (p.size() != schema.total_classes()) {
    throw std::invalid_argument("expected_rates: distribution width " + std::to_string(p.size()) +
                                " does not match the schema");
  }
  std::vector<std::size_t> offsets(counts.size(), 0);
  for (std::size_t f = 1; f < counts.size(); ++f) offsets[f] = offsets[f - 1] + counts[f - 1];

  const std::size_t media = table.media_count();
  std::vector<MediaRate> out(media);
  std::vector<std::size_t> digits(counts.size(), 0);
  for (std::size_t t = 0; t < tuples; ++t) {
    double weight = 1.0;
    for (std::size_t f = 0; f < counts.size(); ++f) weight *= p[offsets[f] + digits[f]];
    if (weight != 0.0) {
      for (std::size_t j = 0; j < media; ++j) {
        const MediaRate& r = table.rate(t, j);
        out[j].match += weight * r.match;
        out[j].exposure += weight * r.exposure;
      }
    }
    // Mixed-radix increment, last feature fastest (matches tuple_index).
    for (std::size_t f = counts.size(); f-- > 0;) {
      if (++digits[f] < counts[f]) break;
      digits[f] = 0;
    }
  }
  return out;
}

MediaRate expected_rates(std::span<const double> p, const MediaTable& table, std::size_t medium) {
  if (medium >= table.media_count()) throw std::out_of_range("expected_rates: medium index");
  return expected_rates(p, table)[medium];
}

std::size_t chosen_medium(const SegmentDelivery& segment) {
  if (segment.assignment.size() != segment.rates.size() || segment.rates.empty()) {
    throw std::invalid_argument("chosen_medium: assignment and rates disagree in width");
  }
  std::size_t best = 0;
  double best_value = segment.assignment[0] * segment.reach_rate(0);
  for (std::size_t j = 1; j < segment.rates.size(); ++j) {
    const double v = segment.assignment[j] * segment.reach_rate(j);
    if (v > best_value) {
      best = j;
      best_value = v;
    }
  }
  return best;
}

ReachResult reach(std::span<const SegmentDelivery> segments) {
  ReachResult out;
  out.chosen.reserve(segments.size());
  for (const SegmentDelivery& s : segments) {
    const std::size_t j = chosen_medium(s);
    out.chosen.push_back(j);
    out.reach += s.assignment[j] * s.reach_rate(j) * s.size;
  }
  return out;
}

SpendResult spend_and_constraint(std::span<const SegmentDelivery> segments,
                                 std::span<const std::size_t> chosen, const MediaEconomics& econ) {
  if (chosen.size() != segments.size()) {
    throw std::invalid_argument("spend_and_constraint: one medium per segment required");
  }
  SpendResult out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::size_t j = chosen[i];
    out.spend += segments[i].assignment.at(j) * segments[i].reach_rate(j) * econ.costs.at(j) *
                 segments[i].size;
  }
  out.slack = econ.budget - out.spend;
  return out;
}

namespace {

double squared_deviation(const SegmentDelivery& s, std::size_t j, const MediaEconomics& econ) {
  const double d = s.reach_rate(j) - econ.reach_goal(j);
  return d * d;
}

void require_widths(const SegmentDelivery& s, const MediaEconomics& econ) {
  if (s.assignment.size() != s.rates.size() || s.rates.size() != econ.costs.size()) {
    throw std::invalid_argument("segment media width does not match the cost vector");
  }
}

}  // namespace

double lr_cluster_specific_mse(const SegmentDelivery& segment, const MediaEconomics& econ) {
  require_widths(segment, econ);
  double total = 0.0;
  for (std::size_t j = 0; j < segment.rates.size(); ++j) {
    total += segment.assignment[j] * squared_deviation(segment, j, econ);
  }
  return total;
}

double lr_cluster_agnostic_mse(std::span<const SegmentDelivery> segments,
                               const MediaEconomics& econ) {
  double weighted = 0.0;
  double population = 0.0;
  for (const SegmentDelivery& s : segments) {
    weighted += s.size * lr_cluster_specific_mse(s, econ);
    population += s.size;
  }
  if (population == 0.0) throw InvalidState("lr_cluster_agnostic_mse: total segment size is zero");
  return weighted / population;
}

Formulation parse_formulation(const std::string& tag) {
  if (tag == "csse") return Formulation::kCsse;
  if (tag == "case") return Formulation::kCase;
  if (tag == "smin" || tag == "slack") return Formulation::kSlack;
  if (tag == "barr" || tag == "barrier") return Formulation::kBarrier;
  if (tag == "alm") return Formulation::kAlm;
  throw std::invalid_argument("unknown formulation '" + tag + "'");
}

std::string formulation_name(Formulation formulation) {
  switch (formulation) {
    case Formulation::kCsse: return "csse";
    case Formulation::kCase: return "case";
    case Formulation::kSlack: return "smin";
    case Formulation::kBarrier: return "barr";
    case Formulation::kAlm: return "alm";
  }
  return "unknown";
}

DualState make_dual_state(Formulation formulation) {
  DualState d;
  d.formulation = formulation;
  switch (formulation) {
    case Formulation::kSlack:
    case Formulation::kBarrier:
      d.w = 1.0;
      d.mu = 0.3;
      break;
    case Formulation::kAlm:
      d.lambda = 0.1;
      d.mu = 0.1;
      break;
    case Formulation::kCsse:
    case Formulation::kCase:
      break;
  }
  return d;
}

DualState dual_update(DualState dual, double slack, double budget) {
  switch (dual.formulation) {
    case Formulation::kSlack:
    case Formulation::kBarrier:
      dual.w *= dual.mu;
      break;
    case Formulation::kAlm:
      if (!(budget > 0.0)) throw std::invalid_argument("dual_update: budget must be positive");
      dual.lambda = std::max(dual.lambda + dual.mu * slack / budget, 0.0);
      break;
    case Formulation::kCsse:
    case Formulation::kCase:
      break;
  }
  ++dual.update_count;
  return dual;
}

ReachTerm inverse_log_reach(double reach) {
  if (reach < kMinReach) {
    return {1.0 / std::log(kMinReach), 0.0, 0.0};
  }
  const double l = std::log(reach);
  return {1.0 / l, -1.0 / (reach * l * l), 0.0};
}

ReachTerm lr_slack(double reach, double slack, const DualState& dual) {
  ReachTerm t = inverse_log_reach(reach);
  if (slack > 0.0) {
    t.value += slack / dual.w;
    t.d_slack = 1.0 / dual.w;
  }
  return t;
}

ReachTerm lr_barrier(double reach, double slack, const DualState& dual, bool paper_literal) {
  ReachTerm t = inverse_log_reach(reach);
  if (paper_literal) {
    if (slack < 0.0) {
      t.value -= std::log(-slack) / dual.w;
      t.d_slack = -1.0 / (dual.w * slack);
    }
    return t;
  }
  if (!(slack > 0.0)) {
    throw InfeasibleIterate("lr_barrier: T_R = " + std::to_string(slack) + " is not feasible");
  }
  t.value -= std::log(slack) / dual.w;
  t.d_slack = -1.0 / (dual.w * slack);
  return t;
}

ReachTerm lr_alm(double reach, double slack, const MediaEconomics& econ, const DualState& dual) {
  ReachTerm t = inverse_log_reach(reach);
  const double ratio = slack / econ.budget;
  t.value += -dual.lambda * ratio + 0.5 * dual.mu * ratio * ratio;
  t.d_slack = (-dual.lambda + dual.mu * ratio) / econ.budget;
  return t;
}

ReachObjective evaluate_reach_objective(std::span<const SegmentDelivery> segments,
                                        const MediaEconomics& econ, const DualState& dual,
                                        bool paper_literal_barrier) {
  const std::size_t k = segments.size();
  const std::size_t m = econ.costs.size();
  for (const SegmentDelivery& s : segments) require_widths(s, econ);

  ReachObjective out;
  const ReachResult r = reach(segments);
  const SpendResult sp = spend_and_constraint(segments, r.chosen, econ);
  out.reach = r.reach;
  out.spend = sp.spend;
  out.slack = sp.slack;
  out.chosen = r.chosen;
  out.d_assignment = Matrix(k, m);
  out.d_size.assign(k, 0.0);

  switch (dual.formulation) {
    case Formulation::kCsse:
      for (std::size_t i = 0; i < k; ++i) {
        out.value += lr_cluster_specific_mse(segments[i], econ);
        for (std::size_t j = 0; j < m; ++j) {
          out.d_assignment(i, j) = squared_deviation(segments[i], j, econ);
        }
      }
      return out;
    case Formulation::kCase: {
      out.value = lr_cluster_agnostic_mse(segments, econ);
      double population = 0.0;
      for (const SegmentDelivery& s : segments) population += s.size;
      for (std::size_t i = 0; i < k; ++i) {
        const double per_segment = lr_cluster_specific_mse(segments[i], econ);
        out.d_size[i] = (per_segment - out.value) / population;
        for (std::size_t j = 0; j < m; ++j) {
          out.d_assignment(i, j) = segments[i].size * squared_deviation(segments[i], j, econ) /
                                   population;
        }
      }
      return out;
    }
    case Formulation::kSlack:
    case Formulation::kBarrier:
    case Formulation::kAlm:
      break;
  }

  ReachTerm term;
  if (dual.formulation == Formulation::kSlack) {
    term = lr_slack(out.reach, out.slack, dual);
  } else if (dual.formulation == Formulation::kBarrier) {
    term = lr_barrier(out.reach, out.slack, dual, paper_literal_barrier);
  } else {
    term = lr_alm(out.reach, out.slack, econ, dual);
  }
  out.value = term.value;
  // R and Spend both depend only on Aᵢⱼ′ and nᵢ; T_R = B − Spend.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = r.chosen[i];
    const double q = segments[i].reach_rate(j);
    const double dr_da = q * segments[i].size;
    const double dr_dn = q * segments[i].assignment[j];
    const double cost = econ.costs[j];
    out.d_assignment(i, j) = term.d_reach * dr_da - term.d_slack * cost * dr_da;
    out.d_size[i] = term.d_reach * dr_dn - term.d_slack * cost * dr_dn;
  }
  return out;
}

}  // namespace reachseg
