#pragma once

// Round-level Monte-Carlo simulation of n energy-harvesting nodes sharing a
// collision channel under AUC / RUC / SAFC or EH slotted ALOHA.
//
// One round, in order:
//   1. active nodes (energy >= M+1 at round start) probe with probability q,
//      paying one unit;
//   2. a lone prober transmits; otherwise the fallback rule of the
//      mechanism picks the transmitters (AUC: active nodes, RUC: probers,
//      SAFC: nobody), each with probability eta;
//   3. every transmitter pays M; a lone transmitter delivers a fresh update;
//   4. each node harvests one unit with probability xi.
// Under SA_BASELINE step 1 is skipped and nodes holding >= M units transmit
// with probability eta.
//
// Randomness: node j of the replication with seed s draws from its own
// std::mt19937_64 seeded by std::seed_seq{lo32(s), hi32(s), j, 0x5eed}.
// Draw order within a round is fixed (node index ascending), so an episode
// is a pure function of (config, seed, horizon).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "ehaoi/model.hpp"

namespace ehaoi {

/// Per-node state at a round boundary; aoi == round - last_generation.
struct NodeState {
  std::int64_t energy = 0;
  std::int64_t aoi = 0;
  std::int64_t last_generation = 0;
};

struct SimOptions {
  std::int64_t horizon = 100'000;
  double burn_in_fraction = 0.1;  // leading share of rounds excluded from statistics
};

/// Running first and second moment of a sample.
struct SampleMoments {
  std::uint64_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++count;
    sum += x;
    sum_sq += x * x;
  }
  void merge(const SampleMoments& o) {
    count += o.count;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  double variance() const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    return (sum_sq - sum * sum / n) / (n - 1.0);
  }
};

struct SimStats {
  std::vector<std::uint64_t> seeds;
  std::int64_t horizon = 0;
  std::int64_t measured_rounds = 0;  // rounds after burn-in, per replication
  std::size_t replications = 0;

  double mean_aoi_rounds = 0.0;
  double mean_aoi_physical = 0.0;
  double ci95 = 0.0;  // half-width over replications (0 for a single episode)

  // Counters over the measured rounds.
  std::uint64_t attempts = 0;    // data transmissions
  std::uint64_t successes = 0;
  std::uint64_t collisions = 0;  // transmissions lost to collisions
  std::uint64_t probes = 0;
  std::uint64_t active_node_rounds = 0;

  double empirical_p_s = 0.0;  // successes / attempts
  double empirical_p_T = 0.0;  // attempts / active node-rounds
  double empirical_p_a = 0.0;  // active node-rounds / node-rounds

  // Energy over the whole horizon, summed over replications.
  std::uint64_t energy_harvested = 0;
  std::uint64_t energy_spent = 0;
  std::uint64_t energy_stored = 0;  // sum of final buffer levels
  double energy_consumption_rate = 0.0;

  // deficit_histogram[l]: transmissions leaving deficit l (0: still active).
  std::vector<std::uint64_t> deficit_histogram;

  SampleMoments access_wait;     // active rounds from one attempt to the next
  SampleMoments attempt_gap;     // rounds between consecutive attempts of a node
};

namespace detail {

inline std::mt19937_64 node_stream(std::uint64_t seed, std::uint32_t node) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), node,
                    0x5eedu};
  return std::mt19937_64(seq);
}

inline void finalize_rates(SimStats& s, int n) {
  s.empirical_p_s = s.attempts ? static_cast<double>(s.successes) / s.attempts : 0.0;
  s.empirical_p_T = s.active_node_rounds ? static_cast<double>(s.attempts) / s.active_node_rounds : 0.0;
  const double node_rounds = static_cast<double>(s.measured_rounds) * n * s.replications;
  s.empirical_p_a = node_rounds > 0 ? s.active_node_rounds / node_rounds : 0.0;
  const double all_rounds = static_cast<double>(s.horizon) * n * s.replications;
  s.energy_consumption_rate = all_rounds > 0 ? s.energy_spent / all_rounds : 0.0;
}

}  // namespace detail

/// Mean energy spent per node per round.
inline double energy_consumption_rate(const SimStats& stats, const ProtocolConfig& config) {
  const double node_rounds = static_cast<double>(stats.horizon) * config.n *
                             static_cast<double>(std::max<std::size_t>(stats.replications, 1));
  return node_rounds > 0 ? stats.energy_spent / node_rounds : 0.0;
}

/// Deficit histogram normalized over l >= 1.
inline std::vector<double> conditional_deficit_pmf(const SimStats& stats) {
  std::vector<double> pmf;
  double total = 0.0;
  for (std::size_t l = 1; l < stats.deficit_histogram.size(); ++l) total += stats.deficit_histogram[l];
  for (std::size_t l = 1; l < stats.deficit_histogram.size(); ++l)
    pmf.push_back(total > 0 ? stats.deficit_histogram[l] / total : 0.0);
  return pmf;
}

inline SimStats run_episode(const ValidatedConfig& vc, std::uint64_t seed, const SimOptions& opt = {},
                            std::vector<NodeState>* final_state = nullptr) {
  if (opt.horizon < 1) throw std::invalid_argument("run_episode: horizon must be >= 1");
  if (!(opt.burn_in_fraction >= 0.0 && opt.burn_in_fraction < 1.0))
    throw std::invalid_argument("run_episode: burn_in_fraction must lie in [0, 1)");

  const ProtocolConfig& c = vc.get();
  const int n = c.n;
  const std::int64_t M = c.M;
  const bool baseline = c.mechanism == Mechanism::SA_BASELINE;
  const std::int64_t threshold = baseline ? M : M + 1;
  const auto burn_in = static_cast<std::int64_t>(std::floor(opt.burn_in_fraction * opt.horizon));

  std::vector<NodeState> nodes(static_cast<std::size_t>(n));
  std::vector<std::mt19937_64> rng;
  rng.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) rng.push_back(detail::node_stream(seed, static_cast<std::uint32_t>(j)));

  std::bernoulli_distribution harvest(c.xi), probe(c.q), access(c.eta);

  std::vector<char> active(static_cast<std::size_t>(n)), probed(static_cast<std::size_t>(n));
  std::vector<int> transmitters;
  transmitters.reserve(static_cast<std::size_t>(n));
  std::vector<std::int64_t> wait(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> last_attempt(static_cast<std::size_t>(n), -1);

  SimStats s;
  s.seeds = {seed};
  s.horizon = opt.horizon;
  s.measured_rounds = opt.horizon - burn_in;
  s.replications = 1;
  s.deficit_histogram.assign(static_cast<std::size_t>(threshold + 1), 0);

  long double aoi_sum = 0.0L;

  for (std::int64_t t = 0; t < opt.horizon; ++t) {
    const bool measuring = t >= burn_in;
    if (measuring) {
      std::int64_t round_sum = 0;
      for (const auto& node : nodes) round_sum += node.aoi;
      aoi_sum += static_cast<long double>(round_sum);
    }

    // Probing phase.
    int probers = 0;
    int last_prober = -1;
    for (int j = 0; j < n; ++j) {
      auto& node = nodes[static_cast<std::size_t>(j)];
      const bool is_active = node.energy >= threshold;
      active[static_cast<std::size_t>(j)] = is_active;
      probed[static_cast<std::size_t>(j)] = 0;
      if (!is_active) continue;
      if (measuring) {
        ++s.active_node_rounds;
        ++wait[static_cast<std::size_t>(j)];
      }
      if (!baseline && probe(rng[static_cast<std::size_t>(j)])) {
        probed[static_cast<std::size_t>(j)] = 1;
        node.energy -= 1;
        ++s.energy_spent;
        if (measuring) ++s.probes;
        ++probers;
        last_prober = j;
      }
    }

    // Data phase.
    transmitters.clear();
    if (!baseline && probers == 1) {
      transmitters.push_back(last_prober);
    } else if (c.mechanism != Mechanism::SAFC) {
      for (int j = 0; j < n; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        bool eligible = false;
        switch (c.mechanism) {
          case Mechanism::AUC: eligible = active[idx] && nodes[idx].energy >= M; break;
          case Mechanism::RUC: eligible = probed[idx] && nodes[idx].energy >= M; break;
          case Mechanism::SA_BASELINE: eligible = active[idx]; break;
          case Mechanism::SAFC: break;
        }
        if (eligible && access(rng[idx])) transmitters.push_back(j);
      }
    }
    for (int j : transmitters) {
      nodes[static_cast<std::size_t>(j)].energy -= M;
      s.energy_spent += static_cast<std::uint64_t>(M);
    }
    const bool delivered = transmitters.size() == 1;

    // Harvest at round end.
    for (int j = 0; j < n; ++j) {
      if (harvest(rng[static_cast<std::size_t>(j)])) {
        ++nodes[static_cast<std::size_t>(j)].energy;
        ++s.energy_harvested;
      }
    }

    if (measuring) {
      s.attempts += transmitters.size();
      if (delivered)
        ++s.successes;
      else
        s.collisions += transmitters.size();
      for (int j : transmitters) {
        const auto idx = static_cast<std::size_t>(j);
        const std::int64_t deficit = std::max<std::int64_t>(0, threshold - nodes[idx].energy);
        ++s.deficit_histogram[static_cast<std::size_t>(deficit)];
        if (last_attempt[idx] >= burn_in) {
          s.access_wait.add(static_cast<double>(wait[idx]));
          s.attempt_gap.add(static_cast<double>(t - last_attempt[idx]));
        }
      }
    }
    for (int j : transmitters) {
      wait[static_cast<std::size_t>(j)] = 0;
      last_attempt[static_cast<std::size_t>(j)] = t;
    }

    for (auto& node : nodes) ++node.aoi;
    if (delivered) {
      auto& winner = nodes[static_cast<std::size_t>(transmitters.front())];
      winner.last_generation = t;
      winner.aoi = 1;
    }
  }

  for (const auto& node : nodes) s.energy_stored += static_cast<std::uint64_t>(node.energy);
  s.mean_aoi_rounds =
      static_cast<double>(aoi_sum / (static_cast<long double>(s.measured_rounds) * n));
  s.mean_aoi_physical = s.mean_aoi_rounds * vc.round_duration().rounds_to_physical;
  detail::finalize_rates(s, n);
  if (final_state) *final_state = std::move(nodes);
  return s;
}

struct ReplicationResult {
  SimStats aggregate;
  std::vector<SimStats> episodes;  // in seed order
};

/// Pools independent episodes. Counters and histograms are summed, AoI is
/// averaged over episodes and ci95 is the Student-t half-width of that mean.
inline SimStats aggregate_episodes(const std::vector<SimStats>& episodes, const ProtocolConfig& c) {
  if (episodes.empty()) throw std::invalid_argument("aggregate_episodes: no episodes");
  SimStats a;
  a.horizon = episodes.front().horizon;
  a.measured_rounds = episodes.front().measured_rounds;
  a.replications = episodes.size();
  a.deficit_histogram.assign(episodes.front().deficit_histogram.size(), 0);
  SampleMoments aoi;
  for (const auto& e : episodes) {
    a.seeds.insert(a.seeds.end(), e.seeds.begin(), e.seeds.end());
    aoi.add(e.mean_aoi_rounds);
    a.attempts += e.attempts;
    a.successes += e.successes;
    a.collisions += e.collisions;
    a.probes += e.probes;
    a.active_node_rounds += e.active_node_rounds;
    a.energy_harvested += e.energy_harvested;
    a.energy_spent += e.energy_spent;
    a.energy_stored += e.energy_stored;
    for (std::size_t l = 0; l < a.deficit_histogram.size(); ++l)
      a.deficit_histogram[l] += e.deficit_histogram[l];
    a.access_wait.merge(e.access_wait);
    a.attempt_gap.merge(e.attempt_gap);
  }
  a.mean_aoi_rounds = aoi.mean();
  a.mean_aoi_physical = a.mean_aoi_rounds * RoundDuration::of(c).rounds_to_physical;
  if (aoi.count >= 2) {
    const boost::math::students_t dist(static_cast<double>(aoi.count - 1));
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    a.ci95 = t * std::sqrt(aoi.variance() / static_cast<double>(aoi.count));
  }
  detail::finalize_rates(a, c.n);
  return a;
}

/// Runs one episode per seed, spread over `threads` workers (0: hardware
/// concurrency). Results do not depend on the thread count.
inline ReplicationResult run_replications(const ValidatedConfig& vc, const std::vector<std::uint64_t>& seeds,
                                          const SimOptions& opt = {}, unsigned threads = 0) {
  if (seeds.size() < 2)
    throw std::invalid_argument("run_replications: at least 2 seeds are needed for a confidence interval");
  ReplicationResult out;
  out.episodes.resize(seeds.size());

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(seeds.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++)
      out.episodes[i] = run_episode(vc, seeds[i], opt);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  out.aggregate = aggregate_episodes(out.episodes, vc.get());
  return out;
}

/// Like run_replications but also accepts a single seed, reported with ci95 = 0.
inline SimStats simulate_seeds(const ValidatedConfig& vc, const std::vector<std::uint64_t>& seeds,
                               const SimOptions& opt = {}, unsigned threads = 0) {
  if (seeds.size() == 1) return aggregate_episodes({run_episode(vc, seeds.front(), opt)}, vc.get());
  return run_replications(vc, seeds, opt, threads).aggregate;
}

/// base, base+1, ..., base+count-1
inline std::vector<std::uint64_t> consecutive_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = base + i;
  return seeds;
}

}  // namespace ehaoi
