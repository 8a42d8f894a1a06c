#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "wflab/defenses.hpp"
#include "wflab/rng.hpp"

using namespace wflab;

namespace {

// integer timestamps and sizes so float arithmetic on them is exact
Trace make_trace(int n, std::uint64_t seed, int site = 0, std::string tag = "day-a") {
  Rng rng(seed);
  Trace t;
  t.site_label = site;
  t.env_id = 0;
  t.epoch_tag = std::move(tag);
  double ts = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i > 0) ts += static_cast<double>(1 + rng.uniform_index(5000));
    t.packets.push_back({ts, static_cast<double>(40 + rng.uniform_index(1400))});
  }
  return t;
}

double duration(const Trace& t) {
  return t.packets.back().timestamp_us - t.packets.front().timestamp_us;
}

double total_bytes(const Trace& t) {
  double s = 0.0;
  for (const auto& p : t.packets) s += p.size_bytes;
  return s;
}

}  // namespace

TEST(Inflation, ZeroCoefficientIsIdentity) {
  Trace t = make_trace(600, 1);
  InflationConfig cfg;
  cfg.coefficient = 0.0;
  auto [out, report] = apply_inflation(t, cfg);
  for (size_t i = 0; i < t.packets.size(); ++i) {
    EXPECT_EQ(out.packets[i].timestamp_us, t.packets[i].timestamp_us);
    EXPECT_EQ(out.packets[i].size_bytes, t.packets[i].size_bytes);
  }
  EXPECT_DOUBLE_EQ(report.delay_multiplier, 1.0);
  EXPECT_DOUBLE_EQ(report.byte_overhead, 0.0);
  EXPECT_DOUBLE_EQ(report.packet_overhead, 0.0);
}

TEST(Inflation, PerPacketBoundsMeanBasis) {
  Trace t = make_trace(500, 3);
  std::vector<double> jitter = compute_jitter(t);
  double jit_mean = 0.0, size_mean = 0.0;
  for (double j : jitter) jit_mean += j;
  jit_mean /= static_cast<double>(jitter.size());
  for (const auto& p : t.packets) size_mean += p.size_bytes;
  size_mean /= static_cast<double>(t.packets.size());

  InflationConfig cfg;
  cfg.coefficient = 20.0;
  cfg.seed = 7;
  auto [out, report] = apply_inflation(t, cfg);
  ASSERT_EQ(out.packets.size(), t.packets.size());
  std::vector<double> new_jitter = compute_jitter(out);
  double x_jitter = cfg.coefficient * jit_mean;
  double x_size = cfg.coefficient * size_mean;
  EXPECT_EQ(out.packets.front().timestamp_us, t.packets.front().timestamp_us);
  for (size_t i = 1; i < jitter.size(); ++i) {
    EXPECT_GE(new_jitter[i], jitter[i]);
    EXPECT_LE(new_jitter[i], jitter[i] + x_jitter);
  }
  for (size_t i = 0; i < t.packets.size(); ++i) {
    EXPECT_GE(out.packets[i].size_bytes, t.packets[i].size_bytes);
    EXPECT_LE(out.packets[i].size_bytes, t.packets[i].size_bytes + std::ceil(x_size));
  }
  EXPECT_GE(report.delay_multiplier, 1.0);
  EXPECT_GE(report.byte_overhead, 0.0);
  EXPECT_DOUBLE_EQ(report.packet_overhead, 0.0);
}

TEST(Inflation, StddevBasisBounds) {
  Trace t = make_trace(400, 5);
  std::vector<double> jitter = compute_jitter(t);
  double mean = 0.0;
  for (double j : jitter) mean += j;
  mean /= static_cast<double>(jitter.size());
  double var = 0.0;
  for (double j : jitter) var += (j - mean) * (j - mean);
  double sd = std::sqrt(var / static_cast<double>(jitter.size()));

  InflationConfig cfg;
  cfg.coefficient = 15.0;
  cfg.basis = InflationBasis::Stddev;
  cfg.targets = InflationTargets::Jitter;
  auto [out, report] = apply_inflation(t, cfg);
  std::vector<double> new_jitter = compute_jitter(out);
  for (size_t i = 1; i < jitter.size(); ++i)
    EXPECT_LE(new_jitter[i], jitter[i] + cfg.coefficient * sd);
  // sizes untouched when targeting jitter only
  for (size_t i = 0; i < t.packets.size(); ++i)
    EXPECT_EQ(out.packets[i].size_bytes, t.packets[i].size_bytes);
  EXPECT_DOUBLE_EQ(report.byte_overhead, 0.0);
}

TEST(Inflation, SizeTargetLeavesTimingAlone) {
  Trace t = make_trace(300, 9);
  InflationConfig cfg;
  cfg.coefficient = 30.0;
  cfg.targets = InflationTargets::Size;
  auto [out, report] = apply_inflation(t, cfg);
  EXPECT_EQ(duration(out), duration(t));
  EXPECT_DOUBLE_EQ(report.delay_multiplier, 1.0);
  EXPECT_GT(report.byte_overhead, 0.0);
}

TEST(Inflation, DelayMultiplierNearHalfCoefficient) {
  // uniform [0, a*mean] additions average a*mean/2 per gap, so the
  // duration multiplier concentrates near 1 + a/2
  Trace t = make_trace(20000, 11);
  InflationConfig cfg;
  cfg.coefficient = 90.0;
  cfg.targets = InflationTargets::Jitter;
  auto [out, report] = apply_inflation(t, cfg);
  EXPECT_NEAR(report.delay_multiplier, 46.0, 2.0);
}

TEST(Inflation, Errors) {
  EXPECT_THROW(apply_inflation(Trace{}, InflationConfig{}), DataError);
  Trace t = make_trace(10, 1);
  InflationConfig bad;
  bad.coefficient = -1.0;
  EXPECT_THROW(apply_inflation(t, bad), ConfigError);
}

TEST(TriggerPool, ShapeAndDeterminism) {
  auto pool = make_trigger_pool(16, 50);
  ASSERT_EQ(pool.size(), 16u);
  std::set<int> sizes;
  for (const auto& p : pool) {
    ASSERT_EQ(p.sizes_bytes.size(), 50u);
    for (int s : p.sizes_bytes) {
      EXPECT_EQ(s, p.sizes_bytes[0]);  // constant within a pattern
      EXPECT_GE(s, 50);
      EXPECT_LE(s, 250);
    }
    sizes.insert(p.sizes_bytes[0]);
  }
  EXPECT_EQ(sizes.size(), 16u);  // distinct across patterns
  auto again = make_trigger_pool(16, 50);
  for (size_t i = 0; i < pool.size(); ++i)
    EXPECT_EQ(pool[i].sizes_bytes, again[i].sizes_bytes);
  EXPECT_NE(make_trigger_pool(16, 50, 50, 250, 2)[0].sizes_bytes[0],
            pool[0].sizes_bytes[0]);
}

TEST(TriggerPool, Errors) {
  EXPECT_THROW(make_trigger_pool(0, 10), ConfigError);
  EXPECT_THROW(make_trigger_pool(4, 0), ConfigError);
  EXPECT_THROW(make_trigger_pool(4, 10, 250, 50), ConfigError);
}

TEST(Injection, ZeroKIsIdentity) {
  Trace t = make_trace(1200, 13);
  InjectionConfig cfg;  // k = 0
  auto [out, report] = apply_injection(t, cfg);
  ASSERT_EQ(out.packets.size(), t.packets.size());
  for (size_t i = 0; i < t.packets.size(); ++i) {
    EXPECT_EQ(out.packets[i].timestamp_us, t.packets[i].timestamp_us);
    EXPECT_EQ(out.packets[i].size_bytes, t.packets[i].size_bytes);
  }
  EXPECT_DOUBLE_EQ(report.packet_overhead, 0.0);
  EXPECT_DOUBLE_EQ(report.byte_overhead, 0.0);
  EXPECT_DOUBLE_EQ(report.delay_multiplier, 1.0);
}

TEST(Injection, ConservationAndExactOverheads) {
  const int n = 1750;  // 3 complete spans of 500, plus a remainder
  Trace t = make_trace(n, 17);
  InjectionConfig cfg;
  cfg.packets_per_span = 35;
  cfg.span = 500;
  cfg.pool = make_trigger_pool(16, 50);
  auto [out, report] = apply_injection(t, cfg);

  long spans = n / cfg.span;
  ASSERT_EQ(out.packets.size(), t.packets.size() + static_cast<size_t>(spans * 35));
  // packet overhead is exactly k*floor(n/span)/n
  EXPECT_DOUBLE_EQ(report.packet_overhead,
                   static_cast<double>(35 * spans) / static_cast<double>(n));

  double prev_ts = -1.0;
  for (const auto& p : out.packets) {
    EXPECT_GE(p.timestamp_us, prev_ts);  // monotone timeline
    prev_ts = p.timestamp_us;
  }

  // original packets survive in order: span originals, then k injected, ...
  double added_bytes = 0.0;
  size_t out_i = 0;
  for (long i = 0; i < n; ++i) {
    const auto& orig = t.packets[static_cast<size_t>(i)];
    const auto& got = out.packets[out_i++];
    EXPECT_EQ(got.size_bytes, orig.size_bytes) << i;
    if ((i + 1) % cfg.span == 0) {
      for (int k = 0; k < cfg.packets_per_span; ++k) {
        added_bytes += out.packets[out_i].size_bytes;
        ++out_i;
      }
    }
  }
  EXPECT_EQ(out_i, out.packets.size());
  EXPECT_DOUBLE_EQ(report.byte_overhead, added_bytes / total_bytes(t));
}

TEST(Injection, ExactSevenPercentByteCase) {
  // spec sweep point: 500-packet spans, k = 35, uniform sizes -> when every
  // original and injected packet has the same size, byte overhead is
  // exactly k/span per complete span
  Trace t;
  t.epoch_tag = "day-a";
  for (int i = 0; i < 1000; ++i)
    t.packets.push_back({static_cast<double>(i) * 100.0, 100.0});
  InjectionConfig cfg;
  cfg.packets_per_span = 35;
  cfg.span = 500;
  TriggerPattern p;
  p.pattern_id = 0;
  p.sizes_bytes.assign(50, 100);
  cfg.pool = {p};
  auto [out, report] = apply_injection(t, cfg);
  EXPECT_DOUBLE_EQ(report.packet_overhead, 0.07);
  EXPECT_DOUBLE_EQ(report.byte_overhead, 0.07);
}

TEST(Injection, InjectedJitterBounded) {
  Trace t = make_trace(1000, 19);
  std::vector<double> jitter = compute_jitter(t);
  double mean_jitter = 0.0;
  for (double j : jitter) mean_jitter += j;
  mean_jitter /= static_cast<double>(jitter.size());

  InjectionConfig cfg;
  cfg.packets_per_span = 10;
  cfg.span = 100;
  cfg.pool = make_trigger_pool(4, 10);
  auto [out, report] = apply_injection(t, cfg);
  std::vector<double> new_jitter = compute_jitter(out);
  for (double j : new_jitter) EXPECT_LE(j, std::max(5000.0, mean_jitter) + 1e-9);
  EXPECT_GE(report.delay_multiplier, 1.0);
  // each injected gap is at most the mean original jitter, so total delay
  // growth is bounded by k*spans*mean
  double max_extra = 10.0 * 10.0 * mean_jitter;
  EXPECT_LE(duration(out), duration(t) + max_extra + 1e-6);
}

TEST(Injection, PerDayRotationKeyedOnDayAndSite) {
  auto pool = make_trigger_pool(16, 50);
  InjectionConfig cfg;
  cfg.packets_per_span = 20;
  cfg.span = 250;
  cfg.pool = pool;
  cfg.rotation = TriggerRotation::PerDaySimulated;

  auto injected_size = [&](const Trace& t, std::uint64_t seed) {
    InjectionConfig c = cfg;
    c.seed = seed;
    auto [out, rep] = apply_injection(t, c);
    (void)rep;
    return out.packets[250].size_bytes;  // first injected packet
  };

  // same (day, site), different content and rng seeds -> same pattern
  Trace a = make_trace(600, 23, 4, "day-a");
  Trace b = make_trace(600, 24, 4, "day-a");
  EXPECT_EQ(injected_size(a, 1), injected_size(b, 99));

  // changing the day reassigns the pattern for at least one of several sites
  bool any_differ = false;
  for (int site = 0; site < 6; ++site) {
    Trace d1 = make_trace(600, 30 + static_cast<std::uint64_t>(site), site, "day-a");
    Trace d2 = d1;
    d2.epoch_tag = "day-b";
    if (injected_size(d1, 1) != injected_size(d2, 1)) any_differ = true;
  }
  EXPECT_TRUE(any_differ);

  // within a trace, every insertion uses the same (day, site) pattern
  Trace long_trace = make_trace(1500, 31, 2, "day-a");
  InjectionConfig c = cfg;
  auto [out, rep] = apply_injection(long_trace, c);
  (void)rep;
  std::set<double> inj_sizes;
  size_t out_i = 0;
  for (long i = 0; i < 1500; ++i) {
    ++out_i;
    if ((i + 1) % c.span == 0)
      for (int k = 0; k < c.packets_per_span; ++k) inj_sizes.insert(out.packets[out_i++].size_bytes);
  }
  EXPECT_EQ(inj_sizes.size(), 1u);
}

TEST(Injection, PerTraceRotationVaries) {
  auto pool = make_trigger_pool(16, 10);
  InjectionConfig cfg;
  cfg.packets_per_span = 10;
  cfg.span = 100;
  cfg.pool = pool;
  cfg.rotation = TriggerRotation::PerTrace;
  Trace t = make_trace(2000, 37);
  auto [out, rep] = apply_injection(t, cfg);
  (void)rep;
  std::set<double> inj_sizes;
  size_t out_i = 0;
  for (long i = 0; i < 2000; ++i) {
    ++out_i;
    if ((i + 1) % cfg.span == 0)
      for (int k = 0; k < cfg.packets_per_span; ++k)
        inj_sizes.insert(out.packets[out_i++].size_bytes);
  }
  EXPECT_GT(inj_sizes.size(), 1u);  // 20 insertions, 16 patterns
}

TEST(Injection, Errors) {
  EXPECT_THROW(apply_injection(Trace{}, InjectionConfig{}), DataError);
  Trace t = make_trace(10, 1);
  InjectionConfig bad;
  bad.packets_per_span = -1;
  EXPECT_THROW(apply_injection(t, bad), ConfigError);
  InjectionConfig no_pool;
  no_pool.packets_per_span = 5;
  EXPECT_THROW(apply_injection(t, no_pool), ConfigError);
  InjectionConfig bad_span;
  bad_span.packets_per_span = 5;
  bad_span.span = 0;
  bad_span.pool = make_trigger_pool(2, 5);
  EXPECT_THROW(apply_injection(t, bad_span), ConfigError);
}

TEST(DefendDataset, TestOnlySkipsTrainTraces) {
  std::vector<Trace> traces = {make_trace(600, 41, 0), make_trace(600, 42, 1)};
  DefenseConfig cfg;
  cfg.kind = DefenseConfig::Kind::Inflation;
  cfg.inflation.coefficient = 20.0;
  DefenseOutcome out = defend_dataset(traces, cfg, DefendMode::TestOnly, {true, false});
  // train trace untouched
  EXPECT_EQ(out.traces[0].packets[10].timestamp_us, traces[0].packets[10].timestamp_us);
  EXPECT_EQ(out.traces[0].packets[10].size_bytes, traces[0].packets[10].size_bytes);
  // test trace defended
  EXPECT_GT(duration(out.traces[1]), duration(traces[1]));
  EXPECT_GT(out.mean_overhead.delay_multiplier, 1.0);
}

TEST(DefendDataset, OrderIndependentPerTrace) {
  Trace a = make_trace(600, 51, 0);
  Trace b = make_trace(600, 52, 1);
  DefenseConfig cfg;
  cfg.kind = DefenseConfig::Kind::Inflation;
  cfg.inflation.coefficient = 10.0;
  DefenseOutcome fwd = defend_dataset({a, b}, cfg);
  DefenseOutcome rev = defend_dataset({b, a}, cfg);
  for (size_t i = 0; i < a.packets.size(); ++i) {
    EXPECT_EQ(fwd.traces[0].packets[i].timestamp_us, rev.traces[1].packets[i].timestamp_us);
    EXPECT_EQ(fwd.traces[0].packets[i].size_bytes, rev.traces[1].packets[i].size_bytes);
  }
}
