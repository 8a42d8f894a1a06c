#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "wflab/dataset_io.hpp"
#include "wflab/rng.hpp"
#include "wflab/traffic.hpp"

using namespace wflab;

namespace {

Trace make_trace(const std::vector<double>& timestamps, double size = 100.0) {
  Trace t;
  for (double ts : timestamps) t.packets.push_back({ts, size});
  return t;
}

SampleVector make_sample(std::vector<float> values, int site = 0, int env = 0) {
  SampleVector s;
  s.values = std::move(values);
  s.site_label = site;
  s.env_id = env;
  return s;
}

}  // namespace

TEST(Jitter, Definition) {
  EXPECT_EQ(compute_jitter(make_trace({0, 5, 12})), (std::vector<double>{0, 5, 7}));
  EXPECT_EQ(compute_jitter(make_trace({3})), (std::vector<double>{0}));
  EXPECT_EQ(compute_jitter(make_trace({0, 0, 0})), (std::vector<double>{0, 0, 0}));
}

TEST(Jitter, Errors) {
  EXPECT_THROW(compute_jitter(Trace{}), DataError);
  EXPECT_THROW(compute_jitter(make_trace({5, 3})), DataError);
}

TEST(Jitter, CumulativeSumReconstructsTimestamps) {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Trace t;
    double ts = rng.uniform(0, 100);
    for (int i = 0; i < 200; ++i) {
      t.packets.push_back({ts, 100.0});
      ts += rng.uniform(0, 50);
    }
    auto j = compute_jitter(t);
    double cum = 0.0;
    for (size_t i = 0; i < j.size(); ++i) {
      cum += j[i];
      EXPECT_DOUBLE_EQ(cum, t.packets[i].timestamp_us - t.packets[0].timestamp_us);
    }
  }
}

TEST(Windows, CountArithmetic) {
  Trace t;
  for (int i = 0; i < 1200; ++i) t.packets.push_back({static_cast<double>(i), 1.0});
  EXPECT_EQ(extract_windows(t, 500, 500).size(), 2u);
  t.packets.resize(499);
  EXPECT_EQ(extract_windows(t, 500, 500).size(), 0u);
  t.packets.resize(499);
  for (int i = 499; i < 600; ++i) t.packets.push_back({static_cast<double>(i), 1.0});
  EXPECT_EQ(extract_windows(t, 500, 100).size(), 2u);
}

TEST(Windows, SeamlessJitterAcrossBoundaries) {
  // jitter of a mid-stream window's first packet is its true delta, not 0
  Trace t = make_trace({0, 10, 30, 70, 150, 310});
  auto w = extract_windows(t, 3, 3);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_FLOAT_EQ(w[0].values[0], 0.0f);    // trace start
  EXPECT_FLOAT_EQ(w[1].values[0], 40.0f);   // 70 - 30, crosses the boundary
  EXPECT_FLOAT_EQ(w[1].values[2], 80.0f);
}

TEST(Windows, BruteForceOracle) {
  // [DERIVED]-style oracle: enumerate every offset o with o % stride == 0
  // and o + window <= N, building each window from scratch.
  Rng rng(42);
  for (int rep = 0; rep < 200; ++rep) {
    int n = 1 + static_cast<int>(rng.uniform_index(800));
    int window = 1 + static_cast<int>(rng.uniform_index(60));
    int stride = 1 + static_cast<int>(rng.uniform_index(60));
    Trace t;
    t.site_label = static_cast<int>(rng.uniform_index(5));
    t.env_id = static_cast<int>(rng.uniform_index(3));
    double ts = 0.0;
    for (int i = 0; i < n; ++i) {
      ts += rng.uniform(0, 100);
      t.packets.push_back({ts, std::floor(rng.uniform(64, 1500))});
    }
    auto got = extract_windows(t, window, stride);
    auto jitter = compute_jitter(t);
    std::vector<SampleVector> expect;
    for (int o = 0; o + window <= n; o += stride) {
      SampleVector s;
      s.site_label = t.site_label;
      s.env_id = t.env_id;
      for (int i = 0; i < window; ++i) {
        s.values.push_back(static_cast<float>(jitter[static_cast<size_t>(o + i)]));
        s.values.push_back(static_cast<float>(t.packets[static_cast<size_t>(o + i)].size_bytes));
      }
      expect.push_back(std::move(s));
    }
    ASSERT_EQ(got.size(), expect.size());
    for (size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].values, expect[i].values);
      EXPECT_EQ(got[i].site_label, expect[i].site_label);
      EXPECT_EQ(got[i].env_id, expect[i].env_id);
    }
  }
}

TEST(Mask, Definitions) {
  SampleVector s = make_sample({2, 100, 3, 200});
  EXPECT_EQ(apply_channel_mask(s, ChannelMask::Both).values, s.values);
  EXPECT_EQ(apply_channel_mask(s, ChannelMask::JitterOnly).values,
            (std::vector<float>{2, 0, 3, 0}));
  EXPECT_EQ(apply_channel_mask(s, ChannelMask::SizeOnly).values,
            (std::vector<float>{0, 100, 0, 200}));
  auto both_masked =
      apply_channel_mask(apply_channel_mask(s, ChannelMask::SizeOnly), ChannelMask::JitterOnly);
  EXPECT_EQ(both_masked.values, (std::vector<float>{0, 0, 0, 0}));
}

TEST(Mask, Idempotent) {
  Rng rng(3);
  std::vector<float> vals;
  for (int i = 0; i < 1000; ++i) vals.push_back(static_cast<float>(rng.uniform(0, 500)));
  SampleVector s = make_sample(vals, 4, 2);
  for (ChannelMask m : {ChannelMask::Both, ChannelMask::JitterOnly, ChannelMask::SizeOnly}) {
    auto once = apply_channel_mask(s, m);
    auto twice = apply_channel_mask(once, m);
    EXPECT_EQ(once.values, twice.values);
    EXPECT_EQ(once.site_label, 4);
  }
}

TEST(Norm, ZeroVarianceGuard) {
  // constant jitter channel -> normalized jitter all 0
  std::vector<SampleVector> train{make_sample({5, 100, 5, 200})};
  NormStats st = fit_norm_stats(train);
  EXPECT_DOUBLE_EQ(st.jitter_std, 0.0);
  auto n = apply_norm(train[0], st);
  EXPECT_FLOAT_EQ(n.values[0], 0.0f);
  EXPECT_FLOAT_EQ(n.values[2], 0.0f);
}

TEST(Norm, HandArithmetic) {
  // jitter {0, 2}: mean 1, population std 1 -> {-1, +1}
  std::vector<SampleVector> train{make_sample({0, 100, 2, 100})};
  NormStats st = fit_norm_stats(train);
  EXPECT_DOUBLE_EQ(st.jitter_mean, 1.0);
  EXPECT_DOUBLE_EQ(st.jitter_std, 1.0);
  auto n = apply_norm(train[0], st);
  EXPECT_FLOAT_EQ(n.values[0], -1.0f);
  EXPECT_FLOAT_EQ(n.values[2], 1.0f);
}

TEST(Norm, FittingSetHasZeroMeanAfterNorm) {
  Rng rng(9);
  std::vector<SampleVector> train;
  for (int i = 0; i < 20; ++i) {
    std::vector<float> vals;
    for (int j = 0; j < 100; ++j) vals.push_back(static_cast<float>(rng.uniform(0, 2000)));
    train.push_back(make_sample(vals));
  }
  NormStats st = fit_norm_stats(train);
  double sum_j = 0.0, sum_s = 0.0;
  long n = 0;
  for (const auto& s : train) {
    auto normed = apply_norm(s, st);
    for (size_t i = 0; i + 1 < normed.values.size(); i += 2) {
      sum_j += normed.values[i];
      sum_s += normed.values[i + 1];
      ++n;
    }
  }
  EXPECT_NEAR(sum_j / n, 0.0, 1e-6);
  EXPECT_NEAR(sum_s / n, 0.0, 1e-6);
}

TEST(Norm, Errors) {
  EXPECT_THROW(fit_norm_stats({}), DataError);
  EXPECT_THROW(fit_norm_stats({make_sample({1, 2})}, 0.0), ConfigError);
}

TEST(Split, HalfQuarterQuarterRatios) {
  // 40,000 samples of one site at (0.5, 0.25, 0.25) -> 20k / 10k / 10k
  std::vector<SampleVector> samples(40000, make_sample({1, 2}, 7));
  DatasetSplit sp = split_dataset(samples, 0.5, 0.25, 0.25, 1);
  EXPECT_EQ(sp.train.size(), 20000u);
  EXPECT_EQ(sp.validation.size(), 10000u);
  EXPECT_EQ(sp.test.size(), 10000u);
}

TEST(Split, SmallRounding) {
  std::vector<SampleVector> samples(4, make_sample({1, 2}, 0));
  DatasetSplit sp = split_dataset(samples, 0.5, 0.25, 0.25, 1);
  EXPECT_EQ(sp.train.size(), 2u);
  EXPECT_EQ(sp.validation.size(), 1u);
  EXPECT_EQ(sp.test.size(), 1u);
}

TEST(Split, DeterministicAndStratified) {
  Rng rng(5);
  std::vector<SampleVector> samples;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 37 + 11 * c; ++i)
      samples.push_back(make_sample({static_cast<float>(rng.uniform(0, 1)), 1}, c));
  DatasetSplit a = split_dataset(samples, 0.5, 0.25, 0.25, 99);
  DatasetSplit b = split_dataset(samples, 0.5, 0.25, 0.25, 99);
  auto key = [](const DatasetSplit& s) {
    std::ostringstream o;
    for (const auto& x : s.train) o << x.values[0] << ",";
    for (const auto& x : s.validation) o << x.values[0] << ";";
    for (const auto& x : s.test) o << x.values[0] << "!";
    return o.str();
  };
  EXPECT_EQ(key(a), key(b));
  EXPECT_EQ(a.train.size() + a.validation.size() + a.test.size(), samples.size());
  // per-class counts match floor arithmetic
  for (int c = 0; c < 4; ++c) {
    size_t n = static_cast<size_t>(37 + 11 * c);
    auto count = [&](const std::vector<SampleVector>& part) {
      size_t k = 0;
      for (const auto& s : part)
        if (s.site_label == c) ++k;
      return k;
    };
    EXPECT_EQ(count(a.validation), n / 4);
    EXPECT_EQ(count(a.test), n / 4);
    EXPECT_EQ(count(a.train), n - 2 * (n / 4));
  }
  // union is a permutation of the input: multiset of first values matches
  std::multiset<float> in, out;
  for (const auto& s : samples) in.insert(s.values[0]);
  for (const auto& s : a.train) out.insert(s.values[0]);
  for (const auto& s : a.validation) out.insert(s.values[0]);
  for (const auto& s : a.test) out.insert(s.values[0]);
  EXPECT_EQ(in, out);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_dataset({}, 0.5, 0.25, 0.25, 1), DataError);
  std::vector<SampleVector> samples(4, make_sample({1, 2}));
  EXPECT_THROW(split_dataset(samples, 0.5, 0.3, 0.25, 1), ConfigError);
}

TEST(IngestCsv, Basics) {
  std::istringstream in("0,1500\n5,40\n");
  Trace t = ingest_csv(in, 3, 1);
  ASSERT_EQ(t.packets.size(), 2u);
  EXPECT_DOUBLE_EQ(t.packets[0].size_bytes, 1500);
  EXPECT_DOUBLE_EQ(t.packets[1].timestamp_us, 5);
  EXPECT_EQ(t.site_label, 3);
  EXPECT_EQ(t.env_id, 1);
}

TEST(IngestCsv, HeaderAndBlankLines) {
  std::istringstream in("timestamp_us,size_bytes\n\n0,100\n\n7,200\n");
  Trace t = ingest_csv(in, 0, 0);
  ASSERT_EQ(t.packets.size(), 2u);
  EXPECT_DOUBLE_EQ(t.packets[1].timestamp_us, 7);
}

TEST(IngestCsv, Errors) {
  {
    std::istringstream in("5,x\n");
    try {
      ingest_csv(in, 0, 0);
      FAIL() << "expected DataError";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
  }
  {
    std::istringstream in("5,100\n3,100\n");
    EXPECT_THROW(ingest_csv(in, 0, 0), DataError);
  }
}

TEST(DatasetIo, RoundTrip) {
  std::vector<SampleVector> samples;
  Rng rng(77);
  for (int i = 0; i < 3; ++i) {
    std::vector<float> vals;
    for (int j = 0; j < 10; ++j) vals.push_back(static_cast<float>(rng.uniform(0, 1e6)));
    samples.push_back(make_sample(vals, i, 2 * i));
  }
  std::stringstream buf;
  write_dataset(buf, samples);
  auto back = read_dataset(buf);
  ASSERT_EQ(back.size(), samples.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].values, samples[i].values);
    EXPECT_EQ(back[i].site_label, samples[i].site_label);
    EXPECT_EQ(back[i].env_id, samples[i].env_id);
  }
}

TEST(DatasetIo, EmptyDataset) {
  std::stringstream buf;
  write_dataset(buf, {});
  EXPECT_TRUE(read_dataset(buf).empty());
}

TEST(DatasetIo, DistinctErrors) {
  std::vector<SampleVector> samples{make_sample({1, 2, 3, 4}, 0, 0)};
  std::stringstream good;
  write_dataset(good, samples);
  std::string bytes = good.str();

  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream in(bad);
    try {
      read_dataset(in);
      FAIL();
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), FormatError::Kind::BadMagic);
    }
  }
  {
    std::string bad = bytes;
    bad[4] = 9;  // version
    std::istringstream in(bad);
    try {
      read_dataset(in);
      FAIL();
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), FormatError::Kind::VersionMismatch);
    }
  }
  {
    std::string bad = bytes.substr(0, bytes.size() - 4);  // drop payload tail
    std::istringstream in(bad);
    try {
      read_dataset(in);
      FAIL();
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), FormatError::Kind::Truncated);
    }
  }
  {
    // header says 2 samples, payload holds 1
    std::string bad = bytes;
    bad[6] = 2;
    std::istringstream in(bad);
    try {
      read_dataset(in);
      FAIL();
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), FormatError::Kind::Truncated);
    }
  }
}

TEST(DatasetIo, RandomizedRoundTrips) {
  Rng rng(123);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<SampleVector> samples;
    int count = static_cast<int>(rng.uniform_index(8));
    int len = 1 + static_cast<int>(rng.uniform_index(20));
    for (int i = 0; i < count; ++i) {
      std::vector<float> vals;
      for (int j = 0; j < 2 * len; ++j)
        vals.push_back(static_cast<float>(rng.normal(0, 1e5)));
      samples.push_back(make_sample(vals, static_cast<int>(rng.uniform_index(100)),
                                    static_cast<int>(rng.uniform_index(16))));
    }
    std::stringstream buf;
    write_dataset(buf, samples);
    auto back = read_dataset(buf);
    ASSERT_EQ(back.size(), samples.size());
    for (size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].values, samples[i].values);
  }
}
