#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "ocil/data.hpp"
#include "test_util.hpp"

using namespace ocil;
using ocil::testing::make_sample;
using ocil::testing::temp_dir;

namespace {

std::vector<ClassId> iota_classes(int n) {
  std::vector<ClassId> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST(Schedule, HundredClassesInTwentySteps) {
  const auto s = build_schedule(iota_classes(100), 20, 20, 1);
  EXPECT_EQ(s.initial_classes.size(), 20u);
  ASSERT_EQ(s.steps.size(), 4u);
  for (const auto& step : s.steps) EXPECT_EQ(step.size(), 20u);
}

TEST(Schedule, ThreeClassesLeaveOneStep) {
  const auto s = build_schedule({0, 1, 2}, 2, 1, 0);
  ASSERT_EQ(s.steps.size(), 1u);
  EXPECT_EQ(s.steps[0].size(), 1u);
}

TEST(Schedule, SameSeedSamePartition) {
  const auto a = build_schedule(iota_classes(10), 2, 4, 7);
  const auto b = build_schedule(iota_classes(10), 2, 4, 7);
  EXPECT_EQ(a, b);
  // 8 remaining classes in steps of 4
  EXPECT_EQ(a.steps.size(), 2u);
}

TEST(Schedule, RemainderFormsSmallerFinalStep) {
  const auto s = build_schedule(iota_classes(10), 2, 3, 0);
  ASSERT_EQ(s.steps.size(), 3u);
  EXPECT_EQ(s.steps.back().size(), 2u);
}

TEST(Schedule, SeedsPermuteClassOrder) {
  std::set<std::vector<ClassId>> orders;
  for (std::uint64_t seed = 0; seed < 8; ++seed) orders.insert(build_schedule(iota_classes(10), 2, 2, seed).seen_through(4));
  EXPECT_GT(orders.size(), 1u);
}

TEST(Schedule, PartitionIsExhaustiveAndDisjoint) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = build_schedule(iota_classes(17), 3, 4, seed);
    std::vector<ClassId> all;
    for (std::size_t t = 0; t < s.task_count(); ++t)
      all.insert(all.end(), s.task(t).begin(), s.task(t).end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, iota_classes(17));
  }
}

TEST(Schedule, TooFewClassesRejected) {
  EXPECT_THROW(build_schedule({0, 1, 2}, 2, 2, 0), InvalidSchedule);
  EXPECT_THROW(build_schedule({0, 1, 2}, 0, 1, 0), InvalidSchedule);
}

TEST(Blobs, CountsHonoredExactly) {
  const auto p = generate_blob_stream(2, 4, {91, 1199}, 1.0, 3);
  const auto counts = p.counts();
  EXPECT_EQ(counts.at(0), 91u);
  EXPECT_EQ(counts.at(1), 1199u);
  for (const auto& [c, v] : p.test) EXPECT_GE(v.size(), 1u);
  for (const auto& [c, v] : p.train) EXPECT_GE(v.size(), 1u);
}

TEST(Blobs, ZeroSpreadGivesIdenticalSamples) {
  const auto p = generate_blob_stream(3, 5, {10, 10, 10}, 0.0, 1);
  for (ClassId c = 0; c < 3; ++c) {
    const auto& ref = p.train.at(c).front().payload;
    for (const auto& s : p.train.at(c)) EXPECT_EQ(s.payload, ref);
    for (const auto& s : p.test.at(c)) EXPECT_EQ(s.payload, ref);
  }
}

TEST(Blobs, CountBelowTwoRejected) {
  EXPECT_THROW(generate_blob_stream(2, 3, {5, 1}, 1.0, 0), InvalidDataset);
  EXPECT_THROW(generate_blob_stream(2, 3, {5}, 1.0, 0), InvalidDataset);
}

TEST(Blobs, MultiModalClassesSeparableByNearestCentroid) {
  BlobOptions opts;
  opts.modes_per_class = 2;
  opts.mode_offset = 3.0;
  opts.min_separation = 10.0;
  const auto p = generate_blob_stream(4, 6, {200, 200, 200, 200}, 0.1, 11, opts);

  // Centroids of each (class, sub-cluster) from the training data: split
  // every class into two groups with 2-means seeded at its extreme points.
  std::vector<std::pair<ClassId, std::vector<double>>> centroids;
  for (const auto& [c, train] : p.train) {
    auto dist2 = [](const std::vector<double>& a, const std::vector<double>& b) {
      double d = 0;
      for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
      return d;
    };
    std::vector<double> a = train.front().payload, b = a;
    for (const auto& s : train)
      if (dist2(s.payload, a) > dist2(b, a)) b = s.payload;
    for (int it = 0; it < 10; ++it) {
      std::vector<double> sa(a.size(), 0), sb(a.size(), 0);
      int na = 0, nb = 0;
      for (const auto& s : train) {
        auto& acc = dist2(s.payload, a) <= dist2(s.payload, b) ? sa : sb;
        (&acc == &sa ? na : nb)++;
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += s.payload[k];
      }
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (na) a[k] = sa[k] / na;
        if (nb) b[k] = sb[k] / nb;
      }
    }
    centroids.emplace_back(c, a);
    centroids.emplace_back(c, b);
  }

  std::size_t right = 0, total = 0;
  for (const auto& [c, test] : p.test)
    for (const auto& s : test) {
      double best = 1e300;
      ClassId pred = -1;
      for (const auto& [cc, m] : centroids) {
        double d = 0;
        for (std::size_t k = 0; k < m.size(); ++k) d += (m[k] - s.payload[k]) * (m[k] - s.payload[k]);
        if (d < best) best = d, pred = cc;
      }
      right += pred == c;
      ++total;
    }
  EXPECT_GE(static_cast<double>(right) / total, 0.99);
}

TEST(Blobs, SameSeedSameData) {
  const auto a = generate_blob_stream(3, 4, {20, 30, 40}, 1.0, 5);
  const auto b = generate_blob_stream(3, 4, {20, 30, 40}, 1.0, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(Stream, EachTrainingSampleDeliveredOnce) {
  const auto p = generate_blob_stream(6, 3, {20, 25, 30, 35, 40, 45}, 1.0, 2);
  const auto schedule = build_schedule(p.classes(), 2, 2, 9);
  const auto streams = arrange_stream(p, schedule, 9);
  ASSERT_EQ(streams.tasks.size(), schedule.task_count());

  std::multiset<std::size_t> arrivals;
  std::size_t total_train = 0;
  for (const auto& [c, v] : p.train) total_train += v.size();
  for (std::size_t t = 0; t < streams.tasks.size(); ++t) {
    const std::set<ClassId> cls(schedule.task(t).begin(), schedule.task(t).end());
    StreamCursor cursor(streams.tasks[t]);
    while (!cursor.done())
      for (const auto& s : cursor.next(7)) {
        arrivals.insert(s.arrival_index);
        EXPECT_TRUE(cls.count(s.label));
      }
    EXPECT_EQ(cursor.consumed(), streams.tasks[t].size());
  }
  ASSERT_EQ(arrivals.size(), total_train);
  std::size_t expect = 0;
  for (auto a : arrivals) EXPECT_EQ(a, expect++);
}

TEST(Stream, TrainAndTestDisjoint) {
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 50; ++i) samples.push_back(make_sample({double(i)}, int(i % 3), i));
  const auto p = partition_samples(samples, 0.2, 4);
  for (const auto& [c, train] : p.train)
    for (const auto& s : train)
      for (const auto& t : p.test.at(c)) EXPECT_NE(s.arrival_index, t.arrival_index);
}

TEST(FeatureCsv, ThreeRows) {
  const auto dir = temp_dir("csv_three");
  const auto path = (dir / "a.csv").string();
  std::ofstream(path) << "0,1.5,2\n1,3,4\n0,-1,0.25\n";
  const auto samples = read_feature_csv(path);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[1].label, 1);
  EXPECT_EQ(samples[2].payload, (std::vector<double>{-1, 0.25}));
  const auto p = ingest_feature_csv(path);
  EXPECT_EQ(p.counts().at(0) + p.counts().at(1), 3u);
}

TEST(FeatureCsv, WrongArityNamesLine) {
  const auto dir = temp_dir("csv_ragged");
  const auto path = (dir / "a.csv").string();
  std::ofstream(path) << "0,1,2\n1,3,4\n1,5\n";
  try {
    read_feature_csv(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(FeatureCsv, NonNumericAndEmptyRejected) {
  const auto dir = temp_dir("csv_bad");
  const auto bad = (dir / "bad.csv").string();
  std::ofstream(bad) << "0,1,2\n1,x,4\n";
  try {
    read_feature_csv(bad);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  const auto empty = (dir / "empty.csv").string();
  std::ofstream{empty};
  EXPECT_THROW(read_feature_csv(empty), ParseError);
}

TEST(FeatureCsv, RoundTripIsExact) {
  const auto dir = temp_dir("csv_roundtrip");
  const auto path = (dir / "a.csv").string();
  const auto p = generate_blob_stream(3, 5, {10, 12, 14}, 2.0, 8);
  std::vector<Sample> all;
  for (const auto& [c, v] : p.train) all.insert(all.end(), v.begin(), v.end());
  write_feature_csv(path, all);
  const auto back = read_feature_csv(path);
  ASSERT_EQ(back.size(), all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(back[i].label, all[i].label);
    EXPECT_EQ(back[i].payload, all[i].payload);
  }
}

namespace {

void write_images(const std::string& path, std::uint32_t count, std::uint32_t rows,
                  std::uint32_t cols, unsigned char fill) {
  std::vector<unsigned char> data(std::size_t{count} * rows * cols, fill);
  detail::write_idx(path, {count, rows, cols}, data);
}

void write_labels(const std::string& path, std::uint32_t count) {
  std::vector<unsigned char> data(count);
  for (std::uint32_t i = 0; i < count; ++i) data[i] = static_cast<unsigned char>(i % 10);
  detail::write_idx(path, {count}, data);
}

}  // namespace

TEST(Idx, GrayscaleRecordsBecomeSamples) {
  const auto dir = temp_dir("idx_ok");
  const auto img = (dir / "img").string(), lbl = (dir / "lbl").string();
  write_images(img, 10, 28, 28, 255);
  write_labels(lbl, 10);
  const auto samples = read_idx_images(img, lbl);
  ASSERT_EQ(samples.size(), 10u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.shape, (ImageShape{28, 28, 1}));
    EXPECT_EQ(s.payload.size(), 784u);
    EXPECT_DOUBLE_EQ(s.payload[0], 1.0);
  }
  EXPECT_EQ(samples[7].label, 7);
}

TEST(Idx, ZeroImageIsZeroPayload) {
  const auto dir = temp_dir("idx_zero");
  const auto img = (dir / "img").string(), lbl = (dir / "lbl").string();
  write_images(img, 2, 4, 4, 0);
  write_labels(lbl, 2);
  for (const auto& s : read_idx_images(img, lbl))
    EXPECT_EQ(s.payload, std::vector<double>(16, 0.0));
}

TEST(Idx, CountMismatchRejected) {
  const auto dir = temp_dir("idx_mismatch");
  const auto img = (dir / "img").string(), lbl = (dir / "lbl").string();
  write_images(img, 10, 4, 4, 0);
  write_labels(lbl, 9);
  EXPECT_THROW(read_idx_images(img, lbl), FormatError);
}

TEST(Idx, BadMagicAndTruncationRejected) {
  const auto dir = temp_dir("idx_bad");
  const auto img = (dir / "img").string(), lbl = (dir / "lbl").string();
  write_labels(lbl, 3);
  std::ofstream(img, std::ios::binary) << "JUNKJUNKJUNK";
  EXPECT_THROW(read_idx_images(img, lbl), FormatError);

  write_images(img, 3, 4, 4, 9);
  std::filesystem::resize_file(img, std::filesystem::file_size(img) - 5);
  EXPECT_THROW(read_idx_images(img, lbl), FormatError);
}
