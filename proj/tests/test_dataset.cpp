#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "ppgglu/dataset.hpp"
#include "ppgglu/signal.hpp"

using namespace ppgglu;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("ppgglu_test_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_fixture(const fs::path& root) {
  fs::create_directories(root / "signals");
  std::ofstream labels(root / "labels.csv");
  labels << "record_id,subject_id,glucose_mgdl,fs_hz\n";
  labels << "r1,s1,95,100\n";
  labels << "r2,s2,140.5,100\n";
  for (const char* id : {"r1", "r2"}) {
    std::ofstream sig(root / "signals" / (std::string(id) + ".csv"));
    for (int i = 0; i < 250; ++i) sig << (0.1 * i) << "\n";
  }
}

}  // namespace

TEST_CASE("load_dataset fixture round-trip") {
  TempDir dir("load");
  write_fixture(dir.path);
  auto ds = load_dataset(dir.path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.records[0].record_id == "r1");
  CHECK(ds.records[0].glucose_mgdl == 95.0);
  CHECK(ds.records[0].fs == 100.0);
  CHECK(ds.records[0].samples.size() == 250);
  CHECK(ds.records[1].glucose_mgdl == 140.5);
  CHECK(ds.label_stats.min == 95.0);
  CHECK(ds.label_stats.max == 140.5);
}

TEST_CASE("load_dataset error contracts") {
  TempDir dir("errors");
  CHECK_THROWS_AS(load_dataset(dir.path), MissingFile);

  write_fixture(dir.path);
  fs::remove(dir.path / "signals" / "r2.csv");
  try {
    load_dataset(dir.path);
    FAIL("expected MissingFile");
  } catch (const MissingFile& e) {
    CHECK(std::string(e.what()).find("r2") != std::string::npos);
  }

  write_fixture(dir.path);
  std::ofstream(dir.path / "labels.csv", std::ios::app) << "r3,s3,abc,100\n";
  try {
    load_dataset(dir.path);
    FAIL("expected MalformedCsv");
  } catch (const MalformedCsv& e) {
    CHECK(std::string(e.what()).find("row 4") != std::string::npos);
  }

  write_fixture(dir.path);
  std::ofstream(dir.path / "labels.csv", std::ios::app) << "r1,s1,100,100\n";
  CHECK_THROWS_AS(load_dataset(dir.path), MalformedCsv);

  write_fixture(dir.path);
  std::ofstream(dir.path / "labels.csv", std::ios::app) << "r3,s3,700,100\n";
  CHECK_THROWS_AS(load_dataset(dir.path), LabelOutOfRange);
}

TEST_CASE("save then load preserves records") {
  auto ds = synth_generate(3, 5, 300.0, 3.0);
  TempDir dir("roundtrip");
  save_dataset(ds, dir.path);
  auto back = load_dataset(dir.path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.records[i].record_id == ds.records[i].record_id);
    CHECK(back.records[i].glucose_mgdl == ds.records[i].glucose_mgdl);
    CHECK(back.records[i].samples == ds.records[i].samples);
  }
}

TEST_CASE("label_histogram") {
  Dataset ds;
  for (double g : {90.0, 100.0, 140.0}) {
    PpgRecord r;
    r.glucose_mgdl = g;
    ds.records.push_back(r);
  }
  auto h = label_histogram(ds, {98.0, 138.0});
  CHECK(h.underflow == 1);
  CHECK(h.counts == std::vector<std::size_t>{1});
  CHECK(h.overflow == 1);

  auto all = label_histogram(ds, {0.0, 1000.0});
  CHECK(all.underflow == 0);
  CHECK(all.counts[0] == 3);
  CHECK(all.overflow == 0);

  CHECK_THROWS_AS(label_histogram(ds, {100.0}), InvalidBins);
  CHECK_THROWS_AS(label_histogram(ds, {100.0, 100.0}), InvalidBins);
}

TEST_CASE("shuffle determinism and permutation property") {
  auto p1 = shuffle(50, 123);
  auto p2 = shuffle(50, 123);
  CHECK(p1 == p2);
  CHECK(shuffle(50, 124) != p1);

  std::sort(p1.begin(), p1.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(p1[i] == i);

  CHECK(shuffle(1, 7) == std::vector<std::size_t>{0});
}

TEST_CASE("split sizes and partition property") {
  auto s67 = split(67, {}, 1);
  CHECK(s67.train.size() == 46);
  CHECK(s67.val.size() == 10);
  CHECK(s67.test.size() == 11);

  auto s100 = split(100, {}, 1);
  CHECK(s100.train.size() == 70);
  CHECK(s100.val.size() == 15);
  CHECK(s100.test.size() == 15);

  CHECK_THROWS_AS(split(2, {}, 1), TooFewSamples);

  // disjointness + coverage across a range of n
  for (std::size_t n : {3u, 7u, 19u, 67u, 128u, 333u, 500u}) {
    auto s = split(n, {}, 42 + n);
    std::set<std::size_t> seen;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (auto i : *part) CHECK(seen.insert(i).second);
    CHECK(seen.size() == n);
    CHECK(*seen.rbegin() == n - 1);
  }
}

TEST_CASE("kfold sizes and partition property") {
  auto plan = kfold(67, 10, 3);
  REQUIRE(plan.folds.size() == 10);
  std::vector<std::size_t> sizes;
  for (const auto& f : plan.folds) sizes.push_back(f.size());
  CHECK(std::count(sizes.begin(), sizes.end(), 7) == 7);
  CHECK(std::count(sizes.begin(), sizes.end(), 6) == 3);

  auto singletons = kfold(10, 10, 3);
  for (const auto& f : singletons.folds) CHECK(f.size() == 1);

  CHECK_THROWS_AS(kfold(9, 10, 3), TooFewSamples);

  for (std::size_t n : {10u, 23u, 67u, 200u})
    for (std::size_t k : {2u, 5u, 10u}) {
      auto p = kfold(n, k, n * 31 + k);
      std::set<std::size_t> seen;
      for (const auto& f : p.folds)
        for (auto i : f) CHECK(seen.insert(i).second);
      CHECK(seen.size() == n);
    }
}

TEST_CASE("synth_generate labels, bounds, determinism") {
  auto ds = synth_generate(5, 77, 300.0, 3.0);
  REQUIRE(ds.size() == 5);
  for (const auto& r : ds.records) {
    CHECK(r.glucose_mgdl >= 113.0);  // 70 + 25 + 18
    CHECK(r.glucose_mgdl <= 167.0);  // 70 + 55 + 42
    CHECK(r.samples.size() == 900);
  }

  auto again = synth_generate(5, 77, 300.0, 3.0);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(ds.records[i].samples == again.records[i].samples);

  // labels recompute exactly from the drawn parameters
  auto params = synth_draw_params(5, 77);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(ds.records[i].glucose_mgdl == synth_label(params[i]));
}

TEST_CASE("synthetic record preprocesses into a valid window") {
  auto ds = synth_generate(2, 9);
  for (const auto& r : ds.records) {
    auto w = preprocess(r);
    CHECK(w.values.size() == 300);
    CHECK(*std::min_element(w.values.begin(), w.values.end()) >= 0.0);
    CHECK(*std::max_element(w.values.begin(), w.values.end()) <= 1.0);
  }
}
