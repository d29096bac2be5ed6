#include <gtest/gtest.h>

#include "augflow/corpus.hpp"
#include "augflow/errors.hpp"
#include "test_support.hpp"

namespace augflow {
namespace {

using testing::read_file;
using testing::temp_dir;
using testing::write_file;

Dataset numbered(std::size_t n, const std::string& prefix, DatasetSplit split = DatasetSplit::train) {
  Dataset ds;
  ds.split = split;
  const auto s = split == DatasetSplit::val ? Split::val : Split::train;
  for (std::size_t i = 0; i < n; ++i) {
    ds.samples.push_back(make_sample(prefix + std::to_string(i), "q" + std::to_string(i), "a" + std::to_string(i), s));
  }
  return ds;
}

TEST(LoadDataset, AssignsFallbackIdFromLineIndex) {
  const auto dir = temp_dir("load");
  write_file(dir / "train.jsonl",
             R"({"messages":[{"role":"user","content":"2+2?"},{"role":"assistant","content":"4"}]})"
             "\n");
  const auto ds = load_dataset(dir / "train.jsonl", DatasetSplit::train);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.samples[0].id, "train_0");
  EXPECT_EQ(ds.samples[0].origin, Origin::original);
  EXPECT_EQ(ds.samples[0].query(), "2+2?");
  EXPECT_EQ(ds.samples[0].answer(), "4");
}

TEST(LoadDataset, EmptyFileGivesEmptyDataset) {
  const auto dir = temp_dir("empty");
  write_file(dir / "empty.jsonl", "");
  EXPECT_TRUE(load_dataset(dir / "empty.jsonl", DatasetSplit::train).empty());
}

TEST(LoadDataset, ThreeTurnsIsMalformedWithLineNumber) {
  const auto dir = temp_dir("three");
  write_file(dir / "bad.jsonl",
             R"({"messages":[{"role":"user","content":"a"},{"role":"assistant","content":"b"}]})"
             "\n"
             R"({"messages":[{"role":"user","content":"a"},{"role":"assistant","content":"b"},{"role":"user","content":"c"}]})"
             "\n");
  try {
    load_dataset(dir / "bad.jsonl", DatasetSplit::train);
    FAIL() << "expected MalformedRecord";
  } catch (const MalformedRecord& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDataset, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/augflow.jsonl", DatasetSplit::train), IoError);
}

TEST(WriteDataset, RoundTripsThreeSamples) {
  const auto dir = temp_dir("roundtrip");
  auto ds = numbered(3, "train_");
  ds.samples[2].origin = Origin::synthetic;
  ds.samples[2].based_on_example = "train_0";
  ds.samples[2].based_on_strategy = "Carry Chain Drills";
  write_dataset(ds, dir / "out.jsonl");
  const auto back = load_dataset(dir / "out.jsonl", DatasetSplit::train);
  EXPECT_EQ(back, ds);
}

TEST(WriteDataset, ValidationSampleInTrainingFileIsLeak) {
  const auto dir = temp_dir("leak");
  auto ds = numbered(2, "train_");
  ds.samples.push_back(make_sample("val_0", "q", "a", Split::val));
  EXPECT_THROW(write_dataset(ds, dir / "out.jsonl"), ValidationLeak);
  EXPECT_FALSE(std::filesystem::exists(dir / "out.jsonl"));
}

TEST(WriteDataset, EmptyDatasetGivesEmptyFile) {
  const auto dir = temp_dir("emptywrite");
  write_dataset(Dataset{}, dir / "out.jsonl");
  EXPECT_EQ(read_file(dir / "out.jsonl"), "");
}

TEST(MergeAugmented, SizesAdd) {
  const auto merged = merge_augmented(numbered(1000, "train_"), numbered(500, "syn_", DatasetSplit::synthetic));
  EXPECT_EQ(merged.size(), 1500u);
  EXPECT_EQ(merged.samples.front().id, "train_0");
  EXPECT_EQ(merged.samples[1000].id, "syn_0");
}

TEST(MergeAugmented, EmptySyntheticIsIdentity) {
  const auto train = numbered(5, "train_");
  EXPECT_EQ(merge_augmented(train, Dataset{{}, DatasetSplit::synthetic}).samples, train.samples);
}

TEST(MergeAugmented, CollidingIdIsDuplicate) {
  try {
    merge_augmented(numbered(3, "train_"), numbered(1, "train_", DatasetSplit::synthetic));
    FAIL() << "expected DuplicateId";
  } catch (const DuplicateId& e) {
    EXPECT_EQ(e.id(), "train_0");
  }
}

TEST(Subsample, TakesFiftyOfOneHundredTwenty) {
  const auto ds = numbered(120, "val_", DatasetSplit::val);
  const auto sub = subsample(ds, 50, 11);
  ASSERT_EQ(sub.size(), 50u);
  // Order preserved: indices strictly increase.
  std::size_t prev = 0;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const auto idx = std::stoul(sub.samples[i].id.substr(4));
    if (i > 0) EXPECT_GT(idx, prev);
    prev = idx;
  }
}

TEST(Subsample, ClampsToDatasetSize) { EXPECT_EQ(subsample(numbered(30, "v"), 50, 1).size(), 30u); }

TEST(Subsample, DeterministicForSeed) {
  const auto ds = numbered(120, "x");
  EXPECT_EQ(subsample(ds, 50, 42), subsample(ds, 50, 42));
  EXPECT_NE(subsample(ds, 50, 42), subsample(ds, 50, 43));
}

TEST(ValidationGuard, FindsIdsAndContent) {
  Dataset val;
  val.split = DatasetSplit::val;
  val.samples.push_back(make_sample("val_0", "Compute 123 + 45 for me.", "123 + 45 = 168\n#### 168", Split::val));
  val.samples.push_back(make_sample("val_1", "B", "B", Split::val));
  const ValidationGuard guard(val);

  EXPECT_TRUE(guard.is_validation_id("val_0"));
  EXPECT_FALSE(guard.is_validation_id("train_0"));
  EXPECT_TRUE(guard.leaks("prefix Compute 123 + 45 for me. suffix"));
  EXPECT_TRUE(guard.leaks("see val_1"));
  EXPECT_FALSE(guard.leaks("B is the answer"));  // short golds are ignored
  EXPECT_EQ(guard.redact("x Compute 123 + 45 for me. y"), "x [redacted] y");

  auto syn = make_sample("s1", "Compute 123 + 45 for me.", "ok");
  syn.origin = Origin::synthetic;
  syn.based_on_example = "train_0";
  EXPECT_THROW(guard.check(syn), ValidationLeak);
  syn.messages[0].content = "fresh question";
  syn.based_on_example = "val_0";
  EXPECT_THROW(guard.check(syn), ValidationLeak);
}

TEST(SampleJson, SyntheticRecordCarriesProvenance) {
  auto s = make_sample("b1-a1-0", "q", "a");
  s.origin = Origin::synthetic;
  s.based_on_example = "train_3";
  s.based_on_strategy = "Borrow Across Columns";
  const auto j = sample_to_json(s);
  EXPECT_EQ(j["sample_id"], "b1-a1-0");
  EXPECT_EQ(j["is_synthetic"], true);
  EXPECT_EQ(j["based_on_example"], "train_3");
  EXPECT_EQ(j["based_on_strategy"], "Borrow Across Columns");
}

}  // namespace
}  // namespace augflow
