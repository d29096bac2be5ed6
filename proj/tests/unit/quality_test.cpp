#include <gtest/gtest.h>

#include "augflow/quality.hpp"
#include "scripted_judge.hpp"
#include "test_support.hpp"

namespace augflow {
namespace {

using nlohmann::json;
using testing::bind_all;
using testing::judge_answer;
using testing::ScriptedProvider;

TEST(MakeVerdict, MeanAndThreshold) {
  const auto v = make_verdict({{"a", 8, ""}, {"b", 9, ""}, {"c", 7, ""}}, 7.0, 1);
  EXPECT_DOUBLE_EQ(v.batch_score, 8.0);
  EXPECT_TRUE(v.accepted);
  const auto r = make_verdict({{"a", 5, ""}, {"b", 6, ""}, {"c", 7, ""}}, 7.0, 1);
  EXPECT_DOUBLE_EQ(r.batch_score, 6.0);
  EXPECT_FALSE(r.accepted);
  EXPECT_TRUE(make_verdict({{"a", 7, ""}}, 7.0, 1).accepted);
}

std::vector<std::pair<Sample, Sample>> pairs(std::size_t n) {
  std::vector<std::pair<Sample, Sample>> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto orig = make_sample("train_" + std::to_string(i), "What is 1 + " + std::to_string(i) + "?", "#### 1");
    auto syn = make_sample("b-a1-" + std::to_string(i), "What is 2 + " + std::to_string(i) + "?", "#### 2");
    syn.origin = Origin::synthetic;
    syn.based_on_example = orig.id;
    out.emplace_back(orig, syn);
  }
  return out;
}

class QualityTest : public ::testing::Test {
 protected:
  const PromptLibrary prompts = PromptLibrary::defaults();
  Gateway gateway;

  void judge_with(std::function<std::string(const std::string&)> fn) {
    bind_all(gateway, std::make_shared<ScriptedProvider>(
                          [fn = std::move(fn)](const ChatRequest& r) { return fn(r.messages.back().content); }));
  }
};

TEST_F(QualityTest, RatingsEightNineSevenAccepted) {
  judge_with([](const std::string& p) { return judge_answer(p, {8, 9, 7}); });
  QualityAgent agent(gateway, prompts);
  const auto v = agent.review_batch(pairs(3), {});
  EXPECT_DOUBLE_EQ(v.batch_score, 8.0);
  EXPECT_TRUE(v.accepted);
  ASSERT_EQ(v.per_sample.size(), 3u);
  EXPECT_EQ(v.per_sample[1].quality_rating, 9);
  EXPECT_EQ(gateway.stats(Purpose::quality_control).calls, 1u);
  EXPECT_DOUBLE_EQ(gateway.request_log()[0].temperature, 0.0);
}

TEST_F(QualityTest, RatingsFiveSixSevenRejected) {
  judge_with([](const std::string& p) { return judge_answer(p, {5, 6, 7}); });
  QualityAgent agent(gateway, prompts);
  const auto v = agent.review_batch(pairs(3), {});
  EXPECT_DOUBLE_EQ(v.batch_score, 6.0);
  EXPECT_FALSE(v.accepted);
  EXPECT_NE(v.feedback.find("b-a1-0 (rating 5): needs work 0"), std::string::npos);
}

TEST_F(QualityTest, RatingElevenClampedAndFlagged) {
  judge_with([](const std::string& p) { return judge_answer(p, {11}); });
  QualityAgent agent(gateway, prompts);
  const auto v = agent.review_batch(pairs(1), {});
  ASSERT_EQ(v.per_sample.size(), 1u);
  EXPECT_EQ(v.per_sample[0].quality_rating, 10);
  ASSERT_EQ(v.flags.size(), 1u);
  EXPECT_NE(v.flags[0].find("clamped"), std::string::npos);
}

TEST_F(QualityTest, UnparseableJudgeRejects) {
  judge_with([](const std::string&) { return std::string("The samples look fine to me."); });
  QualityAgent agent(gateway, prompts);
  const auto v = agent.review_batch(pairs(2), {});
  EXPECT_FALSE(v.accepted);
  EXPECT_EQ(v.feedback, "judge output unparseable");
}

TEST_F(QualityTest, OriginalRatingsIgnored) {
  judge_with([](const std::string&) {
    return json::array({{{"sample_id", "train_0"}, {"type", "original"}, {"quality_rating", 1}, {"feedback", "ctx"}},
                        {{"sample_id", "b-a1-0"}, {"type", "synthetic"}, {"quality_rating", 9}, {"feedback", "good"}}})
        .dump();
  });
  QualityAgent agent(gateway, prompts);
  const auto v = agent.review_batch(pairs(1), {});
  EXPECT_DOUBLE_EQ(v.batch_score, 9.0);
  EXPECT_TRUE(v.accepted);
}

TEST_F(QualityTest, PromptCarriesPairsAndStrategies) {
  QualityAgent agent(gateway, prompts);
  StrategyCard card;
  card.category_name = "Carry Propagation Errors";
  card.strategy_name = "Carry Chain Drills";
  card.generation_approach = "Chained carries";
  const auto with = agent.render_prompt(pairs(2), {card});
  EXPECT_NE(with.find("Carry Chain Drills"), std::string::npos);
  EXPECT_NE(with.find(R"("type":"original")"), std::string::npos);
  EXPECT_NE(with.find(R"("sample_id":"b-a1-1")"), std::string::npos);
  const auto without = agent.render_prompt(pairs(1), {});
  EXPECT_EQ(without.find("Carry Chain Drills"), std::string::npos);
}

/// Producer that records each batch it is asked to regenerate.
struct RecordingProducer {
  std::vector<GenerationBatch> calls;
  GenerationResult operator()(const GenerationBatch& b) {
    calls.push_back(b);
    GenerationResult r;
    for (std::size_t i = 0; i < b.requested; ++i) {
      auto s = make_sample(b.batch_id + "-a" + std::to_string(b.attempt) + "-" + std::to_string(i),
                           "What is " + std::to_string(i) + " + 3?", "#### " + std::to_string(i + 3));
      s.origin = Origin::synthetic;
      s.based_on_example = "train_" + std::to_string(i % 2);
      r.samples.push_back(s);
    }
    return r;
  }
};

GenerationBatch ten_sample_batch() {
  GenerationBatch b;
  b.batch_id = "it1-err-b0";
  b.branch = Branch::error;
  b.requested = 10;
  return b;
}

const std::vector<Sample> kOriginals = {make_sample("train_0", "What is 1 + 3?", "#### 4"),
                                        make_sample("train_1", "What is 2 + 3?", "#### 5")};

const Sample* lookup(const std::string& id) {
  for (const auto& s : kOriginals)
    if (s.id == id) return &s;
  return nullptr;
}

TEST_F(QualityTest, GateDropsAfterThreeRejectedAttempts) {
  // Per-attempt ratings with means 6.0, 6.5 and 6.9.
  const std::vector<std::vector<int>> script = {
      {6}, {7, 6}, {7, 7, 7, 7, 7, 7, 7, 7, 7, 6}};
  int call = 0;
  judge_with([&](const std::string& p) {
    const auto i = call++;
    return judge_answer(p, script.at(i), "attempt " + std::to_string(i + 1));
  });
  QualityAgent agent(gateway, prompts);
  RecordingProducer producer;
  const auto out = qc_gate(std::ref(producer), ten_sample_batch(), agent, lookup);
  EXPECT_TRUE(out.dropped);
  EXPECT_TRUE(out.accepted_samples.empty());
  ASSERT_EQ(out.history.size(), 3u);
  EXPECT_DOUBLE_EQ(out.history[0].batch_score, 6.0);
  EXPECT_DOUBLE_EQ(out.history[1].batch_score, 6.5);
  EXPECT_DOUBLE_EQ(out.history[2].batch_score, 6.9);
  ASSERT_EQ(producer.calls.size(), 3u);
  EXPECT_FALSE(producer.calls[0].feedback.has_value());
  EXPECT_EQ(producer.calls[1].attempt, 2);
  EXPECT_EQ(producer.calls[1].feedback, out.history[0].feedback);
  EXPECT_EQ(producer.calls[2].feedback, out.history[1].feedback);
}

TEST_F(QualityTest, GateAcceptsOnFirstAttempt) {
  judge_with([](const std::string& p) { return judge_answer(p, {8}); });
  QualityAgent agent(gateway, prompts);
  RecordingProducer producer;
  const auto out = qc_gate(std::ref(producer), ten_sample_batch(), agent, lookup);
  EXPECT_FALSE(out.dropped);
  ASSERT_EQ(out.history.size(), 1u);
  EXPECT_DOUBLE_EQ(out.history[0].batch_score, 8.0);
  EXPECT_EQ(out.accepted_samples.size(), 10u);
}

TEST_F(QualityTest, GateUsesStagedFirstAttempt) {
  judge_with([](const std::string& p) { return judge_answer(p, {9}); });
  QualityAgent agent(gateway, prompts);
  RecordingProducer staged;
  auto first = staged(ten_sample_batch());
  RecordingProducer producer;
  const auto out = qc_gate(std::ref(producer), ten_sample_batch(), agent, lookup, first);
  EXPECT_TRUE(producer.calls.empty());
  EXPECT_EQ(out.accepted_samples.size(), 10u);
}

TEST_F(QualityTest, AcceptLastAttemptKeepsFinalSamples) {
  judge_with([](const std::string& p) { return judge_answer(p, {5}); });
  QualityAgent agent(gateway, prompts, {.threshold = 7.0, .max_attempts = 2, .accept_last_attempt = true});
  RecordingProducer producer;
  const auto out = qc_gate(std::ref(producer), ten_sample_batch(), agent, lookup);
  EXPECT_FALSE(out.dropped);
  EXPECT_EQ(out.history.size(), 2u);
  EXPECT_EQ(out.accepted_samples.front().id, "it1-err-b0-a2-0");
}

TEST_F(QualityTest, EmptyProductionCountsAsFailedAttemptWithoutJudgeCall) {
  judge_with([](const std::string& p) { return judge_answer(p, {9}); });
  QualityAgent agent(gateway, prompts);
  auto producer = [](const GenerationBatch&) {
    GenerationResult r;
    r.unparseable = true;
    return r;
  };
  const auto out = qc_gate(producer, ten_sample_batch(), agent, lookup);
  EXPECT_TRUE(out.dropped);
  EXPECT_EQ(out.history.size(), 3u);
  EXPECT_EQ(gateway.stats(Purpose::quality_control).calls, 0u);
}

}  // namespace
}  // namespace augflow
