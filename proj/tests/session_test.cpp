#include "drillforge/platform.hpp"
#include "drillforge/session.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace drillforge;
using drillforge::testing::drill_once;
using drillforge::testing::small_platform;
using drillforge::testing::wrong_index;

TEST(DrillSelection, SingleItemSetRepeats) {
  const DrillSet set = synthetic_drill_set("ONE", 1, 3);
  SessionState s;
  s.drillset_id = set.id;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(next_drill_item(s, set, rng).id, set.items[0].id);
}

TEST(DrillSelection, NoRepeatWithinRecentWindow) {
  const DrillSet set = synthetic_drill_set("BIG", 300, 4);
  SessionState s;
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const std::set<std::string> recent(s.served.end() - std::min<std::ptrdiff_t>(10, std::ssize(s.served)),
                                       s.served.end());
    const std::string id = next_drill_item(s, set, rng).id;
    ASSERT_FALSE(recent.contains(id)) << "draw " << i;
    EXPECT_EQ(s.pending, id);
  }
  EXPECT_EQ(s.served.size(), 1000u);
}

TEST(DrillSelection, WindowClampsForSmallSets) {
  const DrillSet set = synthetic_drill_set("THREE", 3, 5);
  SessionState s;
  Rng rng(3);
  for (int i = 0; i < 60; ++i) next_drill_item(s, set, rng);
  // window = 2: every three consecutive draws are distinct, so the sequence cycles
  for (std::size_t i = 3; i < s.served.size(); ++i) EXPECT_EQ(s.served[i], s.served[i - 3]);
}

TEST(DrillSelection, Errors) {
  DrillSet empty;
  empty.id = "EMPTY";
  SessionState s;
  Rng rng(1);
  EXPECT_THROW(next_drill_item(s, empty, rng), Error);
  s.mode = SessionMode::exam;
  EXPECT_THROW(next_drill_item(s, synthetic_drill_set("X", 3, 1), rng), Error);
}

TEST(Exam, SequenceIsDistinctSample) {
  const DrillSet set = synthetic_drill_set("EX", 40, 6);
  Rng rng(7);
  const SessionState whole = begin_exam(set, 40, rng);
  ASSERT_TRUE(whole.exam_sequence);
  std::vector<std::string> got = *whole.exam_sequence, all;
  for (const auto& item : set.items) all.push_back(item.id);
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, all);
  EXPECT_EQ(whole.cursor, 0u);
  EXPECT_EQ(whole.mode, SessionMode::exam);

  const SessionState part = begin_exam(set, 12, rng);
  const std::set<std::string> distinct(part.exam_sequence->begin(), part.exam_sequence->end());
  EXPECT_EQ(distinct.size(), 12u);

  EXPECT_THROW(begin_exam(set, 0, rng), Error);
  EXPECT_THROW(begin_exam(set, 41, rng), Error);
}

TEST(Stopping, Criteria) {
  EXPECT_TRUE(stopping_satisfied(AnswerHistory{}, {}));
  StoppingCriteria min30{30, std::nullopt};
  EXPECT_FALSE(stopping_satisfied(AnswerHistory::from_bits(std::vector<int>(29, 1)), min30));
  EXPECT_TRUE(stopping_satisfied(AnswerHistory::from_bits(std::vector<int>(30, 1)), min30));
  StoppingCriteria grade{std::nullopt, 0.9};
  const auto h = AnswerHistory::from_bits({1, 1, 1, 1, 1, 1, 0, 1, 1});  // 38/45
  EXPECT_FALSE(stopping_satisfied(h, grade));
  EXPECT_TRUE(stopping_satisfied(h, StoppingCriteria{std::nullopt, 0.84}));
}

TEST(Submit, SeventhCorrectAcesAndRewardsOnce) {
  Platform p = small_platform();
  SessionState s = p.open_drill_session("S1", "SET-01");
  Rng rng(11);
  Timestamp ts = 1;
  for (int i = 0; i < 6; ++i) {
    const auto out = drill_once(p, s, rng, true, ts++);
    EXPECT_FALSE(out.grade_state.aced);
    EXPECT_TRUE(out.rewards.empty());
  }
  const auto seventh = drill_once(p, s, rng, true, ts++);
  EXPECT_TRUE(seventh.grade_state.aced);
  ASSERT_EQ(seventh.rewards.size(), 1u);
  EXPECT_EQ(seventh.rewards[0].rule, RewardEvent::set_aced);
  EXPECT_EQ(seventh.rewards[0].amount, 10'000u);
  EXPECT_EQ(p.state().ledger.balance("S1"), 10'000u);

  // drop below ace and recover: no second payout
  const auto wrong = drill_once(p, s, rng, false, ts++);
  EXPECT_FALSE(wrong.grade_state.aced);
  EXPECT_FALSE(wrong.correct);
  EXPECT_FALSE(wrong.explanation.empty());
  bool reaced = false;
  for (int i = 0; i < 40 && !reaced; ++i) {
    const auto out = drill_once(p, s, rng, true, ts++);
    EXPECT_TRUE(out.rewards.empty());
    reaced = out.grade_state.aced;
  }
  EXPECT_TRUE(reaced);
  EXPECT_EQ(p.state().ledger.balance("S1"), 10'000u);

  std::size_t set_rewards = 0;
  for (const auto& r : p.log().records()) {
    if (r.kind == EventKind::reward && r.payload.at("scope") == "SET-01") ++set_rewards;
  }
  EXPECT_EQ(set_rewards, 1u);
}

TEST(Submit, CollectionAceFiresWhenLastSetAced) {
  Platform p = small_platform(2);
  Rng rng(12);
  Timestamp ts = 1;
  for (const char* set : {"SET-01", "SET-02"}) {
    SessionState s = p.open_drill_session("S1", set);
    AnswerOutcome out;
    for (int i = 0; i < 7; ++i) out = drill_once(p, s, rng, true, ts++);
    if (std::string(set) == "SET-02") {
      ASSERT_EQ(out.rewards.size(), 2u);
      EXPECT_EQ(out.rewards[1].rule, RewardEvent::collection_aced);
      EXPECT_EQ(out.rewards[1].amount, 1'000'000u);
    }
  }
  EXPECT_EQ(p.state().ledger.balance("S1"), 1'020'000u);
  EXPECT_EQ(p.state().ledger.total_minted(), 1'020'000u);
}

TEST(Submit, SelfRegisteredEarnsNothingByDefault) {
  Platform p = small_platform(1);
  p.create_account("SELF", AccountKind::self_registered, std::nullopt, "tok-self", 0);
  SessionState s = p.open_drill_session("SELF", "SET-01");
  Rng rng(13);
  AnswerOutcome out;
  for (int i = 0; i < 7; ++i) out = drill_once(p, s, rng, true, i + 1);
  EXPECT_TRUE(out.grade_state.aced);
  EXPECT_TRUE(out.rewards.empty());
  EXPECT_EQ(p.state().ledger.balance("SELF"), 0u);
  EXPECT_TRUE(p.state().student("SELF")->set_ace_rewarded.contains("SET-01"));
}

TEST(Submit, DrillValidation) {
  Platform p = small_platform(1);
  SessionState s = p.open_drill_session("S1", "SET-01");
  Rng rng(14);
  const Item& item = p.next_item(s, rng);
  EXPECT_THROW(p.submit_answer(s, item.id, item.options.size(), 1), Error);
  const auto other = std::find_if(p.state().drill_set("SET-01").items.begin(),
                                  p.state().drill_set("SET-01").items.end(),
                                  [&](const Item& i) { return i.id != item.id; });
  try {
    p.submit_answer(s, other->id, 0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::conflict);
  }
  p.submit_answer(s, item.id, 0, 5);
  EXPECT_THROW(p.submit_answer(s, item.id, 0, 6), Error);  // nothing pending
  const Item& next = p.next_item(s, rng);
  try {
    p.submit_answer(s, next.id, 0, 4);  // clock went backwards
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::out_of_order);
  }
  EXPECT_THROW(p.open_drill_session("S1", "NOPE"), Error);
  EXPECT_THROW(p.open_drill_session("escrow:L1", "SET-01"), Error);
}

TEST(Exam, GradesAsFractionAndRejectsMisorderedAnswers) {
  Platform p = small_platform(1, 60);
  Rng rng(21);
  SessionState exam = p.start_exam("S1", "SET-01", 50, rng, 1);
  ASSERT_EQ(exam.exam_sequence->size(), 50u);
  const auto seq = *exam.exam_sequence;

  try {
    p.submit_answer(exam, seq[1], 0, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::out_of_order);
  }

  std::size_t n_correct = 0;
  std::optional<ExamProgress> progress;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Item& item = drillforge::testing::item_of(p, "SET-01", seq[i]);
    const bool right = (i * 7) % 10 < 6;
    n_correct += right ? 1 : 0;
    const auto out = p.submit_answer(exam, seq[i], right ? item.correct_index() : wrong_index(item), 2 + i);
    EXPECT_EQ(out.correct, right);
    progress = out.exam;
    if (i == 0) {
      try {
        p.submit_answer(exam, seq[0], 0, 2);
        FAIL();
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::conflict);
      }
    }
  }
  ASSERT_TRUE(progress);
  EXPECT_TRUE(progress->finished);
  EXPECT_EQ(progress->answered, 50u);
  EXPECT_DOUBLE_EQ(progress->grade_so_far, static_cast<double>(n_correct) / 50.0);
  EXPECT_EQ(n_correct, 30u);
  EXPECT_THROW(p.submit_answer(exam, seq[49], 0, 100), Error);

  // exam answers stay out of the drill history
  EXPECT_EQ(p.history_of("S1", "SET-01"), nullptr);

  SessionState resumed = p.resume_exam(exam.exam_id);
  EXPECT_EQ(resumed.cursor, 50u);
  EXPECT_EQ(*resumed.exam_sequence, seq);
}

TEST(Exam, AnotherStudentCannotAnswer) {
  Platform p = small_platform(1, 20);
  Rng rng(22);
  SessionState exam = p.start_exam("S1", "SET-01", 5, rng, 1);
  SessionState stolen = exam;
  stolen.student_id = "S2";
  try {
    p.submit_answer(stolen, exam.exam_sequence->front(), 0, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::forbidden);
  }
}

TEST(Submit, EveryGeneratedOutcomeHasExplanation) {
  Platform p = small_platform(1, 50);
  SessionState s = p.open_drill_session("S2", "SET-01");
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto out = drill_once(p, s, rng, rng.bernoulli(0.5), i + 1);
    ASSERT_FALSE(out.explanation.empty());
  }
}
