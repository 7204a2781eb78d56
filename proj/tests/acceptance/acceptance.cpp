// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails or exceeds its time budget.

#include "../fixtures.hpp"
#include "drillforge/anonymize.hpp"
#include "drillforge/grading.hpp"
#include "drillforge/itemgen.hpp"
#include "drillforge/ledger.hpp"
#include "drillforge/platform.hpp"
#include "drillforge/simulation.hpp"
#include "drillforge/stats.hpp"
#include "drillforge/storage.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace drillforge;
using drillforge::testing::drill_once;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail << what;
    ok = ok && cond;
  }
};

struct Criterion {
  int id;
  std::string name;
  double budget_ms;  // 0: no time limit
  std::function<void(Check&)> body;
};

// -- independent oracles ----------------------------------------------------

/// Weight-formula grade for bits given oldest first. Weights run from the
/// effective window min(T, L_target) down to 1.
struct OracleGrade {
  long num = 0;
  long den = 0;
  std::size_t target = 0;
  bool complete = false;
};

OracleGrade oracle_grade(const std::vector<int>& oldest_first) {
  const std::size_t n = oldest_first.size();
  std::size_t errors = 0;
  for (std::size_t k = 0; k < std::min<std::size_t>(n, 30); ++k) errors += oldest_first[n - 1 - k] == 0 ? 1 : 0;
  OracleGrade g;
  g.target = std::min<std::size_t>(30, 7 + 2 * errors);
  const std::size_t len = std::min(g.target, n);
  for (std::size_t k = 0; k < len; ++k) {
    const long w = static_cast<long>(len - k);  // newest gets the largest weight
    g.num += w * oldest_first[n - 1 - k];
    g.den += w;
  }
  g.complete = n >= g.target;
  return g;
}

double truncated_poisson_oracle(double lambda, int k, int kmin, int kmax) {
  auto term = [&](int j) { return std::pow(lambda, j) / std::tgamma(j + 1.0); };
  double z = 0.0;
  for (int j = kmin; j <= kmax; ++j) z += term(j);
  return term(k) / z;
}

// -- criteria -----------------------------------------------------------------

void minimal_ace(Check& c) {
  const GradeState seven = drill_grade(AnswerHistory::from_bits(std::vector<int>(7, 1)));
  c.expect(seven.grade == 1.0 && seven.complete && seven.aced, "7 correct answers did not ace");
  for (int n = 0; n < 7; ++n) {
    const GradeState g = drill_grade(AnswerHistory::from_bits(std::vector<int>(n, 1)));
    c.expect(!g.aced, std::to_string(n) + " correct answers aced");
  }
}

void taper_cap(Check& c) {
  std::mt19937_64 gen(20201);
  std::size_t longest = 0;
  for (int i = 0; i < 100'000; ++i) {
    const std::size_t len = gen() % 121;
    const double p = static_cast<double>(gen() % 1001) / 1000.0;
    std::bernoulli_distribution bit(p);
    std::vector<int> bits(len);
    for (auto& b : bits) b = bit(gen) ? 1 : 0;
    const std::size_t t = taper_length(AnswerHistory::from_bits(bits));
    longest = std::max(longest, t);
    if (t > 30) {
      c.expect(false, "taper length " + std::to_string(t) + " on history of " + std::to_string(len));
      return;
    }
  }
  c.detail << "max taper " << longest;
}

void oracle_equivalence(Check& c) {
  std::size_t checked = 0;
  for (std::size_t len = 0; len <= 12; ++len) {
    for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
      std::vector<int> bits(len);
      for (std::size_t i = 0; i < len; ++i) bits[i] = (mask >> i) & 1u;
      const OracleGrade want = oracle_grade(bits);
      const GradeState got = drill_grade(AnswerHistory::from_bits(bits));
      const double want_grade = want.den == 0 ? 0.0 : static_cast<double>(want.num) / static_cast<double>(want.den);
      const bool want_aced = want.complete && want.num == want.den && want.den > 0;
      if (got.grade != want_grade || got.taper_len != want.target || got.complete != want.complete ||
          got.aced != want_aced) {
        c.expect(false, "mismatch at length " + std::to_string(len) + " mask " + std::to_string(mask));
        return;
      }
      ++checked;
    }
  }
  c.detail << checked << " histories";
}

void table1_generation(Check& c) {
  const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> table{
      {43, 60, 280}, {41, 53, 300}, {15, 24, 300}, {13, 23, 300},
      {45, 62, 300}, {16, 38, 300}, {26, 35, 300}, {24, 38, 300}};
  std::size_t total = 0, nota = 0, aota = 0;
  for (std::size_t s = 0; s < table.size(); ++s) {
    const auto [nc, nd, ni] = table[s];
    OptionPools pools;
    for (std::size_t i = 0; i < nc; ++i) pools.correct.push_back({"correct option " + std::to_string(i), ""});
    for (std::size_t i = 0; i < nd; ++i) pools.distractors.push_back({"distractor option " + std::to_string(i), ""});
    GenConfig cfg;
    cfg.n_items = ni;
    cfg.seed = 1000 + s;
    const DrillSet set = generate_drill_set(pools, "Check the most appropriate box.", cfg, "FINAL-" + std::to_string(s + 1));
    total += set.items.size();
    for (const auto& item : set.items) {
      for (std::size_t i = 0; i < item.options.size(); ++i) {
        const OptionKind k = item.options[i].kind;
        if (k == OptionKind::plain) continue;
        (k == OptionKind::nota ? nota : aota) += 1;
        if (item.options.size() != 4 || i != 3) {
          c.expect(false, "special option not fourth of four in " + item.id);
          return;
        }
      }
    }
  }
  c.expect(total == 2380, "total items " + std::to_string(total));
  c.expect(nota >= 517 - 60 && nota <= 517 + 60, "NOTA count " + std::to_string(nota));
  c.expect(aota >= 470 - 60 && aota <= 470 + 60, "AOTA count " + std::to_string(aota));
  if (c.ok) c.detail << "items " << total << ", NOTA " << nota << ", AOTA " << aota;
}

void poisson_sampler(Check& c) {
  constexpr int kDraws = 100'000;
  for (double lambda : {1.0, 3.0}) {
    Rng rng(static_cast<std::uint64_t>(lambda * 7919));
    std::map<int, int> counts;
    for (int i = 0; i < kDraws; ++i) ++counts[static_cast<int>(sample_truncated_poisson(lambda, 2, 7, rng))];
    double worst = 0.0;
    for (int k = 2; k <= 7; ++k) {
      const double p = truncated_poisson_oracle(lambda, k, 2, 7);
      const double sigma = std::sqrt(kDraws * p * (1 - p));
      const double z = std::abs(counts[k] - kDraws * p) / sigma;
      worst = std::max(worst, z);
      c.expect(z <= 3.0, "lambda " + std::to_string(lambda) + " bucket " + std::to_string(k) + " off by " +
                             std::to_string(z) + " sigma");
    }
    for (const auto& [k, n] : counts) c.expect(k >= 2 && k <= 7, "draw outside [2,7]");
    c.detail << "lambda " << lambda << " max |z| " << worst << "; ";
  }
}

void perfect_student(Check& c) {
  CohortSpec spec;
  spec.ability = 1.0;
  spec.sets = 50;
  spec.items_per_set = 100;
  const RewardRuleSet rules;
  EventLog log;
  const SimulationReport r = run_simulation(spec, {}, rules, &log);
  const StudentReport& s = r.students.at(0);
  c.expect(s.attempts == 350, "attempts " + std::to_string(s.attempts));
  c.expect(s.collection_aced, "collection not aced");
  Smly collection_paid = 0;
  std::size_t set_rewards = 0;
  for (const auto& rec : log.records()) {
    if (rec.kind != EventKind::reward) continue;
    if (rec.payload.at("rule") == "collection_aced") collection_paid += rec.payload.at("amount").get<Smly>();
    if (rec.payload.at("rule") == "set_aced") ++set_rewards;
  }
  c.expect(collection_paid == 1'000'000, "collection payout " + std::to_string(collection_paid));
  c.expect(set_rewards == 50, "per-set rewards " + std::to_string(set_rewards));
  c.expect(s.smly == 1'000'000 + 50 * rules.per_set_ace, "balance " + std::to_string(s.smly));
  if (c.ok) c.detail << "350 answers, " << s.smly << " SMLY";
}

void ledger_safety(Check& c) {
  Ledger ledger;
  TabletRegistry registry;
  registry.register_library("L1", 10);
  ledger.open_account(escrow_account_id("L1"), AccountKind::tablet_escrow, "L1");
  const std::vector<std::pair<std::string, AccountKind>> students{
      {"S1", AccountKind::pre_registered}, {"S2", AccountKind::pre_registered}, {"S3", AccountKind::self_registered}};
  for (const auto& [id, kind] : students) ledger.open_account(id, kind, "L1");
  for (int i = 0; i < 12; ++i) registry.register_tablet({"TBL-" + std::to_string(i), "L1", "", 250'000, TabletStatus::lent});
  RewardRuleSet rules;
  rules.self_registered_multiplier = 0.5;

  std::mt19937_64 gen(77);
  std::map<std::string, int> sales;
  std::size_t accepted = 0;
  for (int op = 0; op < 1000; ++op) {
    const auto& [who, kind] = students[gen() % students.size()];
    try {
      switch (gen() % 3) {
        case 0: {
          const RewardEvent ev = gen() % 10 == 0 ? RewardEvent::collection_aced : RewardEvent::set_aced;
          const Smly amount = reward_for_event(ev, kind, rules) / (ev == RewardEvent::collection_aced ? 10 : 1);
          if (amount > 0) ledger.mint(who, amount, std::string(to_string(ev)), op);
          break;
        }
        case 1:
          ledger.transfer(who, students[gen() % students.size()].first, 1 + gen() % 200'000, "gift", op);
          break;
        case 2: {
          const std::string tablet = "TBL-" + std::to_string(gen() % 12);
          const auto receipt = purchase_tablet(ledger, registry, who, payment_payload(registry.tablet(tablet)), op);
          ++sales[receipt.tablet_id];
          break;
        }
      }
      ++accepted;
    } catch (const Error&) {
    }
    Smly sum = 0;
    for (const auto& [id, a] : ledger.accounts()) {
      if (a.balance > ledger.total_minted()) {
        c.expect(false, "balance of " + id + " wrapped below zero at op " + std::to_string(op));
        return;
      }
      sum += a.balance;
    }
    if (sum != ledger.total_minted()) {
      c.expect(false, "conservation broken at op " + std::to_string(op));
      return;
    }
  }
  for (const auto& [tablet, n] : sales) c.expect(n == 1, "tablet " + tablet + " sold " + std::to_string(n) + " times");
  const auto replayed = replay_balances(ledger.transactions());
  for (const auto& [id, a] : ledger.accounts()) {
    const Smly want = replayed.contains(id) ? replayed.at(id) : 0;
    c.expect(a.balance == want, "replayed balance differs for " + id);
  }
  if (c.ok) c.detail << accepted << " accepted ops, " << sales.size() << " tablets sold";
}

void purchase_replenishment(Check& c) {
  Platform p;
  p.create_library("L1", 10, 0);
  p.create_account("S1", AccountKind::pre_registered, "L1", std::nullopt, 0);
  p.register_tablet({"TBL-0001", "L1", "", kDefaultTabletPrice, TabletStatus::lent}, 0);
  p.mint("S1", 1'234'567, "ace rewards", 1);
  const Smly before = p.state().ledger.balance("S1");
  const PurchaseReceipt r = p.purchase("S1", payment_payload(p.state().tablets.tablet("TBL-0001")), 2);
  const Smly after = p.state().ledger.balance("S1");
  c.expect(r.tablet_count_after == 19, "inventory " + std::to_string(r.tablet_count_after));
  c.expect(p.state().tablets.inventory("L1").tablet_count == 19, "registry inventory not 19");
  c.expect(before - after == 1'000'000, "balance moved by " + std::to_string(before - after));
  c.expect(p.state().ledger.balance(escrow_account_id("L1")) == 1'000'000, "escrow not credited");
}

void replay_determinism(Check& c) {
  Platform live = drillforge::testing::small_platform(4, 40);
  drillforge::testing::random_workload(live, 10'000, 424242);
  const std::string text = live.log().serialize();
  const PlatformState replayed = Platform::replay(EventLog::parse(text));
  c.expect(replayed == live.state(), "replayed state differs from live state");

  const std::string torn = text + R"({"seq":)" + std::to_string(live.log().last_seq() + 1) + R"(,"kind":"answer","pay)";
  const EventLog recovered = EventLog::parse(torn);
  c.expect(recovered.torn_bytes() > 0, "torn line not detected");
  c.expect(recovered.size() == live.log().size(), "records lost before the torn line");
  c.expect(Platform::replay(recovered) == live.state(), "torn tail corrupted earlier state");
  if (c.ok) c.detail << live.log().size() << " events";
}

void anonymization(Check& c) {
  std::vector<std::string> roster;
  std::mt19937_64 gen(31337);
  const std::vector<std::string> names{"amani", "wanjiru", "otieno", "achieng", "kamau", "njeri", "mutua", "chebet"};
  for (int i = 0; i < 40; ++i) roster.push_back("stu-" + names[gen() % names.size()] + "-" + std::to_string(1000 + i));

  Platform p;
  p.create_library("NAIROBI-WEST", 10, 0);
  p.create_library("KISUMU", 10, 0);
  p.upload_drill_set(synthetic_drill_set("KCSE-01", 30, 1), 0);
  p.upload_drill_set(synthetic_drill_set("KCSE-02", 30, 2), 0);
  p.define_collection("KCSE", {"KCSE-01", "KCSE-02"}, 0);
  Rng rng(5);
  Timestamp ts = 1;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    p.create_account(roster[i], AccountKind::pre_registered, i % 2 ? "KISUMU" : "NAIROBI-WEST", "tok-" + roster[i], 0);
    for (const char* set : {"KCSE-01", "KCSE-02"}) {
      SessionState s = p.open_drill_session(roster[i], set);
      for (int k = 0; k < 12; ++k) drill_once(p, s, rng, rng.bernoulli(0.9), ts++);
    }
  }
  SessionState exam = p.start_exam(roster[0], "KCSE-01", 5, rng, ts++);
  p.submit_answer(exam, exam.exam_sequence->front(), 0, ts++);

  StatsCache cache;
  Json stats = Json::array();
  for (const auto& s : serve_stats(cache, p.state(), ts)) stats.push_back(to_json(s));
  const std::vector<std::string> outputs{stats.dump(), anonymized_export(p.log()), anonymized_export(p.log())};
  for (const auto& out : outputs) {
    for (const auto& id : roster) c.expect(out.find(id) == std::string::npos, "found '" + id + "' in output");
  }
  c.expect(outputs[1] != outputs[2], "two exports share a salt");
  c.expect(stats.size() == 2 && stats[0]["n_students"] == 20, "unexpected stats " + stats.dump());
  if (c.ok) c.detail << roster.size() << " students scanned in 3 outputs";
}

void exam_mode(Check& c) {
  Platform p = drillforge::testing::small_platform(1, 100);
  Rng rng(8);
  SessionState exam = p.start_exam("S1", "SET-01", 50, rng, 1);
  const auto seq = *exam.exam_sequence;
  c.expect(seq.size() == 50 && std::set<std::string>(seq.begin(), seq.end()).size() == 50, "exam not 50 distinct items");

  auto rejected = [&](const std::string& item, ErrorCode want) {
    const std::size_t before = p.log().size();
    try {
      p.submit_answer(exam, item, 0, 1000);
    } catch (const Error& e) {
      return e.code() == want && p.log().size() == before;
    }
    return false;
  };

  std::mt19937_64 gen(9);
  std::size_t n_correct = 0;
  double grade = -1.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i + 2 < seq.size()) c.expect(rejected(seq[i + 2], ErrorCode::out_of_order), "out-of-order answer accepted");
    const Item& item = drillforge::testing::item_of(p, "SET-01", seq[i]);
    const bool right = gen() % 3 != 0;
    n_correct += right ? 1 : 0;
    const auto out = p.submit_answer(exam, seq[i], right ? item.correct_index() : drillforge::testing::wrong_index(item),
                                     static_cast<Timestamp>(10 + i));
    grade = out.exam->grade_so_far;
    c.expect(rejected(seq[i], ErrorCode::conflict), "duplicate answer accepted");
  }
  const ExamRecord& rec = p.exam_record(exam.exam_id);
  c.expect(rec.finished(), "exam not finished");
  c.expect(grade == static_cast<double>(n_correct) / 50.0, "exam grade " + std::to_string(grade));
  c.expect(exam_grade(rec.responses) == static_cast<double>(n_correct) / 50.0, "record grade differs");
  if (c.ok) c.detail << n_correct << "/50";
}

void exit_option(Check& c) {
  CourseGradeConfig cfg;
  cfg.final_weight = 0.5;
  cfg.interim_weights = {{"interim", 1.0}};
  c.expect(course_grade({{"interim", 8.0}}, std::nullopt, cfg, true) == CourseOutcome::pass(), "8.0 opt-out not Pass");
  c.expect(course_grade({{"interim", 4.0}}, std::nullopt, cfg, true) == CourseOutcome::fail(), "4.0 opt-out not Fail");
  c.expect(course_grade({{"interim", 9.0}}, 10.0, cfg, false) == CourseOutcome::numeric(9.5), "9.0/10.0 not 9.5");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "minimal ace", 1.0, minimal_ace},
      {2, "taper cap over 1e5 random histories", 0, taper_cap},
      {3, "grade oracle equivalence, all histories of length <= 12", 1000.0, oracle_equivalence},
      {4, "pool generation at final-exam scale (2380 items)", 5000.0, table1_generation},
      {5, "truncated Poisson sampler", 2000.0, poisson_sampler},
      {6, "perfect student over a 50-set collection", 1000.0, perfect_student},
      {7, "ledger safety fuzz (1000 ops)", 2000.0, ledger_safety},
      {8, "purchase and replenishment", 0, purchase_replenishment},
      {9, "replay determinism (1e4 events, torn tail)", 5000.0, replay_determinism},
      {10, "anonymization scan", 0, anonymization},
      {11, "exam mode", 0, exam_mode},
      {12, "exit option", 0, exit_option},
  };

  int failures = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.ok = false;
      check.detail << "exception: " << e.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    bool ok = check.ok;
    std::string note = check.detail.str();
    if (cr.budget_ms > 0 && ms > cr.budget_ms) {
      ok = false;
      note += (note.empty() ? "" : "; ") + std::string("over budget of ") + std::to_string(cr.budget_ms) + " ms";
    }
    failures += ok ? 0 : 1;
    std::printf("%s  [%2d] %-58s %10.3f ms  %s\n", ok ? "PASS" : "FAIL", cr.id, cr.name.c_str(), ms, note.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
