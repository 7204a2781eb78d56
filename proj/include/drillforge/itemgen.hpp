#pragma once

#include "drillforge/error.hpp"
#include "drillforge/expression.hpp"
#include "drillforge/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace drillforge {

inline constexpr std::string_view kNoneOfTheAbove = "None of the above";
inline constexpr std::string_view kAllOfTheAbove = "All of the above";

struct PoolEntry {
  std::string text;
  std::string explanation;  // shown after answering

  bool operator==(const PoolEntry&) const = default;
};

struct OptionPools {
  std::vector<PoolEntry> correct;
  std::vector<PoolEntry> distractors;

  /// Non-empty unique texts, disjoint pools, no clash with the special
  /// option labels.
  void validate() const {
    if (correct.empty()) throw Error(ErrorCode::invalid_argument, "correct pool is empty");
    std::set<std::string_view> seen;
    for (const auto* pool : {&correct, &distractors}) {
      for (const auto& entry : *pool) {
        if (entry.text.empty()) throw Error(ErrorCode::invalid_argument, "pool entry with empty text");
        if (entry.text == kNoneOfTheAbove || entry.text == kAllOfTheAbove) {
          throw Error(ErrorCode::invalid_argument, "pool entry collides with a special option: " + entry.text);
        }
        if (!seen.insert(entry.text).second) {
          throw Error(ErrorCode::invalid_argument, "duplicate pool text: " + entry.text);
        }
      }
    }
  }
};

struct GenConfig {
  std::size_t n_items = 0;
  double lambda = 3.0;
  std::size_t k_min = 2;
  std::size_t k_max = 7;
  double p_nota = 0.217;
  double p_aota = 0.197;
  double p_nota_correct = 0.277;
  double p_aota_correct = 0.321;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda > 0.0)) throw Error(ErrorCode::invalid_argument, "lambda must be positive");
    if (k_min > k_max) throw Error(ErrorCode::invalid_argument, "k_min exceeds k_max");
    for (double p : {p_nota, p_aota, p_nota_correct, p_aota_correct}) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::invalid_argument, "probability outside [0, 1]");
    }
    if (p_nota + p_aota > 1.0) throw Error(ErrorCode::invalid_argument, "p_nota + p_aota exceeds 1");
  }

  bool operator==(const GenConfig&) const = default;
};

enum class OptionKind { plain, nota, aota };

struct Option {
  std::string text;
  bool is_correct = false;
  OptionKind kind = OptionKind::plain;

  bool operator==(const Option&) const = default;
};

struct Item {
  std::string id;
  std::string stem;  // per-item question text; empty when the set header is the question
  std::vector<Option> options;
  std::string explanation;

  std::size_t correct_index() const {
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i].is_correct) return i;
    }
    throw Error(ErrorCode::invalid_argument, "item " + id + " has no correct option");
  }

  bool operator==(const Item&) const = default;
};

/// How a drill set came to be: generator echo for reproducibility.
struct Provenance {
  std::string method = "handcrafted";  // "pools" | "template" | "handcrafted"
  std::optional<GenConfig> config;     // pools only
  std::size_t correct_pool_size = 0;
  std::size_t distractor_pool_size = 0;
  std::optional<std::uint64_t> seed;   // template only

  bool operator==(const Provenance&) const = default;
};

struct DrillSet {
  std::string id;
  std::string title;
  std::string header;
  std::vector<Item> items;
  Provenance provenance;

  const Item* find_item(std::string_view item_id) const {
    for (const auto& item : items) {
      if (item.id == item_id) return &item;
    }
    return nullptr;
  }

  bool operator==(const DrillSet&) const = default;
};

/// Structural checks every served item must pass: one correct option, unique
/// texts, special options only fourth of four.
inline void validate_item(const Item& item) {
  if (item.id.empty()) throw Error(ErrorCode::invalid_argument, "item without id");
  if (item.options.size() < 2) throw Error(ErrorCode::invalid_argument, "item " + item.id + " has fewer than 2 options");
  std::size_t n_correct = 0;
  std::set<std::string_view> texts;
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    const auto& option = item.options[i];
    if (option.is_correct) ++n_correct;
    if (!texts.insert(option.text).second) {
      throw Error(ErrorCode::invalid_argument, "item " + item.id + " repeats option text '" + option.text + "'");
    }
    if (option.kind != OptionKind::plain && (i != 3 || item.options.size() != 4)) {
      throw Error(ErrorCode::invalid_argument, "item " + item.id + " has a special option outside the fourth of four");
    }
  }
  if (n_correct != 1) throw Error(ErrorCode::invalid_argument, "item " + item.id + " must have exactly one correct option");
}

inline void validate_drill_set(const DrillSet& set) {
  if (set.id.empty()) throw Error(ErrorCode::invalid_argument, "drill set without id");
  std::set<std::string_view> ids;
  for (const auto& item : set.items) {
    validate_item(item);
    if (!ids.insert(item.id).second) throw Error(ErrorCode::invalid_argument, "duplicate item id " + item.id);
  }
}

// ---------------------------------------------------------------------------
// Truncated Poisson distractor counts.

inline std::vector<double> truncated_poisson_pmf(double lambda, std::size_t k_min, std::size_t k_max) {
  if (k_min > k_max || !(lambda > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "truncated Poisson needs lambda > 0 and k_min <= k_max");
  }
  // log-space so large k or lambda don't overflow before normalisation
  std::vector<double> logw;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    const double kd = static_cast<double>(k);
    logw.push_back(kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0));
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  std::vector<double> pmf;
  for (double lw : logw) {
    pmf.push_back(std::exp(lw - top));
    total += pmf.back();
  }
  for (double& p : pmf) p /= total;
  return pmf;
}

/// Inverse-CDF draw over the normalised pmf restricted to [k_min, k_max].
inline std::size_t sample_truncated_poisson(double lambda, std::size_t k_min, std::size_t k_max, Rng& rng) {
  const auto pmf = truncated_poisson_pmf(lambda, k_min, k_max);
  const double u = rng.uniform01();
  double cdf = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    cdf += pmf[i];
    if (u < cdf) return k_min + i;
  }
  return k_max;  // u landed in the rounding slack above the last partial sum
}

// ---------------------------------------------------------------------------
// Pool-based items.

namespace detail {

/// k distinct indices out of [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

inline std::string explanation_or_answer(const PoolEntry& entry) {
  if (!entry.explanation.empty()) return entry.explanation;
  return "The correct answer is: " + entry.text;
}

inline std::string joined_explanations(std::string lead, const std::vector<const PoolEntry*>& entries) {
  for (const auto* e : entries) {
    if (!e->explanation.empty()) lead += " " + e->explanation;
  }
  return lead;
}

}  // namespace detail

inline std::string item_id_for(std::string_view set_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index + 1);
  return std::string(set_id) + "-" + buf;
}

inline Item generate_plain_item(const OptionPools& pools, const GenConfig& cfg, Rng& rng, std::string id = "item") {
  if (pools.correct.empty()) throw Error(ErrorCode::invalid_argument, "correct pool is empty");
  if (pools.distractors.size() < cfg.k_max) {
    throw Error(ErrorCode::invalid_argument, "distractor pool has " + std::to_string(pools.distractors.size()) +
                                                 " entries, need at least k_max = " + std::to_string(cfg.k_max));
  }
  const PoolEntry& answer = pools.correct[rng.uniform_index(pools.correct.size())];
  const std::size_t k = sample_truncated_poisson(cfg.lambda, cfg.k_min, cfg.k_max, rng);

  Item item;
  item.id = std::move(id);
  item.options.push_back({answer.text, true, OptionKind::plain});
  for (std::size_t i : detail::sample_without_replacement(pools.distractors.size(), k, rng)) {
    item.options.push_back({pools.distractors[i].text, false, OptionKind::plain});
  }
  rng.shuffle(std::span<Option>(item.options));
  item.explanation = detail::explanation_or_answer(answer);
  return item;
}

/// Four options with the NOTA/AOTA option last. Leading three:
///   NOTA correct   -> three distractors
///   AOTA correct   -> three correct-pool entries (AOTA is the keyed answer)
///   either, wrong  -> one correct entry and two distractors, shuffled
inline Item generate_special_item(OptionKind kind, bool special_correct, const OptionPools& pools, Rng& rng,
                                  std::string id = "item") {
  if (kind == OptionKind::plain) throw Error(ErrorCode::invalid_argument, "special item needs NOTA or AOTA kind");
  const bool nota = kind == OptionKind::nota;

  Item item;
  item.id = std::move(id);
  std::vector<const PoolEntry*> shown;

  if (special_correct && nota) {
    if (pools.distractors.size() < 3) throw Error(ErrorCode::invalid_argument, "NOTA-correct item needs 3 distractors");
    for (std::size_t i : detail::sample_without_replacement(pools.distractors.size(), 3, rng)) {
      shown.push_back(&pools.distractors[i]);
      item.options.push_back({pools.distractors[i].text, false, OptionKind::plain});
    }
    item.explanation = detail::joined_explanations("None of the listed options is correct.", shown);
  } else if (special_correct) {
    if (pools.correct.size() < 3) throw Error(ErrorCode::invalid_argument, "AOTA-correct item needs 3 correct-pool entries");
    for (std::size_t i : detail::sample_without_replacement(pools.correct.size(), 3, rng)) {
      shown.push_back(&pools.correct[i]);
      item.options.push_back({pools.correct[i].text, false, OptionKind::plain});
    }
    item.explanation = detail::joined_explanations("All of the listed options are correct.", shown);
  } else {
    if (pools.correct.empty()) throw Error(ErrorCode::invalid_argument, "correct pool is empty");
    if (pools.distractors.size() < 2) throw Error(ErrorCode::invalid_argument, "special item needs 2 distractors");
    const PoolEntry& answer = pools.correct[rng.uniform_index(pools.correct.size())];
    item.options.push_back({answer.text, true, OptionKind::plain});
    for (std::size_t i : detail::sample_without_replacement(pools.distractors.size(), 2, rng)) {
      item.options.push_back({pools.distractors[i].text, false, OptionKind::plain});
    }
    rng.shuffle(std::span<Option>(item.options));
    item.explanation = detail::explanation_or_answer(answer);
  }

  item.options.push_back({std::string(nota ? kNoneOfTheAbove : kAllOfTheAbove), special_correct, kind});
  return item;
}

inline DrillSet generate_drill_set(const OptionPools& pools, std::string header, const GenConfig& cfg,
                                   std::string set_id = "drillset", std::string title = {}) {
  cfg.validate();
  pools.validate();
  Rng rng(cfg.seed);

  DrillSet set;
  set.id = std::move(set_id);
  set.title = title.empty() ? set.id : std::move(title);
  set.header = std::move(header);
  set.provenance.method = "pools";
  set.provenance.config = cfg;
  set.provenance.correct_pool_size = pools.correct.size();
  set.provenance.distractor_pool_size = pools.distractors.size();

  set.items.reserve(cfg.n_items);
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    std::string id = item_id_for(set.id, i);
    const double u = rng.uniform01();
    if (u < cfg.p_nota) {
      const bool correct = rng.bernoulli(cfg.p_nota_correct);
      set.items.push_back(generate_special_item(OptionKind::nota, correct, pools, rng, std::move(id)));
    } else if (u < cfg.p_nota + cfg.p_aota) {
      const bool correct = rng.bernoulli(cfg.p_aota_correct);
      set.items.push_back(generate_special_item(OptionKind::aota, correct, pools, rng, std::move(id)));
    } else {
      set.items.push_back(generate_plain_item(pools, cfg, rng, std::move(id)));
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Parametric templates.

struct Template {
  std::string id = "template";
  std::string title;
  std::string header;
  std::string body;  // "{var}" placeholders
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> vars;
  std::string answer_expr;
  std::vector<std::string> distractor_exprs;
  std::string explanation;  // optional; "{var}" and "{answer}" placeholders
  std::size_t n_items = 0;
  std::uint64_t seed = 0;
  std::size_t max_retries = 100;  // redraws per item before giving up

  bool operator==(const Template&) const = default;
};

namespace detail {

/// Names inside `{...}` in order of appearance.
inline std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> names;
  for (std::size_t pos = 0; (pos = text.find('{', pos)) != std::string_view::npos;) {
    const std::size_t close = text.find('}', pos);
    if (close == std::string_view::npos) break;
    names.emplace_back(text.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return names;
}

inline std::string render(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find('{', pos);
    const std::size_t close = open == std::string_view::npos ? open : text.find('}', open);
    if (open == std::string_view::npos || close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    auto it = values.find(std::string(text.substr(open + 1, close - open - 1)));
    if (it != values.end()) {
      out.append(it->second);
    } else {
      out.append(text.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  return out;
}

inline std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

struct CompiledTemplate {
  ExpressionTree answer;
  std::vector<ExpressionTree> distractors;
};

inline CompiledTemplate compile_template(const Template& tmpl) {
  if (tmpl.distractor_exprs.empty()) {
    throw Error(ErrorCode::invalid_argument, "template needs at least one distractor expression");
  }
  for (const auto& [name, range] : tmpl.vars) {
    if (range.first > range.second) {
      throw Error(ErrorCode::invalid_argument, "empty range for template variable '" + name + "'");
    }
  }
  auto check_declared = [&](const std::string& name, std::string_view where) {
    if (!tmpl.vars.contains(name)) {
      throw Error(ErrorCode::invalid_argument, "undeclared variable '" + name + "' in " + std::string(where));
    }
  };
  for (const auto& name : placeholders(tmpl.body)) check_declared(name, "body");

  CompiledTemplate compiled;
  compiled.answer = parse_expression(tmpl.answer_expr);
  for (const auto& name : compiled.answer.variables()) check_declared(name, "answer expression");
  const std::string answer_text = strip_spaces(tmpl.answer_expr);
  for (const auto& expr : tmpl.distractor_exprs) {
    if (strip_spaces(expr) == answer_text) {
      throw Error(ErrorCode::degenerate_template, "distractor '" + expr + "' is the answer expression");
    }
    compiled.distractors.push_back(parse_expression(expr));
    for (const auto& name : compiled.distractors.back().variables()) check_declared(name, "distractor '" + expr + "'");
  }
  return compiled;
}

inline std::optional<Item> instantiate(const Template& tmpl, const CompiledTemplate& compiled,
                                       const std::map<std::string, std::int64_t>& values, std::string id,
                                       Rng& rng) {
  std::map<std::string, Rational> bindings;
  std::map<std::string, std::string> text_values;
  for (const auto& [name, v] : values) {
    bindings.emplace(name, Rational(v));
    text_values.emplace(name, std::to_string(v));
  }

  Rational answer;
  try {
    answer = evaluate(compiled.answer, bindings);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::division_by_zero) return std::nullopt;
    throw;
  }

  std::vector<Rational> kept;
  for (const auto& tree : compiled.distractors) {
    Rational value;
    try {
      value = evaluate(tree, bindings);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::division_by_zero) continue;
      throw;
    }
    if (value == answer || std::find(kept.begin(), kept.end(), value) != kept.end()) continue;
    kept.push_back(value);
  }
  if (kept.size() < 2) return std::nullopt;

  Item item;
  item.id = std::move(id);
  const std::string answer_text = format_rational(answer);
  item.options.push_back({answer_text, true, OptionKind::plain});
  for (const auto& value : kept) item.options.push_back({format_rational(value), false, OptionKind::plain});
  rng.shuffle(std::span<Option>(item.options));

  if (!tmpl.explanation.empty()) {
    auto with_answer = text_values;
    with_answer["answer"] = answer_text;
    item.explanation = render(tmpl.explanation, with_answer);
  } else {
    std::string assignments;
    for (const auto& [name, v] : text_values) {
      if (!assignments.empty()) assignments += ", ";
      assignments += name + " = " + v;
    }
    item.explanation = "With " + assignments + ": " + tmpl.answer_expr + " = " + answer_text + ".";
  }
  return item;
}

}  // namespace detail

/// One item for fixed variable values; nullopt when fewer than two distinct
/// distractors survive (or the answer divides by zero).
inline std::string render_template_body(const Template& tmpl, const std::map<std::string, std::int64_t>& values) {
  std::map<std::string, std::string> text_values;
  for (const auto& [name, v] : values) text_values.emplace(name, std::to_string(v));
  return detail::render(tmpl.body, text_values);
}

inline std::optional<Item> instantiate_template_item(const Template& tmpl,
                                                     const std::map<std::string, std::int64_t>& values,
                                                     Rng& rng, std::string id = "item") {
  auto item = detail::instantiate(tmpl, detail::compile_template(tmpl), values, std::move(id), rng);
  if (item) item->stem = render_template_body(tmpl, values);
  return item;
}

inline DrillSet generate_from_template(const Template& tmpl) {
  const auto compiled = detail::compile_template(tmpl);
  Rng rng(tmpl.seed);

  DrillSet set;
  set.id = tmpl.id;
  set.title = tmpl.title.empty() ? tmpl.id : tmpl.title;
  set.header = tmpl.header;
  set.provenance.method = "template";
  set.provenance.seed = tmpl.seed;

  for (std::size_t i = 0; i < tmpl.n_items; ++i) {
    std::optional<Item> item;
    for (std::size_t attempt = 0; attempt <= tmpl.max_retries && !item; ++attempt) {
      std::map<std::string, std::int64_t> values;
      for (const auto& [name, range] : tmpl.vars) values[name] = rng.uniform_int(range.first, range.second);
      item = detail::instantiate(tmpl, compiled, values, item_id_for(set.id, i), rng);
      if (item) item->stem = render_template_body(tmpl, values);
    }
    if (!item) {
      throw Error(ErrorCode::degenerate_template,
                  "template '" + tmpl.id + "' produced no valid item after " + std::to_string(tmpl.max_retries + 1) +
                      " draws (fewer than 2 distinct distractors)");
    }
    set.items.push_back(std::move(*item));
  }
  return set;
}

}  // namespace drillforge
