#pragma once

// SMLY reward ledger, tablets and library stock.
//
// SMLY are indivisible integer units; "1 M SMLY" is 1'000'000 units. The
// ledger is a single-writer in-memory book: every credit is either a mint
// (from kMintAccount) or a transfer between existing accounts, so the sum of
// balances always equals the total minted.

#include "drillforge/error.hpp"
#include "drillforge/grading.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace drillforge {

using Smly = std::uint64_t;

inline constexpr std::string_view kMintAccount = "MINT";

enum class AccountKind { pre_registered, self_registered, charity, tablet_escrow };

inline std::string_view to_string(AccountKind kind) {
  switch (kind) {
    case AccountKind::pre_registered: return "pre_registered";
    case AccountKind::self_registered: return "self_registered";
    case AccountKind::charity: return "charity";
    case AccountKind::tablet_escrow: return "tablet_escrow";
  }
  return "unknown";
}

inline AccountKind parse_account_kind(std::string_view text) {
  for (auto kind : {AccountKind::pre_registered, AccountKind::self_registered, AccountKind::charity,
                    AccountKind::tablet_escrow}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::invalid_argument, "unknown account kind '" + std::string(text) + "'");
}

struct Account {
  std::string id;
  AccountKind kind = AccountKind::self_registered;
  Smly balance = 0;
  std::optional<std::string> library_id;

  bool operator==(const Account&) const = default;
};

struct Transaction {
  std::uint64_t seq = 0;
  std::string from;  // kMintAccount for minted rewards
  std::string to;
  Smly amount = 0;
  std::string memo;
  Timestamp timestamp = 0;

  bool operator==(const Transaction&) const = default;
};

class Ledger {
 public:
  const Account& open_account(std::string id, AccountKind kind, std::optional<std::string> library_id = {}) {
    if (id.empty() || id == kMintAccount) throw Error(ErrorCode::invalid_argument, "invalid account id '" + id + "'");
    if (accounts_.contains(id)) throw Error(ErrorCode::conflict, "account '" + id + "' already exists");
    auto [it, _] = accounts_.emplace(id, Account{id, kind, 0, std::move(library_id)});
    return it->second;
  }

  bool has_account(std::string_view id) const { return accounts_.find(std::string(id)) != accounts_.end(); }

  const Account& account(std::string_view id) const {
    auto it = accounts_.find(std::string(id));
    if (it == accounts_.end()) throw Error(ErrorCode::not_found, "unknown account '" + std::string(id) + "'");
    return it->second;
  }

  Smly balance(std::string_view id) const { return account(id).balance; }

  const Transaction& mint(std::string_view to, Smly amount, std::string memo, Timestamp ts) {
    check_amount(amount);
    Account& dest = mutable_account(to);
    dest.balance += amount;
    minted_ += amount;
    return record(std::string(kMintAccount), dest.id, amount, std::move(memo), ts);
  }

  /// All-or-nothing: on any error no balance changes and nothing is recorded.
  const Transaction& transfer(std::string_view from, std::string_view to, Smly amount, std::string memo,
                              Timestamp ts) {
    check_amount(amount);
    if (from == to) throw Error(ErrorCode::invalid_argument, "transfer to the same account");
    Account& src = mutable_account(from);
    Account& dest = mutable_account(to);
    if (src.balance < amount) {
      throw Error(ErrorCode::insufficient_funds, "account '" + src.id + "' holds " + std::to_string(src.balance) +
                                                     " SMLY, needs " + std::to_string(amount));
    }
    src.balance -= amount;
    dest.balance += amount;
    return record(src.id, dest.id, amount, std::move(memo), ts);
  }

  const std::map<std::string, Account>& accounts() const { return accounts_; }
  const std::vector<Transaction>& transactions() const { return transactions_; }
  Smly total_minted() const { return minted_; }

  Smly total_balance() const {
    Smly sum = 0;
    for (const auto& [_, a] : accounts_) sum += a.balance;
    return sum;
  }

  bool operator==(const Ledger&) const = default;

 private:
  static void check_amount(Smly amount) {
    if (amount == 0) throw Error(ErrorCode::invalid_argument, "amount must be positive");
  }

  Account& mutable_account(std::string_view id) {
    auto it = accounts_.find(std::string(id));
    if (it == accounts_.end()) throw Error(ErrorCode::not_found, "unknown account '" + std::string(id) + "'");
    return it->second;
  }

  const Transaction& record(std::string from, std::string to, Smly amount, std::string memo, Timestamp ts) {
    transactions_.push_back({transactions_.size() + 1, std::move(from), std::move(to), amount, std::move(memo), ts});
    return transactions_.back();
  }

  std::map<std::string, Account> accounts_;
  std::vector<Transaction> transactions_;
  Smly minted_ = 0;
};

/// Balances obtained by folding a transaction log from empty; independent of
/// Ledger so the two can be compared.
inline std::map<std::string, Smly> replay_balances(std::span<const Transaction> log) {
  std::map<std::string, Smly> balances;
  std::uint64_t last_seq = 0;
  for (const auto& tx : log) {
    if (tx.seq != last_seq + 1) throw Error(ErrorCode::corrupt_log, "transaction seq gap at " + std::to_string(tx.seq));
    last_seq = tx.seq;
    if (tx.from != kMintAccount) {
      Smly& src = balances[tx.from];
      if (src < tx.amount) throw Error(ErrorCode::corrupt_log, "transaction " + std::to_string(tx.seq) + " overdraws");
      src -= tx.amount;
    }
    balances[tx.to] += tx.amount;
  }
  return balances;
}

// ---------------------------------------------------------------------------
// Reward rules

struct RewardRuleSet {
  Smly per_set_ace = 10'000;
  Smly per_collection_ace = 1'000'000;
  double self_registered_multiplier = 0.0;

  void validate() const {
    if (!(self_registered_multiplier >= 0.0 && self_registered_multiplier <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "self_registered_multiplier must be in [0, 1]");
    }
  }

  bool operator==(const RewardRuleSet&) const = default;
};

enum class RewardEvent { set_aced, collection_aced };

inline std::string_view to_string(RewardEvent event) {
  return event == RewardEvent::set_aced ? "set_aced" : "collection_aced";
}

inline RewardEvent parse_reward_event(std::string_view text) {
  if (text == "set_aced") return RewardEvent::set_aced;
  if (text == "collection_aced") return RewardEvent::collection_aced;
  throw Error(ErrorCode::invalid_argument, "unknown reward rule '" + std::string(text) + "'");
}

inline Smly reward_for_event(RewardEvent event, AccountKind kind, const RewardRuleSet& rules) {
  rules.validate();
  const Smly base = event == RewardEvent::set_aced ? rules.per_set_ace : rules.per_collection_ace;
  switch (kind) {
    case AccountKind::pre_registered:
      return base;
    case AccountKind::self_registered:
      return static_cast<Smly>(std::floor(static_cast<double>(base) * rules.self_registered_multiplier));
    default:
      return 0;  // charity and escrow accounts do not study
  }
}

// ---------------------------------------------------------------------------
// Tablets

enum class TabletStatus { available, lent, sold };

inline std::string_view to_string(TabletStatus status) {
  switch (status) {
    case TabletStatus::available: return "available";
    case TabletStatus::lent: return "lent";
    case TabletStatus::sold: return "sold";
  }
  return "unknown";
}

inline constexpr Smly kDefaultTabletPrice = 1'000'000;
inline constexpr std::size_t kFirstSaleBonus = 10;

struct Tablet {
  std::string id;
  std::string library_id;
  std::string payment_address;
  Smly price = kDefaultTabletPrice;
  TabletStatus status = TabletStatus::available;

  bool operator==(const Tablet&) const = default;
};

struct LibraryInventory {
  std::string library_id;
  std::size_t tablet_count = 0;
  bool first_sale_bonus_paid = false;

  bool operator==(const LibraryInventory&) const = default;
};

inline std::string escrow_account_id(std::string_view library_id) { return "escrow:" + std::string(library_id); }

struct PaymentRequest {
  std::string payment_address;
  Smly amount = 0;
  std::string tablet_id;

  bool operator==(const PaymentRequest&) const = default;
};

namespace detail {
inline bool payload_safe(std::string_view s) {
  return !s.empty() && s.find_first_of("?&= \t\r\n") == std::string_view::npos;
}
}  // namespace detail

/// "smly:<payment_address>?amount=<price>&tablet=<id>"
inline std::string payment_payload(const Tablet& tablet) {
  return "smly:" + tablet.payment_address + "?amount=" + std::to_string(tablet.price) + "&tablet=" + tablet.id;
}

inline PaymentRequest parse_payment_payload(std::string_view payload) {
  auto fail = [&](std::size_t at, const std::string& what) -> PaymentRequest {
    throw Error(ErrorCode::invalid_argument, "malformed payment payload: " + what, at);
  };
  constexpr std::string_view scheme = "smly:";
  constexpr std::string_view amount_key = "?amount=";
  constexpr std::string_view tablet_key = "&tablet=";
  if (!payload.starts_with(scheme)) return fail(0, "expected 'smly:' prefix");

  const std::size_t q = payload.find('?', scheme.size());
  if (q == std::string_view::npos) return fail(payload.size(), "missing '?amount='");
  PaymentRequest req;
  req.payment_address = std::string(payload.substr(scheme.size(), q - scheme.size()));
  if (!detail::payload_safe(req.payment_address)) return fail(scheme.size(), "empty or invalid payment address");
  if (payload.substr(q, amount_key.size()) != amount_key) return fail(q, "expected '?amount='");

  const std::size_t digits = q + amount_key.size();
  const std::size_t amp = payload.find('&', digits);
  if (amp == std::string_view::npos) return fail(payload.size(), "missing '&tablet='");
  const std::string_view amount_text = payload.substr(digits, amp - digits);
  const auto [end, ec] = std::from_chars(amount_text.data(), amount_text.data() + amount_text.size(), req.amount);
  if (amount_text.empty() || ec != std::errc() || end != amount_text.data() + amount_text.size() ||
      amount_text.front() == '+') {
    return fail(digits, "amount is not an unsigned integer");
  }
  if (payload.substr(amp, tablet_key.size()) != tablet_key) return fail(amp, "expected '&tablet='");
  req.tablet_id = std::string(payload.substr(amp + tablet_key.size()));
  if (!detail::payload_safe(req.tablet_id)) return fail(amp + tablet_key.size(), "empty or invalid tablet id");
  return req;
}

struct TabletRegistry {
  std::map<std::string, Tablet> tablets;
  std::map<std::string, LibraryInventory> inventories;

  void register_library(const std::string& library_id, std::size_t tablet_count) {
    if (library_id.empty()) throw Error(ErrorCode::invalid_argument, "empty library id");
    if (inventories.contains(library_id)) throw Error(ErrorCode::conflict, "library '" + library_id + "' exists");
    inventories.emplace(library_id, LibraryInventory{library_id, tablet_count, false});
  }

  const Tablet& register_tablet(Tablet tablet) {
    if (!detail::payload_safe(tablet.id)) throw Error(ErrorCode::invalid_argument, "invalid tablet id '" + tablet.id + "'");
    if (tablet.payment_address.empty()) tablet.payment_address = "ADDR-" + tablet.id;
    if (!detail::payload_safe(tablet.payment_address)) {
      throw Error(ErrorCode::invalid_argument, "invalid payment address '" + tablet.payment_address + "'");
    }
    if (tablet.price == 0) throw Error(ErrorCode::invalid_argument, "tablet price must be positive");
    if (!inventories.contains(tablet.library_id)) {
      throw Error(ErrorCode::not_found, "unknown library '" + tablet.library_id + "'");
    }
    if (tablets.contains(tablet.id)) throw Error(ErrorCode::conflict, "tablet '" + tablet.id + "' exists");
    for (const auto& [_, t] : tablets) {
      if (t.payment_address == tablet.payment_address) {
        throw Error(ErrorCode::conflict, "payment address '" + tablet.payment_address + "' already in use");
      }
    }
    auto [it, _] = tablets.emplace(tablet.id, std::move(tablet));
    return it->second;
  }

  const Tablet& tablet(std::string_view id) const {
    auto it = tablets.find(std::string(id));
    if (it == tablets.end()) throw Error(ErrorCode::not_found, "unknown tablet '" + std::string(id) + "'");
    return it->second;
  }

  const LibraryInventory& inventory(std::string_view library_id) const {
    auto it = inventories.find(std::string(library_id));
    if (it == inventories.end()) throw Error(ErrorCode::not_found, "unknown library '" + std::string(library_id) + "'");
    return it->second;
  }

  bool operator==(const TabletRegistry&) const = default;
};

struct PurchaseReceipt {
  std::string tablet_id;
  std::string library_id;
  std::string student_id;
  Smly price = 0;
  std::uint64_t transaction_seq = 0;
  std::size_t tablet_count_after = 0;
  bool first_sale_bonus = false;

  bool operator==(const PurchaseReceipt&) const = default;
};

/// Pays the tablet's price into the library escrow, marks it sold and
/// restocks the library: +10 on the first sale, +1 afterwards. Every
/// precondition is checked before anything changes.
inline PurchaseReceipt purchase_tablet(Ledger& ledger, TabletRegistry& registry, std::string_view student_id,
                                       std::string_view payload, Timestamp ts) {
  const PaymentRequest req = parse_payment_payload(payload);
  const Tablet& tablet = registry.tablet(req.tablet_id);
  if (tablet.payment_address != req.payment_address || tablet.price != req.amount) {
    throw Error(ErrorCode::invalid_argument, "payment payload does not match tablet '" + tablet.id + "'");
  }
  if (tablet.status == TabletStatus::sold) {
    throw Error(ErrorCode::already_sold, "tablet '" + tablet.id + "' is already sold");
  }
  const Account& student = ledger.account(student_id);
  const std::string escrow = escrow_account_id(tablet.library_id);
  ledger.account(escrow);
  registry.inventory(tablet.library_id);
  if (student.balance < tablet.price) {
    throw Error(ErrorCode::insufficient_funds, "balance " + std::to_string(student.balance) + " SMLY, price " +
                                                   std::to_string(tablet.price) + " SMLY");
  }

  const auto& tx = ledger.transfer(student.id, escrow, tablet.price, "tablet " + tablet.id, ts);
  Tablet& sold = registry.tablets.at(tablet.id);
  sold.status = TabletStatus::sold;
  LibraryInventory& inv = registry.inventories.at(sold.library_id);
  if (inv.tablet_count > 0) --inv.tablet_count;
  const bool bonus = !inv.first_sale_bonus_paid;
  inv.tablet_count += bonus ? kFirstSaleBonus : 1;
  inv.first_sale_bonus_paid = true;

  return {sold.id, sold.library_id, std::string(student_id), sold.price, tx.seq, inv.tablet_count, bonus};
}

}  // namespace drillforge
