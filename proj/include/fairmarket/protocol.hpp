#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "fairmarket/groupcrypto.hpp"
#include "fairmarket/pricing.hpp"
#include "fairmarket/quality.hpp"
#include "fairmarket/relation.hpp"
#include "fairmarket/rng.hpp"

namespace fairmarket {

using json = nlohmann::json;

enum class MessageKind {
  kRegisterReq,
  kRegisterResp,
  kQueryReq,
  kQuote,
  kAgree,
  kDecline,
  kConsumeResp,
  kBalanceReq,
  kBalanceResp,
  kBalanceRangeReq,
  kBalanceRangeResp,
  kRechargeReq,
  kRechargeResp,
  kCheckBalanceReq,
  kCheckBalanceResp,
  kVerifyRangeReq,
  kVerifyRangeResp,
  kCredentialPush,
  kCredentialAck,
  kArchivePush,
  kArchiveAck,
  kRechargeNotice,
};

const char* to_string(MessageKind kind) noexcept;
MessageKind parse_message_kind(const std::string& name);
/// Response kind paired with a request kind; nullopt for responses and
/// one-way notices (Decline, RechargeNotice).
std::optional<MessageKind> response_kind(MessageKind request) noexcept;
std::vector<MessageKind> all_message_kinds();

inline const std::string kMmsId = "mms";
inline const std::string kTtpId = "ttp";
/// Party id of a buyer agent.
std::string buyer_party_id(const std::string& name);
bool is_buyer_party(const std::string& id);

struct Message {
  MessageKind kind = MessageKind::kRegisterReq;
  std::string sender;
  std::string receiver;
  std::uint64_t seq = 0;  // assigned by the bus
  json payload = json::object();

  json to_json() const;
  static Message from_json(const json& j);
};

class Outbox {
 public:
  virtual ~Outbox() = default;
  virtual void post(Message m) = 0;
};

class Party {
 public:
  virtual ~Party() = default;
  virtual const std::string& id() const = 0;
  virtual void receive(const Message& m, Outbox& out) = 0;
};

/// In-process channel. Each party has a FIFO inbox; each step delivers the
/// head of one non-empty inbox chosen by a seeded draw, so interleavings
/// across parties vary with the seed and replay exactly.
class MessageBus : public Outbox {
 public:
  explicit MessageBus(std::uint64_t seed) : rng_(seed) {}

  void attach(Party& party);
  void post(Message m) override;

  /// Delivers one message. Returns false when every inbox is empty.
  bool step();
  /// Steps until quiescent; returns the number of deliveries.
  std::size_t run(std::size_t maxSteps = 10'000'000);

  const std::vector<Message>& transcript() const noexcept { return transcript_; }
  /// One JSON object per line.
  std::string transcript_jsonl() const;
  std::size_t pending() const;

 private:
  Rng rng_;
  std::map<std::string, Party*> parties_;
  std::map<std::string, std::deque<Message>> inboxes_;
  std::vector<Message> transcript_;
  std::uint64_t nextSeq_ = 1;
};

struct ConsumptionRecord {
  std::uint64_t consumptionId = 0;
  std::uint64_t userId = 0;
  std::string query;
  std::array<double, 4> weights{};
  EncryptedAmount priceCipher;
  PriceRange quotedRange;
  EncryptedAmount preBalanceCipher;
  EncryptedAmount postBalanceCipher;
  std::uint64_t timestamp = 0;  // MMS logical clock
  std::optional<std::int64_t> escrowedPrice;  // minor units, only when escrowed

  json to_json() const;
  static ConsumptionRecord from_json(const json& j);
};

struct VendorDataset {
  Relation relation;
  QualityRuleSet rules;
  PricePoint price;
  std::vector<SelectionQuery> queries;  // sample battery for experiments
};

struct ProtocolOptions {
  std::int64_t moneyScale = 100;
  RangePolicy range;
  bool ttpEscrow = false;
  /// Widest archived range, in minor units, the TTP will scan for VerifyRange.
  /// Wider quotes are escrowed whatever ttpEscrow says.
  std::int64_t rangeSearchCap = 1'000'000;
  std::uint64_t sessionTtl = 100;  // MMS steps
  /// Adds the plaintext price to quotes. Only for adversary experiments.
  bool debugLeakPrices = false;
};

struct MarketSetup {
  std::vector<VendorDataset> datasets;
  MarketParams params;
  /// Replace params.standard with the mean K of the datasets.
  bool deriveStandard = true;
  CleaningCostModel costModel = CleaningCostModel::standard();
  GroupParams group = GroupParams::test();
  ProtocolOptions protocol;
  Instant now{};
  std::uint64_t seed = 1;
};

/// Price of a query under the buyer's weights, as computed by the MMS.
struct QuotedPrice {
  std::size_t resultSize = 0;
  PriceBreakdown breakdown;
};

/// The market manager: owns vendor data, quality profiles, accounts and
/// pending sessions. All balance mutations happen under one lock so a
/// check-and-debit is atomic even if receive() is called from several
/// threads.
class MarketManager : public Party {
 public:
  /// Assesses every dataset. Throws kSetupError on an empty vendor list.
  explicit MarketManager(MarketSetup setup);

  const std::string& id() const override { return kMmsId; }
  void receive(const Message& m, Outbox& out) override;

  const GroupParams& group() const noexcept { return setup_.group; }
  const MarketParams& params() const noexcept { return setup_.params; }
  const MarketSetup& setup() const noexcept { return setup_; }
  const std::vector<QualityProfile>& profiles() const noexcept { return profiles_; }
  const QualityProfile& profile(const std::string& relation) const;
  const VendorDataset& dataset(const std::string& relation) const;

  /// Omniscient pricing used by experiment drivers; no session is created.
  QuotedPrice price(const SelectionQuery& q, const WeightVector& w) const;

  /// Plaintext balance in minor units. Experiment observers only.
  std::int64_t balance(std::uint64_t userId) const;
  EncryptedAmount balance_cipher(std::uint64_t userId) const;
  const std::vector<ConsumptionRecord>& records() const noexcept { return records_; }
  const UserCredential& credential(std::uint64_t userId) const;
  std::uint64_t clock() const noexcept { return clock_; }
  /// Re-sends archive pushes the TTP has not acknowledged.
  void resend_unacked(Outbox& out);
  std::size_t unacked() const noexcept { return unacked_.size(); }

 private:
  struct Account {
    UserCredential credential;
    std::string party;
    std::int64_t balance = 0;
  };
  struct Session {
    std::uint64_t userId = 0;
    SelectionQuery query;
    WeightVector weights = WeightVector::uniform();
    std::int64_t price = 0;
    EncryptedAmount priceCipher;
    PriceRange range;
    std::uint64_t createdAt = 0;
  };

  Account& account_for(const Message& m);
  json handle_register(const Message& m, Outbox& out);
  json handle_query(const Message& m);
  json handle_agree(const Message& m, Outbox& out);
  void handle_decline(const Message& m);
  json handle_balance(const Message& m);
  json handle_balance_range(const Message& m);
  json handle_recharge(const Message& m, Outbox& out);

  MarketSetup setup_;
  std::vector<QualityProfile> profiles_;
  std::map<std::string, std::size_t> byName_;
  CredentialIssuer issuer_;
  Rng rng_;
  std::map<std::uint64_t, Account> accounts_;
  std::map<std::string, std::uint64_t> partyUsers_;
  std::map<std::uint64_t, Session> sessions_;
  std::map<std::tuple<std::uint64_t, std::string, std::string>, PriceRange> rangeMemo_;
  std::vector<ConsumptionRecord> records_;
  std::map<std::uint64_t, std::size_t> unacked_;  // consumption id -> record index
  std::uint64_t nextSession_ = 1;
  std::uint64_t nextConsumption_ = 1;
  std::uint64_t clock_ = 0;
  mutable std::mutex mutex_;
  // Relations never change after setup, so result sizes can be reused.
  mutable std::map<std::string, std::size_t> sizeCache_;
  mutable std::mutex cacheMutex_;
};

enum class RangeVerdict { kYes, kNo, kRejected };
const char* to_string(RangeVerdict v) noexcept;

class TrustedThirdParty : public Party {
 public:
  TrustedThirdParty(GroupParams group, ProtocolOptions options)
      : group_(std::move(group)), options_(options) {}

  const std::string& id() const override { return kTtpId; }
  void receive(const Message& m, Outbox& out) override;

  /// Idempotent; re-registration of a known id keeps the first credential.
  void register_credential(const UserCredential& cred);
  /// Idempotent on consumptionId. Throws kArchiveUnavailable when offline.
  void archive(const ConsumptionRecord& record);
  void note_recharge(std::uint64_t userId, std::int64_t minor);

  /// Throws kUnknownUser.
  Verdict check_balance(std::uint64_t userId, const EncryptedAmount& e) const;
  /// Tracked balance cipher right after the given consumption was replayed.
  std::optional<EncryptedAmount> balance_after(std::uint64_t consumptionId) const;
  /// Throws kArchiveUnavailable when offline.
  RangeVerdict verify_range(std::uint64_t consumptionId, std::uint64_t userId, const PriceRange& range,
                            const EncryptedAmount& priceCipher) const;

  void set_available(bool up) noexcept { available_ = up; }
  bool available() const noexcept { return available_; }
  bool knows(std::uint64_t userId) const { return credentials_.count(userId) != 0; }
  std::size_t credential_count() const noexcept { return credentials_.size(); }
  const std::vector<ConsumptionRecord>& archived() const noexcept { return archive_; }
  const std::set<std::uint64_t>& flagged() const noexcept { return flagged_; }

 private:
  struct Tracked {
    UserCredential credential;
    EncryptedAmount balance;  // enc of the replayed balance, kept homomorphically
  };

  GroupParams group_;
  ProtocolOptions options_;
  std::map<std::uint64_t, Tracked> credentials_;
  std::vector<ConsumptionRecord> archive_;
  std::map<std::uint64_t, std::size_t> byConsumption_;
  std::set<std::uint64_t> flagged_;  // consumption ids pushed before their user was known
  std::map<std::string, std::uint64_t> parties_;  // buyer party id -> user id
  std::map<std::uint64_t, EncryptedAmount> snapshots_;  // consumption id -> tracked balance
  bool available_ = true;
};

/// What a buyer keeps after a purchase.
struct Receipt {
  std::uint64_t consumptionId = 0;
  PriceRange range;
  EncryptedAmount before;
  EncryptedAmount price;
  EncryptedAmount after;
};

struct QuoteView {
  std::uint64_t sessionId = 0;
  PriceRange range;
  EncryptedAmount priceCipher;
  std::optional<double> leakedPrice;  // only in debug leak mode
  /// Width of the range in major units, the one number an honest quote
  /// lets a buyer compare across probes.
  double width() const { return range.width(); }
};

struct Purchase {
  Receipt receipt;
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<std::string>>> rows;
};

/// Buyer state machine: stores responses by the sequence number they answer
/// and keeps its own receipts.
class BuyerAgent : public Party {
 public:
  explicit BuyerAgent(std::string name) : name_(std::move(name)), party_(buyer_party_id(name_)) {}

  const std::string& id() const override { return party_; }
  const std::string& name() const noexcept { return name_; }
  void receive(const Message& m, Outbox& out) override;

  std::optional<std::uint64_t> userId() const noexcept { return userId_; }
  const std::optional<EncryptedAmount>& lastBalance() const noexcept { return lastBalance_; }
  const std::vector<Receipt>& receipts() const noexcept { return receipts_; }

  /// Response to the request with the given sequence number, if delivered.
  const Message* response_to(std::uint64_t seq) const;

  /// Local Verify on one of this buyer's receipts.
  Verdict verify(const Receipt& r, const GroupParams& group) const;

 private:
  friend class Marketplace;

  std::string name_;
  std::string party_;
  std::optional<std::uint64_t> userId_;
  std::optional<EncryptedAmount> lastBalance_;
  std::vector<Receipt> receipts_;
  std::map<std::uint64_t, Message> responses_;
};

/// Synchronous facade over a bus with one MMS, one TTP and any number of
/// buyers. Each call posts a request and runs the bus until quiescent;
/// non-ok response statuses are rethrown as Error.
class Marketplace {
 public:
  explicit Marketplace(MarketSetup setup);

  BuyerAgent& add_buyer(const std::string& name);
  BuyerAgent& buyer(const std::string& name);

  void recharge(BuyerAgent& b, double major);
  EncryptedAmount request_balance(BuyerAgent& b);
  PriceRange request_balance_range(BuyerAgent& b);
  QuoteView request_quote(BuyerAgent& b, const std::string& query, const WeightVector& w);
  Purchase agree(BuyerAgent& b, const QuoteView& quote);
  void decline(BuyerAgent& b, const QuoteView& quote);
  Verdict check_balance(BuyerAgent& b, const EncryptedAmount& e);
  RangeVerdict verify_range(BuyerAgent& b, std::uint64_t consumptionId, const PriceRange& range,
                            const EncryptedAmount& priceCipher);

  /// Posts without running the bus; returns the request's sequence number.
  std::uint64_t send(BuyerAgent& b, MessageKind kind, json payload, const std::string& to = kMmsId);
  /// Response payload for a request; throws Error on a non-ok status.
  json await(BuyerAgent& b, std::uint64_t seq);

  MarketManager& mms() noexcept { return *mms_; }
  TrustedThirdParty& ttp() noexcept { return *ttp_; }
  MessageBus& bus() noexcept { return bus_; }
  const GroupParams& group() const noexcept { return mms_->group(); }
  std::vector<BuyerAgent*> buyers() const;

 private:
  std::unique_ptr<MarketManager> mms_;
  std::unique_ptr<TrustedThirdParty> ttp_;
  MessageBus bus_;
  std::map<std::string, std::unique_ptr<BuyerAgent>> buyers_;
};

struct LeakFinding {
  std::uint64_t seq = 0;
  std::string kind;
  std::string receiver;
  std::string key;
};

/// Flags payload keys in buyer-bound messages that could carry a plaintext
/// price or balance: any key mentioning "amount", or mentioning "price" or
/// "balance" without ending in "Cipher" or "Range".
std::vector<LeakFinding> scan_buyer_bound(const std::vector<Message>& transcript);

}  // namespace fairmarket
