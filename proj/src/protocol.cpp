#include "fairmarket/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "fairmarket/error.hpp"

namespace fairmarket {

namespace {

struct KindName {
  MessageKind kind;
  const char* name;
  std::optional<MessageKind> response;
};

const std::vector<KindName>& kind_table() {
  static const std::vector<KindName> table{
      {MessageKind::kRegisterReq, "RegisterReq", MessageKind::kRegisterResp},
      {MessageKind::kRegisterResp, "RegisterResp", std::nullopt},
      {MessageKind::kQueryReq, "QueryReq", MessageKind::kQuote},
      {MessageKind::kQuote, "Quote", std::nullopt},
      {MessageKind::kAgree, "Agree", MessageKind::kConsumeResp},
      {MessageKind::kDecline, "Decline", std::nullopt},
      {MessageKind::kConsumeResp, "ConsumeResp", std::nullopt},
      {MessageKind::kBalanceReq, "BalanceReq", MessageKind::kBalanceResp},
      {MessageKind::kBalanceResp, "BalanceResp", std::nullopt},
      {MessageKind::kBalanceRangeReq, "BalanceRangeReq", MessageKind::kBalanceRangeResp},
      {MessageKind::kBalanceRangeResp, "BalanceRangeResp", std::nullopt},
      {MessageKind::kRechargeReq, "RechargeReq", MessageKind::kRechargeResp},
      {MessageKind::kRechargeResp, "RechargeResp", std::nullopt},
      {MessageKind::kCheckBalanceReq, "CheckBalanceReq", MessageKind::kCheckBalanceResp},
      {MessageKind::kCheckBalanceResp, "CheckBalanceResp", std::nullopt},
      {MessageKind::kVerifyRangeReq, "VerifyRangeReq", MessageKind::kVerifyRangeResp},
      {MessageKind::kVerifyRangeResp, "VerifyRangeResp", std::nullopt},
      {MessageKind::kCredentialPush, "CredentialPush", MessageKind::kCredentialAck},
      {MessageKind::kCredentialAck, "CredentialAck", std::nullopt},
      {MessageKind::kArchivePush, "ArchivePush", MessageKind::kArchiveAck},
      {MessageKind::kArchiveAck, "ArchiveAck", std::nullopt},
      {MessageKind::kRechargeNotice, "RechargeNotice", std::nullopt},
  };
  return table;
}

const std::string kBuyerPrefix = "buyer:";

json range_json(const PriceRange& r) { return {{"lo", r.lo}, {"hi", r.hi}}; }

PriceRange range_from(const json& j) { return {j.at("lo").get<double>(), j.at("hi").get<double>()}; }

EncryptedAmount cipher_from(const json& j) { return {from_hex(j.get<std::string>())}; }

json ok_payload(const Message& request) { return {{"status", "ok"}, {"replyTo", request.seq}}; }

std::uint64_t user_field(const json& payload) {
  if (!payload.contains("userId")) throw Error(ErrorCode::kUnknownUser, "request names no user");
  return payload.at("userId").get<std::uint64_t>();
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void scan_keys(const json& j, const Message& m, std::vector<LeakFinding>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string low = lower(it.key());
      const bool hidden = ends_with(it.key(), "Cipher") || ends_with(it.key(), "Range");
      if (low.find("amount") != std::string::npos ||
          ((low.find("price") != std::string::npos || low.find("balance") != std::string::npos) && !hidden)) {
        out.push_back({m.seq, to_string(m.kind), m.receiver, it.key()});
      }
      scan_keys(it.value(), m, out);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) scan_keys(v, m, out);
  }
}

}  // namespace

const char* to_string(MessageKind kind) noexcept {
  for (const auto& k : kind_table())
    if (k.kind == kind) return k.name;
  return "Unknown";
}

MessageKind parse_message_kind(const std::string& name) {
  for (const auto& k : kind_table())
    if (name == k.name) return k.kind;
  throw Error(ErrorCode::kInvalidArgument, "unknown message kind '" + name + "'");
}

std::optional<MessageKind> response_kind(MessageKind request) noexcept {
  for (const auto& k : kind_table())
    if (k.kind == request) return k.response;
  return std::nullopt;
}

std::vector<MessageKind> all_message_kinds() {
  std::vector<MessageKind> out;
  for (const auto& k : kind_table()) out.push_back(k.kind);
  return out;
}

std::string buyer_party_id(const std::string& name) { return kBuyerPrefix + name; }

bool is_buyer_party(const std::string& id) { return id.rfind(kBuyerPrefix, 0) == 0; }

json Message::to_json() const {
  return {{"kind", to_string(kind)}, {"sender", sender}, {"receiver", receiver}, {"seq", seq}, {"payload", payload}};
}

Message Message::from_json(const json& j) {
  Message m;
  m.kind = parse_message_kind(j.at("kind").get<std::string>());
  m.sender = j.at("sender").get<std::string>();
  m.receiver = j.at("receiver").get<std::string>();
  m.seq = j.at("seq").get<std::uint64_t>();
  m.payload = j.at("payload");
  return m;
}

void MessageBus::attach(Party& party) {
  parties_[party.id()] = &party;
  inboxes_[party.id()];
}

void MessageBus::post(Message m) {
  if (!parties_.count(m.receiver)) throw Error(ErrorCode::kInvalidArgument, "no party '" + m.receiver + "'");
  m.seq = nextSeq_++;
  transcript_.push_back(m);
  inboxes_[m.receiver].push_back(std::move(m));
}

bool MessageBus::step() {
  std::vector<std::string> ready;
  for (const auto& [id, box] : inboxes_)
    if (!box.empty()) ready.push_back(id);
  if (ready.empty()) return false;
  const auto& id = ready[rng_.below(ready.size())];
  auto& box = inboxes_[id];
  Message m = std::move(box.front());
  box.pop_front();
  parties_.at(id)->receive(m, *this);
  return true;
}

std::size_t MessageBus::run(std::size_t maxSteps) {
  std::size_t n = 0;
  while (n < maxSteps && step()) ++n;
  return n;
}

std::string MessageBus::transcript_jsonl() const {
  std::string out;
  for (const auto& m : transcript_) {
    out += m.to_json().dump();
    out += '\n';
  }
  return out;
}

std::size_t MessageBus::pending() const {
  std::size_t n = 0;
  for (const auto& [id, box] : inboxes_) n += box.size();
  return n;
}

json ConsumptionRecord::to_json() const {
  json j{{"consumptionId", consumptionId},
         {"userId", userId},
         {"query", query},
         {"weights", weights},
         {"priceCipher", priceCipher.hex()},
         {"quotedRange", range_json(quotedRange)},
         {"preBalanceCipher", preBalanceCipher.hex()},
         {"postBalanceCipher", postBalanceCipher.hex()},
         {"timestamp", timestamp}};
  if (escrowedPrice) j["escrowedPrice"] = *escrowedPrice;
  return j;
}

ConsumptionRecord ConsumptionRecord::from_json(const json& j) {
  ConsumptionRecord r;
  r.consumptionId = j.at("consumptionId").get<std::uint64_t>();
  r.userId = j.at("userId").get<std::uint64_t>();
  r.query = j.at("query").get<std::string>();
  r.weights = j.at("weights").get<std::array<double, 4>>();
  r.priceCipher = cipher_from(j.at("priceCipher"));
  r.quotedRange = range_from(j.at("quotedRange"));
  r.preBalanceCipher = cipher_from(j.at("preBalanceCipher"));
  r.postBalanceCipher = cipher_from(j.at("postBalanceCipher"));
  r.timestamp = j.at("timestamp").get<std::uint64_t>();
  if (j.contains("escrowedPrice")) r.escrowedPrice = j.at("escrowedPrice").get<std::int64_t>();
  return r;
}

// ---------------------------------------------------------------- MMS

MarketManager::MarketManager(MarketSetup setup)
    : setup_(std::move(setup)), issuer_(setup_.group), rng_(setup_.seed) {
  if (setup_.datasets.empty()) throw Error(ErrorCode::kSetupError, "the market needs at least one dataset");
  setup_.params.validate();
  setup_.costModel.validate();
  setup_.protocol.range.validate();
  if (setup_.protocol.moneyScale < 1) throw Error(ErrorCode::kInvalidConfig, "moneyScale must be positive");
  for (std::size_t i = 0; i < setup_.datasets.size(); ++i) {
    auto& d = setup_.datasets[i];
    if (d.price.relation.empty()) d.price.relation = d.relation.name();
    if (d.price.relation != d.relation.name())
      throw Error(ErrorCode::kSetupError, "price point names '" + d.price.relation + "' for relation '" +
                                              d.relation.name() + "'");
    if (!byName_.emplace(d.relation.name(), i).second)
      throw Error(ErrorCode::kSetupError, "duplicate relation '" + d.relation.name() + "'");
    profiles_.push_back(assess_all(d.relation, d.rules, setup_.now, setup_.params.kmax));
  }
  if (setup_.deriveStandard) {
    setup_.params.standard = compute_market_baseline(profiles_);
    setup_.params.validate();
  }
}

const VendorDataset& MarketManager::dataset(const std::string& relation) const {
  auto it = byName_.find(relation);
  if (it == byName_.end()) throw Error(ErrorCode::kUnknownRelation, "no relation '" + relation + "'");
  return setup_.datasets[it->second];
}

const QualityProfile& MarketManager::profile(const std::string& relation) const {
  dataset(relation);
  return profiles_[byName_.at(relation)];
}

QuotedPrice MarketManager::price(const SelectionQuery& q, const WeightVector& w) const {
  const auto& d = dataset(q.relation);
  QuotedPrice out;
  const std::string key = format_query(q);
  bool cached = false;
  {
    std::lock_guard lock(cacheMutex_);
    if (auto it = sizeCache_.find(key); it != sizeCache_.end()) {
      out.resultSize = it->second;
      cached = true;
    }
  }
  if (!cached) {
    out.resultSize = run_query(d.relation, q).size();
    std::lock_guard lock(cacheMutex_);
    sizeCache_[key] = out.resultSize;
  }
  out.breakdown = quality_price(base_price(d.price, out.resultSize), profile(q.relation), w, setup_.params,
                                setup_.costModel, setup_.protocol.moneyScale);
  return out;
}

std::int64_t MarketManager::balance(std::uint64_t userId) const {
  std::lock_guard lock(mutex_);
  auto it = accounts_.find(userId);
  if (it == accounts_.end()) throw Error(ErrorCode::kUnknownUser, "no user " + std::to_string(userId));
  return it->second.balance;
}

EncryptedAmount MarketManager::balance_cipher(std::uint64_t userId) const {
  std::lock_guard lock(mutex_);
  auto it = accounts_.find(userId);
  if (it == accounts_.end()) throw Error(ErrorCode::kUnknownUser, "no user " + std::to_string(userId));
  return enc(setup_.group, it->second.credential, it->second.balance);
}

const UserCredential& MarketManager::credential(std::uint64_t userId) const {
  std::lock_guard lock(mutex_);
  auto it = accounts_.find(userId);
  if (it == accounts_.end()) throw Error(ErrorCode::kUnknownUser, "no user " + std::to_string(userId));
  return it->second.credential;
}

MarketManager::Account& MarketManager::account_for(const Message& m) {
  auto bound = partyUsers_.find(m.sender);
  if (bound == partyUsers_.end()) throw Error(ErrorCode::kUnknownUser, m.sender + " is not registered");
  if (user_field(m.payload) != bound->second)
    throw Error(ErrorCode::kUnknownUser, m.sender + " may not act for user " + std::to_string(user_field(m.payload)));
  return accounts_.at(bound->second);
}

void MarketManager::receive(const Message& m, Outbox& out) {
  std::lock_guard lock(mutex_);
  ++clock_;
  if (m.kind == MessageKind::kArchiveAck) {
    if (m.payload.value("status", "") == "ok") unacked_.erase(m.payload.at("consumptionId").get<std::uint64_t>());
    return;
  }
  if (m.kind == MessageKind::kCredentialAck) return;
  if (m.kind == MessageKind::kDecline) {
    try {
      handle_decline(m);
    } catch (const Error&) {
      // A decline for an unknown session changes nothing.
    }
    return;
  }
  const auto reply = response_kind(m.kind);
  if (!reply) return;
  json payload;
  try {
    switch (m.kind) {
      case MessageKind::kRegisterReq: payload = handle_register(m, out); break;
      case MessageKind::kQueryReq: payload = handle_query(m); break;
      case MessageKind::kAgree: payload = handle_agree(m, out); break;
      case MessageKind::kBalanceReq: payload = handle_balance(m); break;
      case MessageKind::kBalanceRangeReq: payload = handle_balance_range(m); break;
      case MessageKind::kRechargeReq: payload = handle_recharge(m, out); break;
      default: throw Error(ErrorCode::kInvalidArgument, std::string("the market does not serve ") + to_string(m.kind));
    }
  } catch (const Error& e) {
    payload = {{"status", to_string(e.code())}, {"replyTo", m.seq}, {"message", e.what()}};
  } catch (const std::exception& e) {
    payload = {{"status", to_string(ErrorCode::kInvalidArgument)}, {"replyTo", m.seq}, {"message", e.what()}};
  }
  out.post({*reply, kMmsId, m.sender, 0, std::move(payload)});
}

json MarketManager::handle_register(const Message& m, Outbox& out) {
  if (!is_buyer_party(m.sender)) throw Error(ErrorCode::kInvalidArgument, "only buyers register");
  std::uint64_t userId;
  if (auto it = partyUsers_.find(m.sender); it != partyUsers_.end()) {
    userId = it->second;
  } else {
    UserCredential cred = issuer_.reg(rng_);
    userId = cred.userId;
    accounts_[userId] = {cred, m.sender, 0};
    partyUsers_[m.sender] = userId;
    out.post({MessageKind::kCredentialPush, kMmsId, kTtpId, 0,
              {{"userId", userId}, {"party", m.sender}, {"generator", to_hex(cred.generator)},
               {"publicKey", cred.publicKey}}});
  }
  const auto& acct = accounts_.at(userId);
  json p = ok_payload(m);
  p["userId"] = userId;
  p["publicKey"] = acct.credential.publicKey;
  p["secretKey"] = acct.credential.secretKey;
  p["balanceCipher"] = enc(setup_.group, acct.credential, acct.balance).hex();
  return p;
}

json MarketManager::handle_query(const Message& m) {
  const Account& acct = account_for(m);
  const SelectionQuery q = parse_query(m.payload.at("query").get<std::string>());
  const WeightVector w(m.payload.at("weights").get<std::array<double, 4>>());
  const QuotedPrice qp = price(q, w);
  const std::int64_t scale = setup_.protocol.moneyScale;
  const std::int64_t minor = qp.breakdown.minor;
  const EncryptedAmount cipher = enc(setup_.group, acct.credential, minor);

  // One range per (user, query, price): re-quoting cannot be used to
  // intersect independently drawn ranges around the same price. The width
  // follows the query's base price, which does not depend on the weights.
  // Sharing a range across queries would leak when two prices coincide.
  const auto key = std::make_tuple(acct.credential.userId, format_query(q), cipher.hex());
  auto memo = rangeMemo_.find(key);
  if (memo == rangeMemo_.end()) {
    const auto reference = to_minor_units(qp.breakdown.basePrice, scale);
    memo = rangeMemo_.emplace(key, make_range(minor, scale, setup_.protocol.range, rng_, reference)).first;
  }

  Session s;
  s.userId = acct.credential.userId;
  s.query = q;
  s.weights = w;
  s.price = minor;
  s.priceCipher = cipher;
  s.range = memo->second;
  s.createdAt = clock_;
  const std::uint64_t sessionId = nextSession_++;
  sessions_.emplace(sessionId, s);

  json p = ok_payload(m);
  p["sessionId"] = sessionId;
  p["relation"] = q.relation;
  p["priceRange"] = range_json(s.range);
  p["priceCipher"] = cipher.hex();
  if (setup_.protocol.debugLeakPrices) p["debugPlainPrice"] = static_cast<double>(minor) / static_cast<double>(scale);
  return p;
}

json MarketManager::handle_agree(const Message& m, Outbox& out) {
  Account& acct = account_for(m);
  const auto sessionId = m.payload.at("sessionId").get<std::uint64_t>();
  auto it = sessions_.find(sessionId);
  if (it == sessions_.end() || it->second.userId != acct.credential.userId)
    throw Error(ErrorCode::kStaleSession, "no pending session " + std::to_string(sessionId));
  const Session s = it->second;
  sessions_.erase(it);
  if (clock_ - s.createdAt > setup_.protocol.sessionTtl)
    throw Error(ErrorCode::kStaleSession, "session " + std::to_string(sessionId) + " expired");
  if (acct.balance < s.price) throw Error(ErrorCode::kInsufficientBalance, "balance does not cover the price");

  const auto& group = setup_.group;
  ConsumptionRecord r;
  r.consumptionId = nextConsumption_++;
  r.userId = acct.credential.userId;
  r.query = format_query(s.query);
  r.weights = s.weights.values();
  r.priceCipher = s.priceCipher;
  r.quotedRange = s.range;
  r.preBalanceCipher = enc(group, acct.credential, acct.balance);
  acct.balance -= s.price;
  r.postBalanceCipher = enc(group, acct.credential, acct.balance);
  r.timestamp = clock_;
  const auto scale = static_cast<double>(setup_.protocol.moneyScale);
  const double widthMinor = std::ceil(s.range.width() * scale - 1e-6);
  if (setup_.protocol.ttpEscrow || widthMinor > static_cast<double>(setup_.protocol.rangeSearchCap))
    r.escrowedPrice = s.price;

  records_.push_back(r);
  unacked_[r.consumptionId] = records_.size() - 1;
  out.post({MessageKind::kArchivePush, kMmsId, kTtpId, 0, {{"record", r.to_json()}}});

  const ResultSet res = run_query(dataset(s.query.relation).relation, s.query);
  json p = ok_payload(m);
  p["consumptionId"] = r.consumptionId;
  p["priceCipher"] = r.priceCipher.hex();
  p["priceRange"] = range_json(r.quotedRange);
  p["balanceCipher"] = r.postBalanceCipher.hex();
  p["columns"] = res.columns;
  json rows = json::array();
  for (const auto& row : res.rows) {
    json jr = json::array();
    for (const auto& c : row) jr.push_back(c ? json(*c) : json(nullptr));
    rows.push_back(std::move(jr));
  }
  p["rows"] = std::move(rows);
  return p;
}

void MarketManager::handle_decline(const Message& m) {
  const Account& acct = account_for(m);
  auto it = sessions_.find(m.payload.at("sessionId").get<std::uint64_t>());
  if (it != sessions_.end() && it->second.userId == acct.credential.userId) sessions_.erase(it);
}

json MarketManager::handle_balance(const Message& m) {
  const Account& acct = account_for(m);
  json p = ok_payload(m);
  p["balanceCipher"] = enc(setup_.group, acct.credential, acct.balance).hex();
  return p;
}

json MarketManager::handle_balance_range(const Message& m) {
  const Account& acct = account_for(m);
  json p = ok_payload(m);
  p["balanceRange"] = range_json(make_range(acct.balance, setup_.protocol.moneyScale, setup_.protocol.range, rng_));
  return p;
}

json MarketManager::handle_recharge(const Message& m, Outbox& out) {
  Account& acct = account_for(m);
  const double major = m.payload.at("amount").get<double>();
  if (!(major >= 0.0) || !std::isfinite(major)) throw Error(ErrorCode::kNegativeAmount, "recharge must be non-negative");
  const std::int64_t minor = to_minor_units(major, setup_.protocol.moneyScale);
  // Fails with kAmountOutOfRange before any state changes.
  const EncryptedAmount after = enc(setup_.group, acct.credential, acct.balance + minor);
  acct.balance += minor;
  out.post({MessageKind::kRechargeNotice, kMmsId, kTtpId, 0,
            {{"userId", acct.credential.userId}, {"amountMinor", minor}}});
  json p = ok_payload(m);
  p["balanceCipher"] = after.hex();
  return p;
}

void MarketManager::resend_unacked(Outbox& out) {
  std::lock_guard lock(mutex_);
  for (const auto& [cid, idx] : unacked_)
    out.post({MessageKind::kArchivePush, kMmsId, kTtpId, 0, {{"record", records_[idx].to_json()}}});
}

// ---------------------------------------------------------------- TTP

const char* to_string(RangeVerdict v) noexcept {
  switch (v) {
    case RangeVerdict::kYes: return "YES";
    case RangeVerdict::kNo: return "NO";
    case RangeVerdict::kRejected: return "REJECTED";
  }
  return "REJECTED";
}

void TrustedThirdParty::register_credential(const UserCredential& cred) {
  if (credentials_.count(cred.userId)) return;
  Tracked t{cred, enc(group_, cred, 0)};
  // Archive entries that arrived before the credential.
  for (const auto& r : archive_) {
    if (r.userId != cred.userId) continue;
    t.balance.value = t.balance.value * inv(r.priceCipher, group_).value % group_.modulus;
    snapshots_[r.consumptionId] = t.balance;
  }
  credentials_.emplace(cred.userId, std::move(t));
}

void TrustedThirdParty::archive(const ConsumptionRecord& record) {
  if (!available_) throw Error(ErrorCode::kArchiveUnavailable, "archive offline");
  if (byConsumption_.count(record.consumptionId)) return;
  byConsumption_[record.consumptionId] = archive_.size();
  archive_.push_back(record);
  auto it = credentials_.find(record.userId);
  if (it == credentials_.end()) {
    flagged_.insert(record.consumptionId);
    return;
  }
  auto& b = it->second.balance.value;
  b = b * inv(record.priceCipher, group_).value % group_.modulus;
  snapshots_[record.consumptionId] = it->second.balance;
}

std::optional<EncryptedAmount> TrustedThirdParty::balance_after(std::uint64_t consumptionId) const {
  auto it = snapshots_.find(consumptionId);
  if (it == snapshots_.end()) return std::nullopt;
  return it->second;
}

void TrustedThirdParty::note_recharge(std::uint64_t userId, std::int64_t minor) {
  auto it = credentials_.find(userId);
  if (it == credentials_.end()) throw Error(ErrorCode::kUnknownUser, "no user " + std::to_string(userId));
  auto& b = it->second.balance.value;
  b = b * enc(group_, it->second.credential, minor).value % group_.modulus;
}

Verdict TrustedThirdParty::check_balance(std::uint64_t userId, const EncryptedAmount& e) const {
  auto it = credentials_.find(userId);
  if (it == credentials_.end()) throw Error(ErrorCode::kUnknownUser, "no user " + std::to_string(userId));
  return e.value == it->second.balance.value ? Verdict::kYes : Verdict::kNo;
}

RangeVerdict TrustedThirdParty::verify_range(std::uint64_t consumptionId, std::uint64_t userId,
                                             const PriceRange& range, const EncryptedAmount& priceCipher) const {
  if (!available_) throw Error(ErrorCode::kArchiveUnavailable, "archive offline");
  auto at = byConsumption_.find(consumptionId);
  if (at == byConsumption_.end()) return RangeVerdict::kRejected;
  const auto& r = archive_[at->second];
  if (r.userId != userId || !(r.quotedRange == range)) return RangeVerdict::kRejected;
  if (!(r.priceCipher == priceCipher)) return RangeVerdict::kNo;
  auto cred = credentials_.find(userId);
  if (cred == credentials_.end()) return RangeVerdict::kNo;
  const auto& g = cred->second.credential;
  const auto scale = static_cast<double>(options_.moneyScale);

  if (r.escrowedPrice) {
    const std::int64_t p = *r.escrowedPrice;
    const bool inside = range.contains(static_cast<double>(p) / scale);
    return inside && enc(group_, g, p) == priceCipher ? RangeVerdict::kYes : RangeVerdict::kNo;
  }
  const auto lo = static_cast<std::int64_t>(std::ceil(range.lo * scale - 1e-6));
  const auto hi = static_cast<std::int64_t>(std::floor(range.hi * scale + 1e-6));
  if (hi < lo || hi - lo > options_.rangeSearchCap) return RangeVerdict::kNo;
  EncryptedAmount c = enc(group_, g, std::max<std::int64_t>(lo, 0));
  for (std::int64_t v = std::max<std::int64_t>(lo, 0); v <= hi; ++v) {
    if (c == priceCipher) return RangeVerdict::kYes;
    c.value = c.value * g.generator % group_.modulus;
  }
  return RangeVerdict::kNo;
}

void TrustedThirdParty::receive(const Message& m, Outbox& out) {
  const auto reply = response_kind(m.kind);
  json p{{"status", "ok"}, {"replyTo", m.seq}};
  try {
    switch (m.kind) {
      case MessageKind::kCredentialPush: {
        if (m.sender != kMmsId) throw Error(ErrorCode::kInvalidArgument, "credentials come from the market");
        UserCredential cred;
        cred.userId = user_field(m.payload);
        cred.generator = from_hex(m.payload.at("generator").get<std::string>());
        cred.publicKey = m.payload.value("publicKey", "");
        register_credential(cred);
        parties_[m.payload.at("party").get<std::string>()] = cred.userId;
        p["userId"] = cred.userId;
        break;
      }
      case MessageKind::kArchivePush: {
        if (m.sender != kMmsId) throw Error(ErrorCode::kInvalidArgument, "records come from the market");
        const auto r = ConsumptionRecord::from_json(m.payload.at("record"));
        p["consumptionId"] = r.consumptionId;
        archive(r);
        break;
      }
      case MessageKind::kRechargeNotice:
        if (m.sender == kMmsId) note_recharge(user_field(m.payload), m.payload.at("amountMinor").get<std::int64_t>());
        return;
      case MessageKind::kCheckBalanceReq: {
        const auto user = user_field(m.payload);
        auto bound = parties_.find(m.sender);
        if (bound == parties_.end() || bound->second != user)
          throw Error(ErrorCode::kUnknownUser, m.sender + " may not ask about user " + std::to_string(user));
        p["verdict"] = to_string(check_balance(user, cipher_from(m.payload.at("balanceCipher"))));
        break;
      }
      case MessageKind::kVerifyRangeReq: {
        const auto user = user_field(m.payload);
        auto bound = parties_.find(m.sender);
        // Answering for someone else's user id would turn the TTP into an
        // oracle on that user's purchases.
        const bool own = bound != parties_.end() && bound->second == user;
        const auto v = own ? verify_range(m.payload.at("consumptionId").get<std::uint64_t>(), user,
                                          range_from(m.payload.at("priceRange")),
                                          cipher_from(m.payload.at("priceCipher")))
                           : RangeVerdict::kRejected;
        p["verdict"] = to_string(v);
        break;
      }
      default:
        throw Error(ErrorCode::kInvalidArgument, std::string("the TTP does not serve ") + to_string(m.kind));
    }
  } catch (const Error& e) {
    p["status"] = to_string(e.code());
    p["message"] = e.what();
  } catch (const std::exception& e) {
    p["status"] = to_string(ErrorCode::kInvalidArgument);
    p["message"] = e.what();
  }
  if (reply) out.post({*reply, kTtpId, m.sender, 0, std::move(p)});
}

// ---------------------------------------------------------------- buyer

void BuyerAgent::receive(const Message& m, Outbox& /*out*/) {
  if (!m.payload.contains("replyTo")) return;
  const auto seq = m.payload.at("replyTo").get<std::uint64_t>();
  if (m.payload.value("status", "") == "ok") {
    switch (m.kind) {
      case MessageKind::kRegisterResp:
        userId_ = m.payload.at("userId").get<std::uint64_t>();
        lastBalance_ = cipher_from(m.payload.at("balanceCipher"));
        break;
      case MessageKind::kBalanceResp:
      case MessageKind::kRechargeResp:
        lastBalance_ = cipher_from(m.payload.at("balanceCipher"));
        break;
      case MessageKind::kConsumeResp: {
        Receipt r;
        r.consumptionId = m.payload.at("consumptionId").get<std::uint64_t>();
        r.range = range_from(m.payload.at("priceRange"));
        r.price = cipher_from(m.payload.at("priceCipher"));
        r.after = cipher_from(m.payload.at("balanceCipher"));
        r.before = lastBalance_.value_or(EncryptedAmount{});
        lastBalance_ = r.after;
        receipts_.push_back(r);
        break;
      }
      default: break;
    }
  }
  responses_[seq] = m;
}

const Message* BuyerAgent::response_to(std::uint64_t seq) const {
  auto it = responses_.find(seq);
  return it == responses_.end() ? nullptr : &it->second;
}

Verdict BuyerAgent::verify(const Receipt& r, const GroupParams& group) const {
  return verify_consumption(r.before, r.price, r.after, group);
}

// ---------------------------------------------------------------- facade

Marketplace::Marketplace(MarketSetup setup)
    : bus_(setup.seed ^ 0x5bd1e995ULL) {
  auto group = setup.group;
  auto options = setup.protocol;
  mms_ = std::make_unique<MarketManager>(std::move(setup));
  ttp_ = std::make_unique<TrustedThirdParty>(std::move(group), options);
  bus_.attach(*mms_);
  bus_.attach(*ttp_);
}

BuyerAgent& Marketplace::add_buyer(const std::string& name) {
  auto [it, fresh] = buyers_.emplace(name, nullptr);
  if (!fresh) return *it->second;
  it->second = std::make_unique<BuyerAgent>(name);
  BuyerAgent& b = *it->second;
  bus_.attach(b);
  await(b, send(b, MessageKind::kRegisterReq, json::object()));
  return b;
}

std::vector<BuyerAgent*> Marketplace::buyers() const {
  std::vector<BuyerAgent*> out;
  for (const auto& [name, b] : buyers_) out.push_back(b.get());
  return out;
}

BuyerAgent& Marketplace::buyer(const std::string& name) {
  auto it = buyers_.find(name);
  if (it == buyers_.end()) throw Error(ErrorCode::kUnknownUser, "no buyer '" + name + "'");
  return *it->second;
}

std::uint64_t Marketplace::send(BuyerAgent& b, MessageKind kind, json payload, const std::string& to) {
  if (b.userId_) payload["userId"] = *b.userId_;
  bus_.post({kind, b.id(), to, 0, std::move(payload)});
  return bus_.transcript().back().seq;
}

json Marketplace::await(BuyerAgent& b, std::uint64_t seq) {
  bus_.run();
  const Message* m = b.response_to(seq);
  if (!m) throw Error(ErrorCode::kSetupError, "request " + std::to_string(seq) + " got no response");
  const auto status = m->payload.value("status", "");
  if (status != "ok") throw Error(parse_error_code(status), m->payload.value("message", status));
  return m->payload;
}

void Marketplace::recharge(BuyerAgent& b, double major) {
  await(b, send(b, MessageKind::kRechargeReq, {{"amount", major}}));
}

EncryptedAmount Marketplace::request_balance(BuyerAgent& b) {
  return cipher_from(await(b, send(b, MessageKind::kBalanceReq, json::object())).at("balanceCipher"));
}

PriceRange Marketplace::request_balance_range(BuyerAgent& b) {
  return range_from(await(b, send(b, MessageKind::kBalanceRangeReq, json::object())).at("balanceRange"));
}

QuoteView Marketplace::request_quote(BuyerAgent& b, const std::string& query, const WeightVector& w) {
  const json p = await(b, send(b, MessageKind::kQueryReq, {{"query", query}, {"weights", w.values()}}));
  QuoteView q;
  q.sessionId = p.at("sessionId").get<std::uint64_t>();
  q.range = range_from(p.at("priceRange"));
  q.priceCipher = cipher_from(p.at("priceCipher"));
  if (p.contains("debugPlainPrice")) q.leakedPrice = p.at("debugPlainPrice").get<double>();
  return q;
}

Purchase Marketplace::agree(BuyerAgent& b, const QuoteView& quote) {
  const json p = await(b, send(b, MessageKind::kAgree, {{"sessionId", quote.sessionId}}));
  Purchase out;
  out.receipt = b.receipts_.back();
  out.columns = p.at("columns").get<std::vector<std::string>>();
  for (const auto& row : p.at("rows")) {
    std::vector<std::optional<std::string>> r;
    for (const auto& c : row) r.push_back(c.is_null() ? std::nullopt : std::optional<std::string>(c.get<std::string>()));
    out.rows.push_back(std::move(r));
  }
  return out;
}

void Marketplace::decline(BuyerAgent& b, const QuoteView& quote) {
  send(b, MessageKind::kDecline, {{"sessionId", quote.sessionId}});
  bus_.run();
}

Verdict Marketplace::check_balance(BuyerAgent& b, const EncryptedAmount& e) {
  const json p = await(b, send(b, MessageKind::kCheckBalanceReq, {{"balanceCipher", e.hex()}}, kTtpId));
  return p.at("verdict").get<std::string>() == "YES" ? Verdict::kYes : Verdict::kNo;
}

RangeVerdict Marketplace::verify_range(BuyerAgent& b, std::uint64_t consumptionId, const PriceRange& range,
                                       const EncryptedAmount& priceCipher) {
  const json p = await(b, send(b, MessageKind::kVerifyRangeReq,
                               {{"consumptionId", consumptionId}, {"priceRange", range_json(range)},
                                {"priceCipher", priceCipher.hex()}},
                               kTtpId));
  const auto v = p.at("verdict").get<std::string>();
  if (v == "YES") return RangeVerdict::kYes;
  if (v == "NO") return RangeVerdict::kNo;
  return RangeVerdict::kRejected;
}

std::vector<LeakFinding> scan_buyer_bound(const std::vector<Message>& transcript) {
  std::vector<LeakFinding> out;
  for (const auto& m : transcript)
    if (is_buyer_party(m.receiver)) scan_keys(m.payload, m, out);
  return out;
}

}  // namespace fairmarket
