#include "fairmarket/groupcrypto.hpp"

#include <cmath>

#include "fairmarket/error.hpp"

namespace fairmarket {

namespace {

// RFC 7919 ffdhe3072 modulus, a safe prime.
constexpr const char* kFfdhe3072 =
    "ffffffffffffffffadf85458a2bb4a9aafdc5620273d3cf1d8b9c583ce2d3695a9e13641146433fbcc939dce249b3ef97d2fe363630c75"
    "d8f681b202aec4617ad3df1ed5d5fd65612433f51f5f066ed0856365553ded1af3b557135e7f57c935984f0c70e0e68b77e2a689daf3ef"
    "e8721df158a136ade73530acca4f483a797abc0ab182b324fb61d108a94bb2c8e3fbb96adab760d7f4681d4f42a3de394df4ae56ede763"
    "72bb190b07a7c8ee0a6d709e02fce1cdf7e2ecc03404cd28342f619172fe9ce98583ff8e4f1232eef28183c3fe3b1b4c6fad733bb5fcbc"
    "2ec22005c58ef1837d1683b2c6f34a26c1b2effa886b4238611fcfdcde355b3b6519035bbc34f4def99c023861b46fc9d6e6c9077ad91d"
    "2691f7f7ee598cb0fac186d91caefe130985139270b4130c93bc437944f4fd4452e2d74dd364f2e21e71f54bff5cae82ab9c9df69ee86d"
    "2bc522363a0dabc521979b0deada1dbf9a42d5c4484e0abcd06bfa53ddef3c1b20ee3fd59d7c25e41d2b66c62e37ffffffffffffffff";

GroupParams safe_prime_group(std::string profile, const BigInt& modulus) {
  GroupParams g;
  g.profile = std::move(profile);
  g.modulus = modulus;
  g.order = (modulus - 1) / 2;
  g.securityBits = static_cast<unsigned>(mpz_sizeinbase(g.order.get_mpz_t(), 2));
  g.kind = GroupKind::kPrimeOrderSubgroup;
  g.amountCap = g.order;
  return g;
}

/// Uniform integer in [lo, hi].
BigInt uniform_big(Rng& rng, const BigInt& lo, const BigInt& hi) {
  if (hi < lo) throw Error(ErrorCode::kRandomnessFailure, "empty sampling interval");
  const BigInt span = hi - lo + 1;
  const std::size_t bits = mpz_sizeinbase(span.get_mpz_t(), 2);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    BigInt x = 0;
    std::size_t have = 0;
    while (have < bits) {
      x <<= 64;
      x += BigInt(std::to_string(rng.next()));
      have += 64;
    }
    x >>= static_cast<mp_bitcnt_t>(have - bits);
    if (x < span) return lo + x;
  }
  throw Error(ErrorCode::kRandomnessFailure, "rejection sampling did not terminate");
}

std::string random_token(Rng& rng) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (int i = 0; i < 4; ++i) {
    auto w = rng.next();
    for (int j = 0; j < 16; ++j, w >>= 4) out.push_back(kDigits[w & 0xf]);
  }
  return out;
}

}  // namespace

std::string to_hex(const BigInt& x) { return x.get_str(16); }

BigInt from_hex(const std::string& hex) {
  BigInt x;
  if (hex.empty() || x.set_str(hex, 16) != 0 || x < 0)
    throw Error(ErrorCode::kInvalidArgument, "not a hex integer: '" + hex + "'");
  return x;
}

GroupParams GroupParams::toy() {
  GroupParams g;
  g.profile = "toy";
  g.modulus = 5;
  g.order = 4;
  g.securityBits = 3;
  g.kind = GroupKind::kFullGroup;
  return g;
}

GroupParams GroupParams::s16() { return safe_prime_group("s16", BigInt(130787)); }

GroupParams GroupParams::test() { return safe_prime_group("test", BigInt("36893488147419100019")); }

GroupParams GroupParams::real() { return safe_prime_group("real", BigInt(kFfdhe3072, 16)); }

GroupParams GroupParams::from_profile(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "s16") return s16();
  if (name == "test") return test();
  if (name == "real") return real();
  throw Error(ErrorCode::kInvalidConfig, "unknown group profile '" + name + "'");
}

bool GroupParams::contains(const BigInt& x) const {
  if (x < 1 || x >= modulus) return false;
  if (kind == GroupKind::kFullGroup) {
    BigInt g;
    mpz_gcd(g.get_mpz_t(), x.get_mpz_t(), modulus.get_mpz_t());
    return g == 1;
  }
  BigInt r;
  mpz_powm(r.get_mpz_t(), x.get_mpz_t(), order.get_mpz_t(), modulus.get_mpz_t());
  return r == 1;
}

const char* to_string(Verdict v) noexcept { return v == Verdict::kYes ? "YES" : "NO"; }

UserCredential CredentialIssuer::reg(Rng& rng) {
  UserCredential cred;
  cred.userId = nextId_++;
  if (params_.kind == GroupKind::kFullGroup) {
    cred.generator = uniform_big(rng, 2, params_.modulus - 1);
  } else {
    // Squaring maps Z_n^* two-to-one onto the residues; excluding +-1 from
    // the preimage excludes the identity from the image.
    const BigInt h = uniform_big(rng, 2, params_.modulus - 2);
    cred.generator = h * h % params_.modulus;
  }
  cred.secretKey = random_token(rng);
  cred.publicKey = random_token(rng);
  return cred;
}

EncryptedAmount enc(const GroupParams& params, const UserCredential& cred, std::int64_t amount) {
  if (amount < 0) throw Error(ErrorCode::kNegativeAmount, "cannot encrypt " + std::to_string(amount));
  const BigInt exponent(std::to_string(amount));
  if (params.amountCap && exponent >= *params.amountCap)
    throw Error(ErrorCode::kAmountOutOfRange, "amount " + std::to_string(amount) + " exceeds the group capacity");
  EncryptedAmount out;
  mpz_powm(out.value.get_mpz_t(), cred.generator.get_mpz_t(), exponent.get_mpz_t(), params.modulus.get_mpz_t());
  return out;
}

EncryptedAmount inv(const EncryptedAmount& e, const GroupParams& params) {
  const BigInt& n = params.modulus;
  BigInt a = e.value % n;
  if (a < 0) a += n;
  // Invariant: old_r = old_s * a (mod n), r = s * a (mod n).
  BigInt old_r = a, r = n;
  BigInt old_s = 1, s = 0;
  while (r != 0) {
    const BigInt q = old_r / r;
    BigInt t = old_r - q * r;
    old_r = r;
    r = t;
    t = old_s - q * s;
    old_s = s;
    s = t;
  }
  if (old_r != 1) throw Error(ErrorCode::kNotInvertible, to_hex(e.value) + " has no inverse modulo " + to_hex(n));
  BigInt x = old_s % n;
  if (x < 0) x += n;
  return {x};
}

Verdict verify_consumption(const EncryptedAmount& before, const EncryptedAmount& price,
                           const EncryptedAmount& after, const GroupParams& params) {
  const BigInt lhs = before.value * inv(after, params).value % params.modulus;
  return lhs == price.value % params.modulus ? Verdict::kYes : Verdict::kNo;
}

void RangePolicy::validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw Error(ErrorCode::kInvalidConfig, "range rho must be non-negative");
  if (rho == 0.0 && !allowDegenerate)
    throw Error(ErrorCode::kInvalidConfig, "degenerate price ranges reveal the price; set allowDegenerate to use them");
}

PriceRange make_range(std::int64_t amount, std::int64_t scale, const RangePolicy& policy, Rng& rng,
                      std::optional<std::int64_t> reference) {
  if (amount < 0) throw Error(ErrorCode::kNegativeAmount, "cannot quote a negative amount");
  policy.validate();
  std::int64_t width = 0;
  if (policy.rho > 0.0) {
    const auto ref = static_cast<double>(reference.value_or(amount));
    width = std::max<std::int64_t>(1, std::llround(policy.rho * ref));
  }
  // Offset of the amount above the lower end; ranges never dip below zero.
  const std::int64_t offset = rng.between(0, std::min(width, amount));
  const std::int64_t lo = amount - offset;
  const auto s = static_cast<double>(scale);
  return {static_cast<double>(lo) / s, static_cast<double>(lo + width) / s};
}

}  // namespace fairmarket
