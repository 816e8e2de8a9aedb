#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <gmpxx.h>

#include "fairmarket/rng.hpp"

namespace fairmarket {

using BigInt = mpz_class;

std::string to_hex(const BigInt& x);
BigInt from_hex(const std::string& hex);

enum class GroupKind {
  kFullGroup,            // all of Z_n^*, order n - 1
  kPrimeOrderSubgroup,   // quadratic residues of a safe prime n = 2q + 1, order q
};

/// Multiplicative group G_n backing price hiding.
struct GroupParams {
  std::string profile;
  BigInt modulus;           // n, prime
  BigInt order;             // |G|
  unsigned securityBits = 0;  // bit length of |G|
  GroupKind kind = GroupKind::kPrimeOrderSubgroup;
  /// Exclusive upper bound on encrypted amounts. Amounts at or above the
  /// group order would alias smaller ones and make Verify ambiguous. The toy
  /// profile leaves it unset so the worked n = 5 trace (balance 4 = |G|)
  /// replays exactly.
  std::optional<BigInt> amountCap;

  /// n = 5, G = Z_5^*.
  static GroupParams toy();
  /// Safe prime with a 16-bit subgroup order.
  static GroupParams s16();
  /// Safe prime with a 64-bit subgroup order.
  static GroupParams test();
  /// RFC 7919 ffdhe3072 (subgroup order of 3071 bits).
  static GroupParams real();
  static GroupParams from_profile(const std::string& name);

  bool contains(const BigInt& x) const;
};

struct UserCredential {
  std::uint64_t userId = 0;
  BigInt generator;  // g_i
  std::string secretKey;
  std::string publicKey;
};

struct EncryptedAmount {
  BigInt value;

  std::string hex() const { return to_hex(value); }
  friend bool operator==(const EncryptedAmount& a, const EncryptedAmount& b) { return a.value == b.value; }
};

/// Closed interval of major currency units disclosed instead of a price.
struct PriceRange {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return lo <= v && v <= hi; }
  double width() const { return hi - lo; }
  /// Bit-exact endpoint comparison.
  friend bool operator==(const PriceRange&, const PriceRange&) = default;
};

enum class Verdict { kYes, kNo };
const char* to_string(Verdict v) noexcept;

/// Issues credentials with fresh sequential user ids.
class CredentialIssuer {
 public:
  explicit CredentialIssuer(GroupParams params) : params_(std::move(params)) {}

  /// Samples g_i uniformly from G \ {1}.
  UserCredential reg(Rng& rng);

  const GroupParams& params() const noexcept { return params_; }

 private:
  GroupParams params_;
  std::uint64_t nextId_ = 1;
};

/// g_i^amount mod n. Throws kNegativeAmount, kAmountOutOfRange.
EncryptedAmount enc(const GroupParams& params, const UserCredential& cred, std::int64_t amount);

/// Multiplicative inverse via the extended Euclidean algorithm. Throws
/// kNotInvertible when gcd(e, n) != 1.
EncryptedAmount inv(const EncryptedAmount& e, const GroupParams& params);

/// YES iff E_B1 * E_B2^-1 == E_p (mod n).
Verdict verify_consumption(const EncryptedAmount& before, const EncryptedAmount& price,
                           const EncryptedAmount& after, const GroupParams& params);

/// width = max(1, round(rho * reference)) minor units; reference defaults to
/// the amount itself. The amount sits at a uniformly random offset inside.
struct RangePolicy {
  double rho = 0.5;
  /// Permit rho == 0 (a degenerate range that reveals the amount).
  bool allowDegenerate = false;

  void validate() const;
};

/// Range over integer minor units, returned in major units (minor / scale).
PriceRange make_range(std::int64_t amount, std::int64_t scale, const RangePolicy& policy, Rng& rng,
                      std::optional<std::int64_t> reference = std::nullopt);

}  // namespace fairmarket
