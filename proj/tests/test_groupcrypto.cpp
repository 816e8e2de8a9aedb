#include <doctest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "fairmarket/error.hpp"
#include "fairmarket/groupcrypto.hpp"

using namespace fairmarket;

namespace {

using u128 = unsigned __int128;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

u128 to_u128(const BigInt& x) {
  u128 out = 0;
  for (char c : x.get_str(16)) out = out * 16 + static_cast<u128>(c <= '9' ? c - '0' : c - 'a' + 10);
  return out;
}

// Shift-and-add product; n < 2^127 keeps every intermediate in range.
u128 mulmod(u128 a, u128 b, u128 n) {
  u128 r = 0;
  a %= n;
  while (b) {
    if (b & 1) r = (r + a) % n;
    a = (a + a) % n;
    b >>= 1;
  }
  return r;
}

u128 powmod(u128 g, std::uint64_t e, u128 n) {
  u128 r = 1 % n;
  g %= n;
  while (e) {
    if (e & 1) r = mulmod(r, g, n);
    g = mulmod(g, g, n);
    e >>= 1;
  }
  return r;
}

UserCredential toy_cred(int g) {
  UserCredential c;
  c.userId = 1;
  c.generator = g;
  return c;
}

}  // namespace

TEST_CASE("profiles") {
  const auto toy = GroupParams::toy();
  CHECK(toy.modulus == 5);
  CHECK(toy.order == 4);
  CHECK_FALSE(toy.amountCap.has_value());
  for (const char* name : {"s16", "test", "real"}) {
    const auto g = GroupParams::from_profile(name);
    CHECK(mpz_probab_prime_p(g.modulus.get_mpz_t(), 30) > 0);
    CHECK(g.order * 2 + 1 == g.modulus);
    CHECK(mpz_probab_prime_p(g.order.get_mpz_t(), 30) > 0);
    CHECK(g.securityBits == mpz_sizeinbase(g.order.get_mpz_t(), 2));
  }
  CHECK(GroupParams::test().securityBits == 64);
  CHECK(GroupParams::s16().securityBits == 16);
  CHECK(GroupParams::real().securityBits >= 2048);
  CHECK(code_of([] { GroupParams::from_profile("huge"); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("hex round trip") {
  for (const char* h : {"0", "1", "ff", "1234567890abcdef1234567890abcdef"}) CHECK(to_hex(from_hex(h)) == h);
  CHECK(to_hex(BigInt(255)) == "ff");
}

TEST_CASE("registration") {
  SUBCASE("toy generators come from {2,3,4} with sequential ids") {
    std::set<long> seen;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      CredentialIssuer issuer(GroupParams::toy());
      Rng rng(seed);
      const auto a = issuer.reg(rng);
      const auto b = issuer.reg(rng);
      CHECK(a.userId == 1);
      CHECK(b.userId == 2);
      CHECK(a.secretKey != b.secretKey);
      seen.insert(a.generator.get_si());
    }
    CHECK(seen == std::set<long>{2, 3, 4});
  }
  SUBCASE("s16 generators are non-identity subgroup members") {
    const auto g = GroupParams::s16();
    CredentialIssuer issuer(g);
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
      const auto c = issuer.reg(rng);
      CHECK(c.generator >= 2);
      CHECK(c.generator <= g.modulus - 1);
      CHECK(g.contains(c.generator));
      // Membership oracle: x^q == 1 for quadratic residues.
      CHECK(powmod(to_u128(c.generator), g.order.get_ui(), to_u128(g.modulus)) == 1);
    }
  }
}

TEST_CASE("encryption on the toy group") {
  const auto toy = GroupParams::toy();
  const auto c = toy_cred(3);
  CHECK(enc(toy, c, 4).value == 1);
  CHECK(enc(toy, c, 3).value == 2);
  CHECK(enc(toy, c, 1).value == 3);
  CHECK(enc(toy, c, 0).value == 1);
  CHECK(enc(toy, c, 7) == enc(toy, c, 7));
  CHECK(code_of([&] { enc(toy, c, -1); }) == ErrorCode::kNegativeAmount);
  const auto s = GroupParams::s16();
  UserCredential sc;
  sc.generator = 4;
  CHECK_NOTHROW(enc(s, sc, s.order.get_si() - 1));
  CHECK(code_of([&] { enc(s, sc, s.order.get_si()); }) == ErrorCode::kAmountOutOfRange);
}

TEST_CASE("inverse") {
  const auto toy = GroupParams::toy();
  CHECK(inv({2}, toy).value == 3);
  CHECK(inv({3}, toy).value == 2);
  CHECK(inv({1}, toy).value == 1);
  CHECK(inv({4}, toy).value == 4);
  CHECK(code_of([&] { inv({0}, toy); }) == ErrorCode::kNotInvertible);

  SUBCASE("agrees with brute force and mpz_invert") {
    const auto g = GroupParams::s16();
    const long n = g.modulus.get_si();
    for (long x = 1; x < n; x += 97) {
      const auto y = inv({x}, g).value.get_si();
      CHECK((x * y) % n == 1);
      BigInt ref;
      mpz_invert(ref.get_mpz_t(), BigInt(x).get_mpz_t(), g.modulus.get_mpz_t());
      CHECK(ref == y);
    }
    for (long x = 1; x < 200; ++x) {
      long brute = 0;
      for (long y = 1; y < n && !brute; ++y)
        if ((x * y) % n == 1) brute = y;
      CHECK(inv({x}, g).value == brute);
    }
  }
  SUBCASE("involution at 64 bits") {
    const auto g = GroupParams::test();
    Rng rng(8);
    for (int i = 0; i < 2000; ++i) {
      const BigInt x = BigInt(std::to_string(rng.next())) % g.modulus + 1;
      CHECK(inv(inv({x}, g), g).value == x);
      CHECK(x * inv({x}, g).value % g.modulus == 1);
    }
  }
}

TEST_CASE("verify_consumption") {
  const auto toy = GroupParams::toy();
  CHECK(verify_consumption({1}, {2}, {3}, toy) == Verdict::kYes);
  CHECK(verify_consumption({1}, {2}, {4}, toy) == Verdict::kNo);
  for (int x = 1; x < 5; ++x) CHECK(verify_consumption({x}, {1}, {x}, toy) == Verdict::kYes);
}

TEST_CASE("homomorphism") {
  const auto start = std::chrono::steady_clock::now();
  const auto toy = GroupParams::toy();
  std::size_t checked = 0, passed = 0;
  for (int g = 2; g <= 4; ++g) {
    const auto c = toy_cred(g);
    for (int a = 0; a <= 50; ++a)
      for (int b = 0; b <= a; ++b) {
        ++checked;
        const BigInt lhs = enc(toy, c, a).value * inv(enc(toy, c, a - b), toy).value % toy.modulus;
        passed += lhs == enc(toy, c, b).value;
      }
  }
  const auto t = GroupParams::test();
  CredentialIssuer issuer(t);
  Rng rng(64);
  const auto cred = issuer.reg(rng);
  const u128 n = to_u128(t.modulus), gen = to_u128(cred.generator);
  for (int i = 0; i < 10000; ++i) {
    const auto a = static_cast<std::int64_t>(rng.next() >> 2);
    const auto b = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(a) + 1));
    const auto ea = enc(t, cred, a);
    ++checked;
    passed += ea.value * inv(enc(t, cred, a - b), t).value % t.modulus == enc(t, cred, b).value;
    CHECK(to_u128(ea.value) == powmod(gen, static_cast<std::uint64_t>(a), n));
  }
  CHECK(passed == checked);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("make_range") {
  const RangePolicy half;
  Rng rng(1);
  SUBCASE("contains the amount with the policy width") {
    for (std::int64_t p = 0; p < 500; ++p) {
      const auto r = make_range(p, 100, half, rng);
      CHECK(r.contains(static_cast<double>(p) / 100.0));
      CHECK(std::llround(r.width() * 100) == std::max<std::int64_t>(1, std::llround(0.5 * static_cast<double>(p))));
      CHECK(r.lo >= 0.0);
    }
  }
  SUBCASE("a reference fixes the width") {
    const auto r = make_range(7, 1, RangePolicy{1.0, false}, rng, 40);
    CHECK(r.width() == 40.0);
    CHECK(r.contains(7.0));
  }
  SUBCASE("degenerate only when allowed") {
    CHECK(code_of([&] { make_range(3, 1, RangePolicy{0.0, false}, rng); }) == ErrorCode::kInvalidConfig);
    const auto r = make_range(3, 1, RangePolicy{0.0, true}, rng);
    CHECK(r.lo == 3.0);
    CHECK(r.hi == 3.0);
  }
  SUBCASE("offset is uniform (chi-square) and the midpoint often misses") {
    std::array<int, 3> counts{};
    int midpointHits = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      const auto r = make_range(3, 1, half, rng);
      const auto offset = static_cast<int>(3 - r.lo);
      REQUIRE(offset >= 0);
      REQUIRE(offset <= 2);
      ++counts[offset];
      midpointHits += (r.lo + r.hi) / 2.0 == 3.0;
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - draws / 3.0) * (c - draws / 3.0) / (draws / 3.0);
    CHECK(chi2 < 13.82);  // df = 2, alpha = 0.001
    CHECK(draws - midpointHits >= draws / 2);
  }
  SUBCASE("the walkthrough range is reachable") {
    bool seen = false;
    for (int i = 0; i < 200 && !seen; ++i) {
      const auto r = make_range(3, 1, RangePolicy{1.0, false}, rng, 3);
      seen = r.lo == 1.0 && r.hi == 4.0;
    }
    CHECK(seen);
  }
  CHECK(code_of([&] { make_range(-1, 1, half, rng); }) == ErrorCode::kNegativeAmount);
}
