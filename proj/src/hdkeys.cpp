#include "fedid/hdkeys.hpp"

#include <charconv>

#include "fedid/crypto.hpp"

namespace fedid::hd {

namespace {

// Standard BIP-32 mainnet versions for additive trees; a private pair for
// multiplicative trees so the two can never be confused on import.
constexpr std::uint32_t kAdditivePrivate = 0x0488ADE4;
constexpr std::uint32_t kAdditivePublic = 0x0488B21E;
constexpr std::uint32_t kMultiplicativePrivate = 0x0488ADE5;
constexpr std::uint32_t kMultiplicativePublic = 0x0488B21F;

std::uint32_t version_for(Mode mode, bool is_private) {
  if (mode == Mode::additive) return is_private ? kAdditivePrivate : kAdditivePublic;
  return is_private ? kMultiplicativePrivate : kMultiplicativePublic;
}

Fingerprint fingerprint_of(const ec::Point& point) {
  auto h = hash160(point.compressed());
  return {h[0], h[1], h[2], h[3]};
}

struct Hmac {
  std::array<std::uint8_t, 32> left;
  ChainCode right;
};

Hmac split(const std::array<std::uint8_t, 64>& i) {
  Hmac out{};
  std::copy_n(i.begin(), 32, out.left.begin());
  std::copy_n(i.begin() + 32, 32, out.right.begin());
  return out;
}

Hmac child_hmac(const ChainCode& chain, ByteView key_material, std::uint32_t raw_index) {
  Writer w;
  w.raw(key_material).u32(raw_index);
  return split(hmac_sha512(chain, w.data()));
}

Hmac public_child_hmac(const ExtendedPublicKey& parent, std::uint32_t raw_index) {
  return child_hmac(parent.chain_code(), parent.point().compressed(), raw_index);
}

Serialized serialize_common(std::uint32_t version, std::uint8_t depth, const Fingerprint& fp,
                            std::uint32_t index, const ChainCode& chain, ByteView key33) {
  Writer w;
  w.u32(version).u8(depth).raw(fp).u32(index).raw(chain).raw(key33);
  return to_array<78>(w.data());
}

struct Parsed {
  std::uint32_t version;
  std::uint8_t depth;
  Fingerprint fp;
  std::uint32_t index;
  ChainCode chain;
  std::array<std::uint8_t, 33> key;
};

Parsed parse_common(ByteView bytes78) {
  if (bytes78.size() != 78) throw HdError(HdError::Code::bad_encoding, "extended key must be 78 bytes");
  Reader r(bytes78);
  Parsed p{};
  p.version = r.u32();
  p.depth = r.u8();
  p.fp = r.fixed<4>();
  p.index = r.u32();
  p.chain = r.fixed<32>();
  p.key = r.fixed<33>();
  if (p.depth == 0 && (p.index != 0 || p.fp != Fingerprint{})) {
    throw HdError(HdError::Code::bad_encoding, "master key with non-zero parent metadata");
  }
  return p;
}

void require_depth(std::uint8_t depth) {
  if (depth == 255) throw HdError(HdError::Code::depth_overflow, "key tree depth limit reached");
}

}  // namespace

std::string_view to_string(Mode mode) {
  return mode == Mode::additive ? "additive" : "multiplicative";
}

Mode mode_from_string(std::string_view text) {
  if (text == "additive") return Mode::additive;
  if (text == "multiplicative") return Mode::multiplicative;
  throw std::invalid_argument("unknown derivation mode: " + std::string(text));
}

ExtendedPrivateKey::ExtendedPrivateKey(const ec::Scalar& scalar, const ChainCode& chain_code,
                                       std::uint8_t depth, std::uint32_t child_index,
                                       const Fingerprint& parent_fp, Mode mode)
    : scalar_(scalar),
      point_(ec::Point::base_mul(scalar)),
      chain_code_(chain_code),
      depth_(depth),
      child_index_(child_index),
      parent_fingerprint_(parent_fp),
      mode_(mode) {}

Fingerprint ExtendedPrivateKey::fingerprint() const { return fingerprint_of(point_); }

Serialized ExtendedPrivateKey::serialize() const {
  Writer key;
  key.u8(0).raw(scalar_.bytes());
  return serialize_common(version_for(mode_, true), depth_, parent_fingerprint_, child_index_,
                          chain_code_, key.data());
}

std::string ExtendedPrivateKey::to_base58() const { return base58check_encode(serialize()); }

ExtendedPrivateKey ExtendedPrivateKey::deserialize(ByteView bytes78) {
  auto p = parse_common(bytes78);
  Mode mode;
  if (p.version == kAdditivePrivate) {
    mode = Mode::additive;
  } else if (p.version == kMultiplicativePrivate) {
    mode = Mode::multiplicative;
  } else {
    throw HdError(HdError::Code::bad_encoding, "not an extended private key version");
  }
  if (p.key[0] != 0) throw HdError(HdError::Code::bad_encoding, "private key must be 0x00-prefixed");
  auto scalar = ec::Scalar::from_bytes(ByteView(p.key).subspan(1));
  if (!scalar) throw HdError(HdError::Code::bad_encoding, "private scalar out of range");
  return {*scalar, p.chain, p.depth, p.index, p.fp, mode};
}

ExtendedPrivateKey ExtendedPrivateKey::from_base58(std::string_view text) {
  try {
    return deserialize(base58check_decode(text));
  } catch (const DecodeError& e) {
    throw HdError(HdError::Code::bad_encoding, e.what());
  }
}

ExtendedPublicKey::ExtendedPublicKey(const ec::Point& point, const ChainCode& chain_code,
                                     std::uint8_t depth, std::uint32_t child_index,
                                     const Fingerprint& parent_fp, Mode mode)
    : point_(point),
      chain_code_(chain_code),
      depth_(depth),
      child_index_(child_index),
      parent_fingerprint_(parent_fp),
      mode_(mode) {}

Fingerprint ExtendedPublicKey::fingerprint() const { return fingerprint_of(point_); }

Serialized ExtendedPublicKey::serialize() const {
  return serialize_common(version_for(mode_, false), depth_, parent_fingerprint_, child_index_,
                          chain_code_, point_.compressed());
}

std::string ExtendedPublicKey::to_base58() const { return base58check_encode(serialize()); }

ExtendedPublicKey ExtendedPublicKey::deserialize(ByteView bytes78) {
  auto p = parse_common(bytes78);
  Mode mode;
  if (p.version == kAdditivePublic) {
    mode = Mode::additive;
  } else if (p.version == kMultiplicativePublic) {
    mode = Mode::multiplicative;
  } else {
    throw HdError(HdError::Code::bad_encoding, "not an extended public key version");
  }
  auto point = ec::Point::parse(p.key);
  if (!point || point->compressed() != p.key) {
    throw HdError(HdError::Code::bad_encoding, "invalid public point");
  }
  return {*point, p.chain, p.depth, p.index, p.fp, mode};
}

ExtendedPublicKey ExtendedPublicKey::from_base58(std::string_view text) {
  try {
    return deserialize(base58check_decode(text));
  } catch (const DecodeError& e) {
    throw HdError(HdError::Code::bad_encoding, e.what());
  }
}

ExtendedPrivateKey master_from_seed(ByteView seed, Mode mode) {
  if (seed.size() < 16 || seed.size() > 64) {
    throw HdError(HdError::Code::seed_length, "seed must be 16..64 bytes");
  }
  static constexpr std::string_view kKey = "Bitcoin seed";
  Bytes data(seed.begin(), seed.end());
  for (std::uint32_t counter = 0;; ++counter) {
    // Counter 0 is plain BIP-32; later attempts append a big-endian counter.
    if (counter > 0) {
      data.assign(seed.begin(), seed.end());
      Writer w;
      w.u32(counter);
      data.insert(data.end(), w.data().begin(), w.data().end());
    }
    auto i = split(hmac_sha512(as_bytes(kKey), data));
    if (auto scalar = ec::Scalar::from_bytes(i.left)) {
      return {*scalar, i.right, 0, 0, Fingerprint{}, mode};
    }
  }
}

std::optional<ec::Scalar> child_tweak(const ExtendedPublicKey& parent, std::uint32_t raw_index) {
  if (raw_index & kHardenedBit) return std::nullopt;
  return ec::Scalar::from_bytes(public_child_hmac(parent, raw_index).left);
}

ExtendedPrivateKey ckd_priv(const ExtendedPrivateKey& parent, std::uint32_t index, bool hardened) {
  require_depth(parent.depth());
  if (index & kHardenedBit) throw HdError(HdError::Code::index_out_of_range, "index must be below 2^31");

  const auto fp = parent.fingerprint();
  for (std::uint32_t i = index; i < kHardenedBit; ++i) {
    const std::uint32_t raw = hardened ? (i | kHardenedBit) : i;
    Hmac h;
    if (hardened) {
      Writer key;
      key.u8(0).raw(parent.scalar().bytes());
      h = child_hmac(parent.chain_code(), key.data(), raw);
    } else {
      h = child_hmac(parent.chain_code(), parent.point().compressed(), raw);
    }
    auto tweak = ec::Scalar::from_bytes(h.left);
    if (!tweak) continue;
    std::optional<ec::Scalar> child;
    if (parent.mode() == Mode::additive) {
      child = parent.scalar().add(*tweak);
    } else {
      child = parent.scalar().mul(*tweak);
    }
    if (!child) continue;
    return {*child, h.right, static_cast<std::uint8_t>(parent.depth() + 1), raw, fp, parent.mode()};
  }
  throw HdError(HdError::Code::index_exhausted, "no valid child index at or above requested index");
}

ExtendedPublicKey ckd_pub(const ExtendedPublicKey& parent, std::uint32_t index) {
  if (index & kHardenedBit) {
    throw HdError(HdError::Code::hardened_from_public, "hardened child requires the private key");
  }
  require_depth(parent.depth());

  const auto fp = parent.fingerprint();
  for (std::uint32_t i = index; i < kHardenedBit; ++i) {
    auto h = public_child_hmac(parent, i);
    auto tweak = ec::Scalar::from_bytes(h.left);
    if (!tweak) continue;
    std::optional<ec::Point> child;
    if (parent.mode() == Mode::additive) {
      child = parent.point().add_base_mul(*tweak);
    } else {
      child = parent.point().mul(*tweak);
    }
    if (!child) continue;
    return {*child, h.right, static_cast<std::uint8_t>(parent.depth() + 1), i, fp, parent.mode()};
  }
  throw HdError(HdError::Code::index_exhausted, "no valid child index at or above requested index");
}

ExtendedPublicKey neuter(const ExtendedPrivateKey& key) {
  return {key.point(), key.chain_code(), key.depth(), key.child_index(), key.parent_fingerprint(),
          key.mode()};
}

DerivationPath::DerivationPath(std::vector<PathStep> steps) : steps_(std::move(steps)) {
  for (const auto& s : steps_) {
    if (s.index & kHardenedBit) throw HdError(HdError::Code::bad_path, "path index must be below 2^31");
  }
}

DerivationPath DerivationPath::parse(std::string_view text) {
  if (text.empty() || text[0] != 'm') throw HdError(HdError::Code::bad_path, "path must start with m");
  std::vector<PathStep> steps;
  std::size_t pos = 1;
  while (pos < text.size()) {
    if (text[pos] != '/') throw HdError(HdError::Code::bad_path, "expected '/' in path");
    ++pos;
    auto end = text.find('/', pos);
    auto token = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (token.empty()) throw HdError(HdError::Code::bad_path, "empty path component");
    PathStep step;
    char last = token.back();
    if (last == '\'' || last == 'h' || last == 'H') {
      step.hardened = true;
      token.remove_suffix(1);
    }
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), step.index);
    if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) {
      throw HdError(HdError::Code::bad_path, "invalid path component");
    }
    if (step.index & kHardenedBit) throw HdError(HdError::Code::bad_path, "path index must be below 2^31");
    steps.push_back(step);
    pos = end == std::string_view::npos ? text.size() : end;
  }
  return DerivationPath(std::move(steps));
}

std::string DerivationPath::to_string() const {
  std::string out = "m";
  for (const auto& s : steps_) {
    out += '/';
    out += std::to_string(s.index);
    if (s.hardened) out += '\'';
  }
  return out;
}

bool DerivationPath::all_public() const {
  return std::none_of(steps_.begin(), steps_.end(), [](const PathStep& s) { return s.hardened; });
}

DerivationPath DerivationPath::child(std::uint32_t index, bool hardened) const {
  auto steps = steps_;
  steps.push_back({index, hardened});
  return DerivationPath(std::move(steps));
}

ExtendedPrivateKey derive_path(const ExtendedPrivateKey& root, const DerivationPath& path) {
  if (path.size() > 255u - root.depth()) throw HdError(HdError::Code::depth_overflow, "path too deep");
  auto key = root;
  for (const auto& s : path.steps()) key = ckd_priv(key, s.index, s.hardened);
  return key;
}

ExtendedPublicKey derive_path(const ExtendedPublicKey& root, const DerivationPath& path) {
  if (path.size() > 255u - root.depth()) throw HdError(HdError::Code::depth_overflow, "path too deep");
  if (!path.all_public()) {
    throw HdError(HdError::Code::hardened_from_public, "hardened step on a public root");
  }
  auto key = root;
  for (const auto& s : path.steps()) key = ckd_pub(key, s.index);
  return key;
}

Signature sign(const ExtendedPrivateKey& key, ByteView message) {
  return ec::ecdsa_sign(key.scalar(), sha256(message));
}

bool verify(const ExtendedPublicKey& key, ByteView message, const Signature& sig) {
  return ec::ecdsa_verify(key.point(), sha256(message), sig);
}

namespace layout {

RootKeys RootKeys::from_seed(ByteView seed, Mode mode) {
  // Two roots from one wallet seed, separated by label.
  auto a = hmac_sha512(as_bytes("fedid data access"), seed);
  auto b = hmac_sha512(as_bytes("fedid data authorization"), seed);
  return {master_from_seed(a, mode), master_from_seed(b, mode)};
}

}  // namespace layout

}  // namespace fedid::hd
