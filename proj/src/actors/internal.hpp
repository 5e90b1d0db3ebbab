#pragma once

#include <string>
#include <string_view>

#include "fedid/actors.hpp"

namespace fedid::actors::detail {

inline Bytes key_bytes(const hd::ExtendedPublicKey& key) {
  const auto s = key.serialize();
  return {s.begin(), s.end()};
}

/// Part of a bus address after the role prefix: "owner/dmv" -> "dmv".
inline std::string address_suffix(std::string_view address) {
  const auto slash = address.find('/');
  return std::string(slash == std::string_view::npos ? address : address.substr(slash + 1));
}

inline bool has_prefix(std::string_view s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

/// What a user signs to prove possession of login key `index`.
inline Bytes login_challenge_message(std::string_view idp, std::string_view username, std::uint32_t index,
                                     ByteView nonce) {
  Writer w;
  w.str16("fedid/login").str16(idp).str16(username).u32(index).bytes16(nonce);
  return std::move(w).take();
}

inline void send(net::Bus& bus, const std::string& from, const std::string& to, const std::string& kind,
                 const std::string& phase, const Message& msg) {
  bus.send(from, to, kind, phase, msg.serialize());
}

}  // namespace fedid::actors::detail
