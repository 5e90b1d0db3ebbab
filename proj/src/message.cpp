#include "fedid/message.hpp"

#include <algorithm>
#include <bit>
#include <set>

namespace fedid::actors {

Message& Message::put(std::string name, Bytes value) {
  if (has(name)) throw MessageError("duplicate field: " + name);
  fields_.emplace_back(std::move(name), std::move(value));
  return *this;
}

Message& Message::put_u64(std::string name, std::uint64_t value) {
  Writer w;
  w.u64(value);
  return put(std::move(name), std::move(w).take());
}

Message& Message::put_f64(std::string name, double value) {
  return put_u64(std::move(name), std::bit_cast<std::uint64_t>(value));
}

bool Message::has(std::string_view name) const {
  return std::any_of(fields_.begin(), fields_.end(), [&](const auto& f) { return f.first == name; });
}

const Bytes& Message::get(std::string_view name) const {
  for (const auto& [k, v] : fields_) {
    if (k == name) return v;
  }
  throw MessageError("missing field: " + std::string(name));
}

std::uint64_t Message::u64(std::string_view name) const {
  const auto& v = get(name);
  if (v.size() != 8) throw MessageError("field is not a u64: " + std::string(name));
  Reader r(v);
  return r.u64();
}

double Message::f64(std::string_view name) const { return std::bit_cast<double>(u64(name)); }

Bytes Message::serialize() const {
  Writer w;
  w.u16(static_cast<std::uint16_t>(fields_.size()));
  for (const auto& [k, v] : fields_) w.str16(k).bytes32(v);
  return std::move(w).take();
}

Message Message::parse(ByteView bytes) {
  Reader r(bytes);
  Message m;
  const auto n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) {
    auto name = r.str16();
    auto value = r.bytes32();
    m.put(std::move(name), Bytes(value.begin(), value.end()));
  }
  r.expect_done();
  return m;
}

Bytes encode_strings(const std::vector<std::string>& items) {
  Writer w;
  w.u16(static_cast<std::uint16_t>(items.size()));
  for (const auto& s : items) w.str16(s);
  return std::move(w).take();
}

std::vector<std::string> decode_strings(ByteView bytes) {
  Reader r(bytes);
  std::vector<std::string> out(r.u16());
  for (auto& s : out) s = r.str16();
  r.expect_done();
  return out;
}

Bytes encode_blobs(const std::vector<Bytes>& items) {
  Writer w;
  w.u16(static_cast<std::uint16_t>(items.size()));
  for (const auto& b : items) w.bytes32(b);
  return std::move(w).take();
}

std::vector<Bytes> decode_blobs(ByteView bytes) {
  Reader r(bytes);
  std::vector<Bytes> out(r.u16());
  for (auto& b : out) {
    auto v = r.bytes32();
    b.assign(v.begin(), v.end());
  }
  r.expect_done();
  return out;
}

Bytes encode_string_map(const std::map<std::string, std::string>& items) {
  Writer w;
  w.u16(static_cast<std::uint16_t>(items.size()));
  for (const auto& [k, v] : items) w.str16(k).str16(v);
  return std::move(w).take();
}

std::map<std::string, std::string> decode_string_map(ByteView bytes) {
  Reader r(bytes);
  std::map<std::string, std::string> out;
  const auto n = r.u16();
  for (std::uint16_t i = 0; i < n; ++i) {
    auto k = r.str16();
    if (!out.empty() && !(out.rbegin()->first < k)) throw DecodeError("map keys not strictly ascending");
    out.emplace(std::move(k), r.str16());
  }
  r.expect_done();
  return out;
}

}  // namespace fedid::actors
