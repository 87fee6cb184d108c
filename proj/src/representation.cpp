#include "ensemhal/representation.hpp"

#include <charconv>

#include "ensemhal/error.hpp"

namespace ensemhal {

std::string_view kind_tag(ReprKind kind) { return kind == ReprKind::AttentionHead ? "ah" : "hs"; }

std::string to_string(const RepresentationId& id) {
  std::string out(kind_tag(id.kind));
  out += "_L" + std::to_string(id.layer);
  if (id.is_attention()) out += "_H" + std::to_string(id.head);
  return out;
}

namespace {

bool take_int(std::string_view& text, int& value) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr == text.data() || value < 0) return false;
  text.remove_prefix(static_cast<std::size_t>(ptr - text.data()));
  return true;
}

}  // namespace

RepresentationId parse_representation(std::string_view text) {
  const std::string original(text);
  auto fail = [&] { return Error(ErrorCode::FormatError, "bad representation name '" + original + "'"); };

  RepresentationId id;
  if (text.starts_with("ah_L")) {
    id.kind = ReprKind::AttentionHead;
  } else if (text.starts_with("hs_L")) {
    id.kind = ReprKind::HiddenState;
  } else {
    throw fail();
  }
  text.remove_prefix(4);
  if (!take_int(text, id.layer)) throw fail();
  if (id.is_attention()) {
    if (!text.starts_with("_H")) throw fail();
    text.remove_prefix(2);
    if (!take_int(text, id.head)) throw fail();
  }
  if (!text.empty()) throw fail();
  return id;
}

}  // namespace ensemhal
