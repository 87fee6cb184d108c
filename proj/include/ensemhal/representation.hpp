#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace ensemhal {

enum class ReprKind : std::uint8_t { AttentionHead, HiddenState };

/// Names one feature source inside the model: an attention head (layer, head)
/// or the hidden state of a layer. Hidden-state ids always carry head 0.
struct RepresentationId {
  ReprKind kind = ReprKind::AttentionHead;
  int layer = 0;
  int head = 0;

  static RepresentationId attention(int layer, int head) { return {ReprKind::AttentionHead, layer, head}; }
  static RepresentationId hidden(int layer) { return {ReprKind::HiddenState, layer, 0}; }

  bool is_attention() const { return kind == ReprKind::AttentionHead; }

  // Attention heads sort before hidden states, then by (layer, head).
  auto operator<=>(const RepresentationId&) const = default;
};

/// "ah_L3_H2" / "hs_L5". This is also the feature file stem.
std::string to_string(const RepresentationId& id);

/// Inverse of to_string; throws Error(FormatError) on malformed input.
RepresentationId parse_representation(std::string_view text);

std::string_view kind_tag(ReprKind kind);

}  // namespace ensemhal
