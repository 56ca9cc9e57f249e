#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rws/tensor.hpp"

namespace rws {

/*
 * Ordered named-tensor container with layer-group metadata.
 *
 * On-disk layout:
 *   [u64 LE header length H][H bytes UTF-8 JSON header][payload]
 * The header maps each tensor name to {"dtype","shape","data_offsets"} in
 * tensor order, plus "__metadata__" holding string values only. The layer
 * order is stored there as a comma-separated "layer_order" entry. Payloads
 * are little-endian row-major and packed in header order.
 *
 * A tensor belongs to group G when its name starts with "G.".
 */
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  // Does not contain "layer_order"; that lives in the field below.
  std::map<std::string, std::string> metadata;
  std::vector<std::string> layer_order;

  const Tensor* find(const std::string& name) const;
  Tensor* find(const std::string& name);
  const Tensor& at(const std::string& name) const;

  // The unique group owning `tensor_name`; throws if none or several match.
  const std::string& group_of(const std::string& tensor_name) const;
  std::vector<const NamedTensor*> group_tensors(const std::string& group) const;
  bool has_group(const std::string& group) const;

  std::string meta(const std::string& key) const;
  std::string meta_or(const std::string& key, const std::string& fallback) const;

  // Throws ValidationError on any structural invariant violation.
  void validate() const;

  // Bitwise equality of tensors, metadata and order.
  bool identical(const Checkpoint& other) const;
};

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Payload bytes only; header excluded.
std::uint64_t storage_bytes(const Checkpoint& ckpt);

// Digest over tensor names, shapes and layer_order.
std::string arch_fingerprint(const Checkpoint& ckpt);
// Digest over the canonical serialization.
std::string content_fingerprint(const Checkpoint& ckpt);

// Empty when shape-compatible; otherwise a description of the first difference.
std::optional<std::string> first_incompatibility(const Checkpoint& a, const Checkpoint& b);
inline bool shape_compatible(const Checkpoint& a, const Checkpoint& b) { return !first_incompatibility(a, b); }

std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::string join_list(const std::vector<std::string>& items, char sep = ',');

}  // namespace rws
