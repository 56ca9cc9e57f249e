#include "rws/checkpoint.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"
#include "rws/digest.hpp"
#include "rws/errors.hpp"

namespace rws {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kMetadataKey = "__metadata__";
constexpr const char* kLayerOrderKey = "layer_order";

bool has_prefix(const std::string& name, const std::string& group) {
  return name.size() > group.size() + 1 && name.compare(0, group.size(), group) == 0 && name[group.size()] == '.';
}

std::optional<DType> parse_dtype(const std::string& s) {
  if (s == "F32") return DType::F32;
  if (s == "F16") return DType::F16;
  if (s == "I8") return DType::I8;
  if (s == "I16") return DType::I16;
  return std::nullopt;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_payload(std::vector<std::uint8_t>& out, const Tensor& t) {
  const std::size_t n = t.numel();
  switch (t.dtype()) {
    case DType::F32:
      for (float f : t.floats()) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      }
      break;
    case DType::F16:
      for (float f : t.floats()) {
        const auto bits = Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(f));
        out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
        out.push_back(static_cast<std::uint8_t>(bits >> 8));
      }
      break;
    case DType::I8:
      for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(t.ints()[i])));
      break;
    case DType::I16:
      for (std::size_t i = 0; i < n; ++i) {
        const auto bits = static_cast<std::uint16_t>(static_cast<std::int16_t>(t.ints()[i]));
        out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
        out.push_back(static_cast<std::uint8_t>(bits >> 8));
      }
      break;
  }
}

Tensor decode_payload(DType dtype, const Shape& shape, const std::uint8_t* p) {
  const std::size_t n = shape_numel(shape);
  if (is_integer(dtype)) {
    std::vector<std::int32_t> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (dtype == DType::I8) {
        v[i] = static_cast<std::int8_t>(p[i]);
      } else {
        v[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8)));
      }
    }
    return Tensor::from_ints(dtype, shape, std::move(v));
  }
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == DType::F32) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[4 * i + b];
      v[i] = std::bit_cast<float>(bits);
    } else {
      const auto bits = static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
      v[i] = static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
    }
  }
  return Tensor::from_floats(shape, std::move(v), dtype);
}

[[noreturn]] void fail(ParseError kind, const std::string& what) { throw FormatError(kind, what); }

}  // namespace

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(sep);
    out += items[i];
  }
  return out;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

Tensor* Checkpoint::find(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

const Tensor& Checkpoint::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw ValidationError("no tensor named '" + name + "'");
  return *t;
}

const std::string& Checkpoint::group_of(const std::string& tensor_name) const {
  const std::string* match = nullptr;
  for (const auto& g : layer_order) {
    if (has_prefix(tensor_name, g)) {
      if (match) throw ValidationError("tensor '" + tensor_name + "' matches several layer groups");
      match = &g;
    }
  }
  if (!match) throw ValidationError("orphan tensor '" + tensor_name + "'");
  return *match;
}

std::vector<const NamedTensor*> Checkpoint::group_tensors(const std::string& group) const {
  std::vector<const NamedTensor*> out;
  for (const auto& t : tensors) {
    if (has_prefix(t.name, group) && group_of(t.name) == group) out.push_back(&t);
  }
  return out;
}

bool Checkpoint::has_group(const std::string& group) const {
  return std::find(layer_order.begin(), layer_order.end(), group) != layer_order.end();
}

std::string Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw ValidationError("missing metadata key '" + key + "'");
  return it->second;
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? fallback : it->second;
}

void Checkpoint::validate() const {
  if (layer_order.empty()) throw ValidationError("layer_order is empty");
  std::set<std::string> groups;
  for (const auto& g : layer_order) {
    if (g.empty() || g.find(',') != std::string::npos) throw ValidationError("invalid layer group name '" + g + "'");
    if (!groups.insert(g).second) throw ValidationError("duplicate layer group '" + g + "'");
  }
  if (metadata.count(kLayerOrderKey)) throw ValidationError("metadata must not carry layer_order directly");
  std::set<std::string> names;
  for (const auto& t : tensors) {
    if (t.name == kMetadataKey) throw ValidationError("reserved tensor name");
    if (!names.insert(t.name).second) throw ValidationError("duplicate tensor '" + t.name + "'");
    if (t.tensor.shape().empty()) throw ValidationError("tensor '" + t.name + "' has no shape");
    group_of(t.name);
  }
}

bool Checkpoint::identical(const Checkpoint& other) const {
  if (metadata != other.metadata || layer_order != other.layer_order || tensors.size() != other.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != other.tensors[i].name || !tensors[i].tensor.identical(other.tensors[i].tensor)) return false;
  }
  return true;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.validate();
  ordered_json header = ordered_json::object();
  ordered_json meta = ordered_json::object();
  std::map<std::string, std::string> sorted = ckpt.metadata;
  sorted[kLayerOrderKey] = join_list(ckpt.layer_order);
  for (const auto& [k, v] : sorted) meta[k] = v;
  header[kMetadataKey] = std::move(meta);
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    ordered_json entry = ordered_json::object();
    entry["dtype"] = std::string(dtype_name(t.tensor.dtype()));
    entry["shape"] = t.tensor.shape();
    const std::uint64_t end = offset + t.tensor.byte_size();
    entry["data_offsets"] = {offset, end};
    header[t.name] = std::move(entry);
    offset = end;
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.tensors) put_payload(out, t.tensor);
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) fail(ParseError::TruncatedFile, "truncated file: missing header length");
  const std::uint64_t header_len = get_u64(bytes.data());
  if (header_len > bytes.size() - 8) fail(ParseError::HeaderOverrunsFile, "header overruns file");
  const auto* payload = bytes.data() + 8 + header_len;
  const std::uint64_t payload_len = bytes.size() - 8 - header_len;

  ordered_json header;
  try {
    header = ordered_json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ParseError::BadHeader, std::string("malformed header JSON: ") + e.what());
  }
  if (!header.is_object()) fail(ParseError::BadHeader, "header is not a JSON object");

  Checkpoint ckpt;
  bool have_order = false;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (const auto& [key, value] : header.items()) {
    if (key == kMetadataKey) {
      if (!value.is_object()) fail(ParseError::BadMetadata, "__metadata__ is not an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) fail(ParseError::BadMetadata, "metadata value for '" + mk + "' is not a string");
        if (mk == kLayerOrderKey) {
          ckpt.layer_order = split_list(mv.get<std::string>());
          have_order = true;
        } else {
          ckpt.metadata[mk] = mv.get<std::string>();
        }
      }
      continue;
    }
    if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") || !value.contains("data_offsets")) {
      fail(ParseError::BadHeader, "tensor '" + key + "' entry lacks dtype/shape/data_offsets");
    }
    const auto& dt = value["dtype"];
    if (!dt.is_string()) fail(ParseError::UnknownDtype, "unknown dtype for tensor '" + key + "'");
    const auto dtype = parse_dtype(dt.get<std::string>());
    if (!dtype) fail(ParseError::UnknownDtype, "unknown dtype '" + dt.get<std::string>() + "' for tensor '" + key + "'");

    const auto& sh = value["shape"];
    if (!sh.is_array() || sh.empty()) fail(ParseError::BadShape, "bad shape for tensor '" + key + "'");
    Shape shape;
    for (const auto& d : sh) {
      if (!d.is_number_integer() || d.get<std::int64_t>() <= 0) fail(ParseError::BadShape, "bad shape for tensor '" + key + "'");
      shape.push_back(d.get<std::int64_t>());
    }

    const auto& off = value["data_offsets"];
    if (!off.is_array() || off.size() != 2 || !off[0].is_number_unsigned() || !off[1].is_number_unsigned()) {
      fail(ParseError::OffsetsOutOfBounds, "data_offsets out of bounds for tensor '" + key + "'");
    }
    const auto begin = off[0].get<std::uint64_t>();
    const auto end = off[1].get<std::uint64_t>();
    if (begin > end) fail(ParseError::OffsetsOutOfBounds, "data_offsets out of bounds for tensor '" + key + "'");
    if (end > payload_len) fail(ParseError::TruncatedFile, "truncated file: payload of tensor '" + key + "' ends past end of file");
    if (end - begin != shape_numel(shape) * dtype_width(*dtype)) {
      fail(ParseError::SizeMismatch, "data_offsets size does not match shape for tensor '" + key + "'");
    }
    spans.emplace_back(begin, end);
    ckpt.tensors.push_back({key, decode_payload(*dtype, shape, payload + begin)});
  }

  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) fail(ParseError::OverlappingOffsets, "overlapping data_offsets");
  }
  if (!have_order) fail(ParseError::MissingLayerOrder, "missing layer_order metadata");
  try {
    ckpt.validate();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    if (what.rfind("orphan tensor", 0) == 0) fail(ParseError::OrphanTensor, what);
    fail(ParseError::BadLayerOrder, what);
  }
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t storage_bytes(const Checkpoint& ckpt) {
  std::uint64_t total = 0;
  for (const auto& t : ckpt.tensors) total += t.tensor.byte_size();
  return total;
}

std::string arch_fingerprint(const Checkpoint& ckpt) {
  std::string text;
  for (const auto& t : ckpt.tensors) {
    text += t.name;
    text += '[';
    for (std::size_t i = 0; i < t.tensor.shape().size(); ++i) {
      if (i) text += ',';
      text += std::to_string(t.tensor.shape()[i]);
    }
    text += "];";
  }
  text += '|';
  text += join_list(ckpt.layer_order);
  return sha256_hex(text);
}

std::string content_fingerprint(const Checkpoint& ckpt) { return sha256_hex(serialize_checkpoint(ckpt)); }

std::optional<std::string> first_incompatibility(const Checkpoint& a, const Checkpoint& b) {
  if (a.layer_order != b.layer_order) {
    return "layer_order differs: " + join_list(a.layer_order) + " vs " + join_list(b.layer_order);
  }
  const std::size_t n = std::min(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ta = a.tensors[i];
    const auto& tb = b.tensors[i];
    if (ta.name != tb.name) return "tensor name differs at position " + std::to_string(i) + ": " + ta.name + " vs " + tb.name;
    if (ta.tensor.shape() != tb.tensor.shape()) return "shape differs for tensor " + ta.name;
    if (ta.tensor.dtype() != tb.tensor.dtype()) return "dtype differs for tensor " + ta.name;
  }
  if (a.tensors.size() != b.tensors.size()) {
    const auto& longer = a.tensors.size() > b.tensors.size() ? a : b;
    return "tensor present in only one checkpoint: " + longer.tensors[n].name;
  }
  return std::nullopt;
}

}  // namespace rws
