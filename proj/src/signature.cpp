#include "rws/signature.hpp"

#include <cmath>
#include <map>

#include "rws/digest.hpp"
#include "rws/errors.hpp"
#include "rws/projection.hpp"
#include "rws/quantizer.hpp"

namespace rws {

std::string_view mode_name(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::Vector: return "vector";
    case ProjectionMode::Global: return "global";
    case ProjectionMode::Matrix: return "matrix";
  }
  return "?";
}

ProjectionMode parse_mode(std::string_view text) {
  if (text == "vector") return ProjectionMode::Vector;
  if (text == "global") return ProjectionMode::Global;
  if (text == "matrix") return ProjectionMode::Matrix;
  throw ValidationError("unknown projection mode '" + std::string(text) + "'");
}

const FlatVector& WeightDelta::group(const std::string& name) const {
  for (const auto& [g, v] : groups) {
    if (g == name) return v;
  }
  throw ValidationError("weight delta has no group '" + name + "'");
}

namespace {

void require_compatible(const Checkpoint& a, const Checkpoint& b, const char* what) {
  if (auto diff = first_incompatibility(a, b)) {
    throw ArchitectureMismatch(std::string("architecture mismatch (") + what + "): " + *diff);
  }
}

int parse_int(const std::string& text, const char* key) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw ValidationError(std::string("metadata '") + key + "' is not an integer");
  return v;
}

}  // namespace

WeightDelta delta(const Checkpoint& a, const Checkpoint& b) {
  require_compatible(a, b, "delta");
  WeightDelta out;
  out.arch_fingerprint = arch_fingerprint(a);
  for (const auto& g : a.layer_order) {
    FlatVector fa = flatten(a.group_tensors(g));
    const FlatVector fb = flatten(b.group_tensors(g));
    for (std::size_t i = 0; i < fa.values.size(); ++i) fa.values[i] -= fb.values[i];
    out.groups.emplace_back(g, std::move(fa));
  }
  return out;
}

SignatureFile::SignatureFile(Checkpoint body) : body_(std::move(body)) {
  body_.validate();
  for (const char* key : {"corruption", "mode", "layers_kept", "quant_bits", "source_fingerprint", "arch_fingerprint"}) {
    if (!body_.metadata.count(key)) throw FormatError(ParseError::BadMetadata, std::string("signature lacks metadata '") + key + "'");
  }
  parse_mode(body_.meta("mode"));
  if (layers_kept() != static_cast<int>(body_.layer_order.size())) {
    throw ValidationError("layers_kept does not equal the number of layer groups present");
  }
  const int bits = quant_bits();
  if (bits != 0 && bits != 8 && bits != 16) throw ValidationError("quant_bits must be 0, 8 or 16");
  for (const auto& t : body_.tensors) {
    const bool is_scale = t.name.size() > 6 && t.name.ends_with("#scale");
    if (bits == 0) {
      if (is_integer(t.tensor.dtype()) || is_scale) throw ValidationError("unquantized signature carries quantized tensor '" + t.name + "'");
      continue;
    }
    if (is_scale) {
      if (t.tensor.dtype() != DType::F32 || t.tensor.numel() != 1) throw ValidationError("scale tensor '" + t.name + "' must be a float32 scalar");
      continue;
    }
    const DType expected = bits == 8 ? DType::I8 : DType::I16;
    if (t.tensor.dtype() != expected) throw ValidationError("payload '" + t.name + "' dtype does not match quant_bits");
    if (!body_.find(t.name + "#scale")) {
      throw FormatError(ParseError::MissingScale, "missing scale companion for '" + t.name + "'");
    }
  }
}

int SignatureFile::layers_kept() const { return parse_int(body_.meta("layers_kept"), "layers_kept"); }
int SignatureFile::quant_bits() const { return parse_int(body_.meta("quant_bits"), "quant_bits"); }

SignatureFile read_signature(const std::filesystem::path& path) {
  Checkpoint body = read_checkpoint(path);
  try {
    return SignatureFile(std::move(body));
  } catch (const ValidationError& e) {
    throw FormatError(ParseError::BadMetadata, path.string() + ": " + e.what());
  }
}

void write_signature(const SignatureFile& sig, const std::filesystem::path& path) { write_checkpoint(sig.body(), path); }

SignatureFile extract_rws(const Checkpoint& std_model, const Checkpoint& init, const Checkpoint& robust,
                          const ExtractOptions& options) {
  require_compatible(std_model, init, "std vs init");
  require_compatible(std_model, robust, "std vs robust");
  const int groups = static_cast<int>(std_model.layer_order.size());
  if (options.layers_kept < 1 || options.layers_kept > groups) {
    throw ValidationError("layers_kept must be in [1, " + std::to_string(groups) + "], got " +
                          std::to_string(options.layers_kept));
  }

  const WeightDelta base = delta(std_model, init);
  const WeightDelta robustifying = delta(robust, init);

  double global_coef = 0.0;
  if (options.mode == ProjectionMode::Global) {
    CompensatedSum cb;
    CompensatedSum bb;
    for (std::size_t g = 0; g < base.groups.size(); ++g) {
      cb.add(dot(robustifying.groups[g].second, base.groups[g].second));
      bb.add(dot(base.groups[g].second, base.groups[g].second));
    }
    global_coef = bb.value() == 0.0 ? 0.0 : cb.value() / bb.value();
  }

  Checkpoint body;
  for (int g = 0; g < options.layers_kept; ++g) {
    const std::string& group = std_model.layer_order[g];
    const FlatVector& vb = base.groups[g].second;
    const FlatVector& vc = robustifying.groups[g].second;
    body.layer_order.push_back(group);

    std::vector<double> residual(vc.values.size());
    if (options.mode == ProjectionMode::Matrix) {
      std::size_t offset = 0;
      for (const auto* t : std_model.group_tensors(group)) {
        const std::size_t n = t->tensor.numel();
        const auto rows = static_cast<std::size_t>(t->tensor.shape()[0]);
        std::vector<double> b(vb.values.begin() + offset, vb.values.begin() + offset + n);
        std::vector<double> c(vc.values.begin() + offset, vc.values.begin() + offset + n);
        const auto r = matrix_residual(b, c, rows, n / rows);
        std::copy(r.begin(), r.end(), residual.begin() + offset);
        offset += n;
      }
    } else {
      const double coef = options.mode == ProjectionMode::Global ? global_coef : projection_coefficient(vb.values, vc.values);
      for (std::size_t i = 0; i < residual.size(); ++i) {
        residual[i] = static_cast<double>(vc.values[i]) - coef * static_cast<double>(vb.values[i]);
      }
    }

    std::size_t offset = 0;
    for (const auto* t : std_model.group_tensors(group)) {
      const std::size_t n = t->tensor.numel();
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<float>(residual[offset + i]);
      body.tensors.push_back({t->name, Tensor::from_floats(t->tensor.shape(), std::move(values))});
      offset += n;
    }
  }

  std::string corruption = options.corruption;
  if (corruption.empty()) corruption = robust.meta_or("train.corruption", "unknown");
  body.metadata["corruption"] = corruption;
  body.metadata["mode"] = std::string(mode_name(options.mode));
  body.metadata["layers_kept"] = std::to_string(options.layers_kept);
  body.metadata["quant_bits"] = "0";
  body.metadata["source_fingerprint"] = sha256_hex(content_fingerprint(std_model) + content_fingerprint(init));
  body.metadata["arch_fingerprint"] = arch_fingerprint(std_model);
  body.metadata["source_groups"] = join_list(std_model.layer_order);
  return SignatureFile(std::move(body));
}

Checkpoint patch(const Checkpoint& std_model, const PatchRecipe& recipe) {
  const std::string target = arch_fingerprint(std_model);
  if (!recipe.target_fingerprint.empty() && recipe.target_fingerprint != target) {
    throw FingerprintMismatch(target, recipe.target_fingerprint);
  }
  if (recipe.entries.empty()) return std_model;

  std::map<std::string, std::vector<double>> accum;
  std::vector<std::string> corruptions;
  for (const auto& entry : recipe.entries) {
    if (!std::isfinite(entry.alpha)) throw ValidationError("patch coefficient must be finite");
    const SignatureFile& raw = entry.signature;
    if (raw.arch_fingerprint() != target) throw FingerprintMismatch(target, raw.arch_fingerprint());
    const SignatureFile sig = raw.quant_bits() == 0 ? raw : dequantize(raw);
    corruptions.push_back(sig.corruption());
    for (const auto& t : sig.body().tensors) {
      const Tensor* dst = std_model.find(t.name);
      if (!dst || dst->shape() != t.tensor.shape()) {
        throw ArchitectureMismatch("signature tensor '" + t.name + "' does not match the target model");
      }
      auto& acc = accum[t.name];
      if (acc.empty()) acc.assign(dst->numel(), 0.0);
      const auto values = t.tensor.floats();
      const double alpha = entry.alpha;
      for (std::size_t i = 0; i < values.size(); ++i) acc[i] += alpha * static_cast<double>(values[i]);
    }
  }

  Checkpoint out = std_model;
  for (auto& t : out.tensors) {
    auto it = accum.find(t.name);
    if (it == accum.end()) continue;
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (it->second[i] != 0.0) t.tensor.set(i, t.tensor.get(i) + it->second[i]);
    }
  }
  out.metadata["patch.corruptions"] = join_list(corruptions);
  return out;
}

std::vector<Checkpoint> rescale_sweep(const Checkpoint& std_model, const SignatureFile& sig,
                                      const std::vector<float>& alphas) {
  std::vector<Checkpoint> out;
  out.reserve(alphas.size());
  for (float a : alphas) {
    if (!std::isfinite(a)) throw ValidationError("sweep coefficients must be finite");
  }
  for (float a : alphas) out.push_back(patch(std_model, PatchRecipe{{PatchEntry{sig, a}}, {}}));
  return out;
}

}  // namespace rws
