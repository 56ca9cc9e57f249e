#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rws/checkpoint.hpp"
#include "rws/tensor.hpp"

namespace rws {

enum class ProjectionMode { Vector, Global, Matrix };

std::string_view mode_name(ProjectionMode mode);
ProjectionMode parse_mode(std::string_view text);

// Per-layer-group flattened difference between two shape-compatible checkpoints.
struct WeightDelta {
  std::vector<std::pair<std::string, FlatVector>> groups;
  std::string arch_fingerprint;

  const FlatVector& group(const std::string& name) const;
};

WeightDelta delta(const Checkpoint& a, const Checkpoint& b);

/*
 * A signature is a checkpoint restricted to its covered layer groups.
 * Required metadata: corruption, mode, layers_kept, quant_bits,
 * source_fingerprint, arch_fingerprint. When quant_bits != "0" every integer
 * payload "<name>" has a float32 scalar companion "<name>#scale".
 */
class SignatureFile {
 public:
  SignatureFile() = default;
  // Validates the signature invariants.
  explicit SignatureFile(Checkpoint body);

  const Checkpoint& body() const { return body_; }

  std::string corruption() const { return body_.meta("corruption"); }
  ProjectionMode mode() const { return parse_mode(body_.meta("mode")); }
  int layers_kept() const;
  int quant_bits() const;
  std::string source_fingerprint() const { return body_.meta("source_fingerprint"); }
  // Fingerprint of the full architecture the signature was extracted from.
  std::string arch_fingerprint() const { return body_.meta("arch_fingerprint"); }
  const std::vector<std::string>& groups() const { return body_.layer_order; }

 private:
  Checkpoint body_;
};

SignatureFile read_signature(const std::filesystem::path& path);
void write_signature(const SignatureFile& sig, const std::filesystem::path& path);

struct ExtractOptions {
  ProjectionMode mode = ProjectionMode::Vector;
  int layers_kept = 5;
  // Defaults to the robust checkpoint's "train.corruption" metadata.
  std::string corruption;
};

/*
 * RWS = v_c - P(v_c) with v_base = std - init and v_c = robust - init,
 * restricted to the shallowest layers_kept groups. The projection is the
 * zero map wherever v_base vanishes.
 */
SignatureFile extract_rws(const Checkpoint& std_model, const Checkpoint& init, const Checkpoint& robust,
                          const ExtractOptions& options = {});

struct PatchEntry {
  SignatureFile signature;
  float alpha = 1.0f;
};

struct PatchRecipe {
  std::vector<PatchEntry> entries;
  // When non-empty, must equal arch_fingerprint of the patch target.
  std::string target_fingerprint;
};

// std + sum_i alpha_i * RWS_i on covered groups; uncovered tensors are copied.
Checkpoint patch(const Checkpoint& std_model, const PatchRecipe& recipe);

std::vector<Checkpoint> rescale_sweep(const Checkpoint& std_model, const SignatureFile& sig,
                                      const std::vector<float>& alphas);

}  // namespace rws
