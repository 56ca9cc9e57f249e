#include "rws/analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "rws/corruption.hpp"
#include "rws/errors.hpp"
#include "rws/network.hpp"
#include "rws/quantizer.hpp"
#include "rws/trainer.hpp"

namespace rws {

double SimilarityReport::mean_off_diagonal() const {
  const std::size_t n = row_labels.size();
  if (n < 2 || n != col_labels.size()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) sum += at(i, j);
    }
  }
  return sum / static_cast<double>(n * (n - 1));
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string to_csv(const SimilarityReport& report, const std::string& corner) {
  std::string out = corner;
  for (const auto& c : report.col_labels) out += "," + c;
  out += '\n';
  for (std::size_t r = 0; r < report.row_labels.size(); ++r) {
    out += report.row_labels[r];
    for (std::size_t c = 0; c < report.col_labels.size(); ++c) out += "," + format_number(report.at(r, c));
    out += '\n';
  }
  return out;
}

FlatVector signature_group(const SignatureFile& sig, const std::string& group) {
  if (!sig.body().has_group(group)) {
    throw ValidationError("signature '" + sig.corruption() + "' does not cover layer '" + group + "'");
  }
  if (sig.quant_bits() != 0) return signature_group(dequantize(sig), group);
  return flatten(sig.body().group_tensors(group));
}

FlatVector signature_vector(const SignatureFile& sig) {
  if (sig.quant_bits() != 0) return signature_vector(dequantize(sig));
  return flatten(std::span<const NamedTensor>(sig.body().tensors));
}

namespace {

SimilarityReport cosine_matrix(const std::vector<FlatVector>& vecs, const std::vector<std::string>& labels,
                               std::string context) {
  SimilarityReport r;
  r.row_labels = labels;
  r.col_labels = labels;
  r.context = std::move(context);
  const std::size_t n = vecs.size();
  r.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double c = cosine(vecs[i], vecs[j]);
      r.values[i * n + j] = c;
      r.values[j * n + i] = c;
    }
  }
  return r;
}

std::vector<std::string> labels_of(const std::vector<SignatureFile>& sigs) {
  std::vector<std::string> out;
  for (const auto& s : sigs) out.push_back(s.corruption());
  return out;
}

}  // namespace

std::vector<NormProfileRow> layer_norm_profile(const std::vector<SignatureFile>& sigs, const Checkpoint& std_model,
                                               const Checkpoint* init) {
  if (sigs.empty()) throw ValidationError("norm profile needs at least one signature");
  const std::string fp = arch_fingerprint(std_model);
  for (const auto& s : sigs) {
    if (s.arch_fingerprint() != fp) throw FingerprintMismatch(fp, s.arch_fingerprint());
    if (s.groups() != std_model.layer_order) {
      throw ValidationError("norm profile needs signatures extracted over every layer group");
    }
  }
  if (init) {
    if (auto diff = first_incompatibility(std_model, *init)) throw ArchitectureMismatch("init: " + *diff);
  }
  std::vector<NormProfileRow> rows;
  for (const auto& g : std_model.layer_order) {
    NormProfileRow row;
    row.group = g;
    const FlatVector std_g = flatten(std_model.group_tensors(g));
    const double std_norm = l2_norm(std_g);
    double base_norm = std::numeric_limits<double>::quiet_NaN();
    if (init) {
      FlatVector base = std_g;
      const FlatVector init_g = flatten(init->group_tensors(g));
      for (std::size_t i = 0; i < base.values.size(); ++i) base.values[i] -= init_g.values[i];
      base_norm = l2_norm(base);
    }
    for (const auto& s : sigs) {
      const double n = l2_norm(signature_group(s, g));
      row.mean_norm += n;
      row.ratio_to_std += std_norm > 0 ? n / std_norm : 0.0;
      row.ratio_to_base += init ? (base_norm > 0 ? n / base_norm : 0.0) : 0.0;
    }
    const double count = static_cast<double>(sigs.size());
    row.mean_norm /= count;
    row.ratio_to_std /= count;
    row.ratio_to_base = init ? row.ratio_to_base / count : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  double total = 0.0;
  double total_sq = 0.0;
  for (const auto& r : rows) {
    total += r.ratio_to_std;
    total_sq += r.ratio_to_std * r.ratio_to_std;
  }
  double run = 0.0;
  double run_sq = 0.0;
  for (auto& r : rows) {
    run += r.ratio_to_std;
    run_sq += r.ratio_to_std * r.ratio_to_std;
    r.cumulative_share = total > 0 ? run / total : 0.0;
    r.cumulative_share_squared = total_sq > 0 ? run_sq / total_sq : 0.0;
  }
  if (total > 0) rows.back().cumulative_share = 1.0;
  if (total_sq > 0) rows.back().cumulative_share_squared = 1.0;
  return rows;
}

std::string to_csv(const std::vector<NormProfileRow>& rows) {
  std::string out = "layer,mean_norm,ratio_to_std,ratio_to_base,cumulative_share,cumulative_share_squared\n";
  for (const auto& r : rows) {
    out += r.group + "," + format_number(r.mean_norm) + "," + format_number(r.ratio_to_std) + "," +
           format_number(r.ratio_to_base) + "," + format_number(r.cumulative_share) + "," +
           format_number(r.cumulative_share_squared) + "\n";
  }
  return out;
}

SimilarityReport per_layer_cosine(const std::vector<SignatureFile>& sigs, const std::string& layer) {
  std::vector<FlatVector> vecs;
  for (const auto& s : sigs) vecs.push_back(signature_group(s, layer));
  return cosine_matrix(vecs, labels_of(sigs), "layer " + layer);
}

SimilarityReport rws_relationship_matrix(const std::vector<SignatureFile>& sigs) {
  if (sigs.size() < 2) throw ValidationError("relationship matrix needs at least two signatures");
  std::vector<FlatVector> vecs;
  for (const auto& s : sigs) {
    if (s.groups() != sigs.front().groups()) throw ValidationError("signatures cover different layer groups");
    vecs.push_back(signature_vector(s));
  }
  return cosine_matrix(vecs, labels_of(sigs), "shallow-" + std::to_string(sigs.front().layers_kept()) + " aggregate");
}

SimilarityReport transfer_gain_matrix(const std::vector<std::pair<std::string, Checkpoint>>& models,
                                      const Checkpoint& std_model, const ImageSet& test, int severity) {
  SimilarityReport r;
  r.context = "transfer gain, severity " + std::to_string(severity);
  std::vector<CorruptionKind> kinds;
  for (const auto& [name, model] : models) {
    r.row_labels.push_back(name);
    if (name != "standard") kinds.push_back(parse_corruption(name));
  }
  for (auto k : kinds) r.col_labels.emplace_back(corruption_name(k));
  std::vector<double> baseline;
  for (auto k : kinds) baseline.push_back(evaluate(std_model, test, CorruptionSpec{k, severity, 0}));
  for (const auto& [name, model] : models) {
    for (std::size_t c = 0; c < kinds.size(); ++c) {
      const double acc = name == "standard" ? baseline[c] : evaluate(model, test, CorruptionSpec{kinds[c], severity, 0});
      r.values.push_back(100.0 * (acc - baseline[c]));
    }
  }
  return r;
}

std::vector<CrossDatasetRow> cross_dataset_report(const std::vector<SignatureFile>& sigs_a,
                                                  const std::vector<SignatureFile>& sigs_b) {
  const auto names_a = labels_of(sigs_a);
  const auto names_b = labels_of(sigs_b);
  if (std::set<std::string>(names_a.begin(), names_a.end()) != std::set<std::string>(names_b.begin(), names_b.end()) ||
      names_a.size() != names_b.size()) {
    throw ValidationError("cross-dataset signature sets cover different corruptions");
  }
  std::vector<FlatVector> va;
  std::vector<FlatVector> vb;
  for (const auto& s : sigs_a) va.push_back(signature_vector(s));
  for (const auto& s : sigs_b) {
    if (s.groups() != sigs_a.front().groups() || s.arch_fingerprint() != sigs_a.front().arch_fingerprint()) {
      throw ValidationError("cross-dataset signatures differ in architecture or layer coverage");
    }
    vb.push_back(signature_vector(s));
  }
  std::vector<CrossDatasetRow> rows;
  for (std::size_t i = 0; i < names_a.size(); ++i) {
    CrossDatasetRow row;
    row.corruption = names_a[i];
    double cross = 0.0;
    int count = 0;
    for (std::size_t j = 0; j < names_b.size(); ++j) {
      const double c = cosine(va[i], vb[j]);
      if (names_b[j] == names_a[i]) {
        row.same = c;
      } else {
        cross += c;
        ++count;
      }
    }
    row.cross_mean = count ? cross / count : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<CrossDatasetRow>& rows) {
  std::string out = "corruption,same_corruption,cross_corruption_mean\n";
  for (const auto& r : rows) out += r.corruption + "," + format_number(r.same) + "," + format_number(r.cross_mean) + "\n";
  return out;
}

std::vector<std::filesystem::path> feature_map_dump(const Checkpoint& model, std::span<const float> image,
                                                    const std::vector<std::string>& layers,
                                                    const std::filesystem::path& out_dir) {
  const NetSpec spec = NetSpec::from_checkpoint(model);
  Network<float> net(spec);
  net.load(model);
  std::vector<std::pair<std::string, std::vector<float>>> maps;
  int channels = 0;
  int h = 0;
  int w = 0;
  std::vector<std::tuple<std::string, int, int, int>> dims;
  for (const auto& layer : layers) {
    maps.emplace_back(layer, net.feature_maps(image, layer, channels, h, w));
    dims.emplace_back(layer, channels, h, w);
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const auto& [layer, c, mh, mw] = dims[m];
    const auto& values = maps[m].second;
    const std::size_t plane = static_cast<std::size_t>(mh) * mw;
    for (int ch = 0; ch < c; ++ch) {
      const float* p = values.data() + ch * plane;
      const auto [lo, hi] = std::minmax_element(p, p + plane);
      std::vector<std::uint8_t> bytes(plane, 0);
      if (*hi > *lo) {
        const double range = static_cast<double>(*hi) - *lo;
        for (std::size_t i = 0; i < plane; ++i) {
          bytes[i] = static_cast<std::uint8_t>(std::lround((static_cast<double>(p[i]) - *lo) / range * 255.0));
        }
      }
      const auto path = out_dir / (layer + "_" + std::to_string(ch) + ".pgm");
      write_pgm(path, mh, mw, bytes);
      written.push_back(path);
    }
  }
  return written;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace rws
