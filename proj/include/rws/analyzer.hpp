#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rws/checkpoint.hpp"
#include "rws/dataset.hpp"
#include "rws/signature.hpp"

namespace rws {

struct SimilarityReport {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<double> values;  // row-major
  std::string context;

  double at(std::size_t row, std::size_t col) const { return values[row * col_labels.size() + col]; }
  // Mean of off-diagonal entries of a square report.
  double mean_off_diagonal() const;
};

// Fixed "%.9g" formatting.
std::string format_number(double v);

// Header row "<corner>,<col labels...>", then one row per row label.
std::string to_csv(const SimilarityReport& report, const std::string& corner = "corruption");

struct NormProfileRow {
  std::string group;
  double mean_norm = 0.0;         // mean over signatures of ||RWS_g||
  double ratio_to_std = 0.0;      // mean over signatures of ||RWS_g|| / ||std_g||
  double ratio_to_base = 0.0;     // same, normalised by ||std_g - init_g||; NaN without init
  double cumulative_share = 0.0;  // of ratio_to_std summed over groups 1..k
  double cumulative_share_squared = 0.0;
};

// Signatures must cover every group of `std_model`.
std::vector<NormProfileRow> layer_norm_profile(const std::vector<SignatureFile>& sigs, const Checkpoint& std_model,
                                               const Checkpoint* init = nullptr);
std::string to_csv(const std::vector<NormProfileRow>& rows);

SimilarityReport per_layer_cosine(const std::vector<SignatureFile>& sigs, const std::string& layer);
// Cosines over the concatenation of all kept groups.
SimilarityReport rws_relationship_matrix(const std::vector<SignatureFile>& sigs);

/*
 * Entry (r, c): accuracy of the model trained on corruption r, tested on c,
 * minus the standard model's accuracy on c, in percentage points.
 */
SimilarityReport transfer_gain_matrix(const std::vector<std::pair<std::string, Checkpoint>>& models,
                                      const Checkpoint& std_model, const ImageSet& test, int severity);

struct CrossDatasetRow {
  std::string corruption;
  double same = 0.0;        // cos(a[c], b[c])
  double cross_mean = 0.0;  // mean over c' != c of cos(a[c], b[c'])
};

std::vector<CrossDatasetRow> cross_dataset_report(const std::vector<SignatureFile>& sigs_a,
                                                  const std::vector<SignatureFile>& sigs_b);
std::string to_csv(const std::vector<CrossDatasetRow>& rows);

// Writes "<layer>_<channel>.pgm" per channel, min-max normalised per map; returns the paths.
std::vector<std::filesystem::path> feature_map_dump(const Checkpoint& model, std::span<const float> image,
                                                    const std::vector<std::string>& layers,
                                                    const std::filesystem::path& out_dir);

// Flattened covered group of a signature, dequantizing if needed.
FlatVector signature_group(const SignatureFile& sig, const std::string& group);
FlatVector signature_vector(const SignatureFile& sig);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace rws
