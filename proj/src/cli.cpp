#include "rws/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "rws/analyzer.hpp"
#include "rws/checkpoint.hpp"
#include "rws/corruption.hpp"
#include "rws/dataset.hpp"
#include "rws/digest.hpp"
#include "rws/errors.hpp"
#include "rws/quantizer.hpp"
#include "rws/signature.hpp"
#include "rws/trainer.hpp"

namespace rws {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Manifest {
  std::string subcommand;
  json flags = json::object();
  json inputs = json::object();
  json outputs = json::object();

  void input(const std::string& path) { inputs[path] = sha256_file(path); }
  void output(const fs::path& path) { outputs[path.string()] = sha256_file(path.string()); }

  void write(const fs::path& path) const {
    json j;
    j["subcommand"] = subcommand;
    j["flags"] = flags;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    write_text(path, j.dump(2) + "\n");
  }
};

void record_flags(const CLI::App& app, Manifest& m) {
  m.subcommand = app.get_name();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->count() == 0 || opt->get_name() == "--help") continue;
    std::string key = opt->get_name();
    const auto& res = opt->results();
    if (res.size() == 1) {
      m.flags[key] = res.front();
    } else {
      m.flags[key] = res;
    }
  }
}

fs::path manifest_beside(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

float parse_float(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  float v = 0;
  try {
    v = std::stof(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw ValidationError("invalid " + what + " '" + text + "'");
  return v;
}

// "kind:severity"
CorruptionSpec parse_corruption_flag(const std::string& text) {
  const auto colon = text.rfind(':');
  CorruptionSpec spec;
  spec.kind = parse_corruption(text.substr(0, colon));
  spec.severity = colon == std::string::npos ? 5 : static_cast<int>(parse_float(text.substr(colon + 1), "severity"));
  severity_parameter(spec.kind, spec.severity);
  return spec;
}

ImageSet resolve_dataset(const std::string& text, Split split, std::size_t n, std::uint64_t seed, Manifest* m) {
  if (text.rfind("idx:", 0) == 0) {
    const auto parts = split_list(text.substr(4));
    if (parts.size() != 2) throw ValidationError("idx dataset must be idx:<images>,<labels>");
    if (m) {
      m->input(parts[0]);
      m->input(parts[1]);
    }
    return load_idx(parts[0], parts[1]);
  }
  return generate_dataset(parse_synth_id(text), split, n, seed);
}

std::vector<SignatureFile> read_signature_list(const std::string& list, Manifest& m) {
  std::vector<SignatureFile> sigs;
  for (const auto& p : split_list(list)) {
    m.input(p);
    sigs.push_back(read_signature(p));
  }
  return sigs;
}

Checkpoint read_input(const std::string& path, Manifest& m) {
  m.input(path);
  return read_checkpoint(path);
}

std::string alpha_label(const std::string& text) {
  std::string out;
  for (char c : text) out.push_back(c == '-' ? 'm' : c);
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust weight signature toolkit: extract, patch, quantize and analyse checkpoint deltas"};
  app.require_subcommand(1);
  app.allow_windows_style_options(false);

  // extract
  auto* extract = app.add_subcommand("extract", "Extract a signature from standard/init/robust checkpoints");
  std::string std_path, init_path, robust_path, out_path, mode = "vector", corruption;
  int layers = 5;
  extract->add_option("--std", std_path)->required();
  extract->add_option("--init", init_path)->required();
  extract->add_option("--robust", robust_path)->required();
  extract->add_option("--mode", mode);
  extract->add_option("--layers", layers);
  extract->add_option("--corruption", corruption);
  extract->add_option("--out", out_path)->required();

  // patch
  auto* patch_cmd = app.add_subcommand("patch", "Add alpha-weighted signatures to a model");
  std::string model_path, recipe_path;
  std::vector<std::string> sig_flags;
  patch_cmd->add_option("--model", model_path)->required();
  patch_cmd->add_option("--sig", sig_flags)->take_all()->allow_extra_args(false);
  patch_cmd->add_option("--recipe", recipe_path);
  patch_cmd->add_option("--out", out_path)->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Patch one signature at several coefficients");
  std::string sig_path, alphas = "0,0.3,0.6,0.9,1.0", outdir;
  sweep->add_option("--model", model_path)->required();
  sweep->add_option("--sig", sig_path)->required();
  sweep->add_option("--alphas", alphas);
  sweep->add_option("--outdir", outdir)->required();

  // quantize / dequantize
  auto* quant = app.add_subcommand("quantize", "Quantize a signature to 8 or 16 bits");
  int bits = 16;
  quant->add_option("--sig", sig_path)->required();
  quant->add_option("--bits", bits)->required();
  quant->add_option("--out", out_path)->required();
  auto* dequant = app.add_subcommand("dequantize", "Restore a quantized signature to float32");
  dequant->add_option("--sig", sig_path)->required();
  dequant->add_option("--out", out_path)->required();

  // report
  auto* report = app.add_subcommand("report", "Write an analysis CSV");
  std::string kind, sigs_list, sigs_a, sigs_b, layer, models_list, dataset = "synthA";
  int severity = 5;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  report->add_option("--kind", kind)->required();
  report->add_option("--out", out_path)->required();
  report->add_option("--sigs", sigs_list);
  report->add_option("--std", std_path);
  report->add_option("--init", init_path);
  report->add_option("--layer", layer);
  report->add_option("--sigs-a", sigs_a);
  report->add_option("--sigs-b", sigs_b);
  report->add_option("--models", models_list);
  report->add_option("--dataset", dataset);
  report->add_option("--severity", severity);
  report->add_option("--n", n);
  report->add_option("--seed", seed);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a desk-scale model");
  std::string corruption_flag, init_flag, config_path, arch = "convnet";
  train_cmd->add_option("--dataset", dataset);
  train_cmd->add_option("--corruption", corruption_flag);
  train_cmd->add_option("--init", init_flag)->required();
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--arch", arch);
  train_cmd->add_option("--out", out_path)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Print test accuracy of a model");
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--dataset", dataset);
  eval_cmd->add_option("--corruption", corruption_flag);
  eval_cmd->add_option("--n", n);
  eval_cmd->add_option("--seed", seed);

  // dump-features
  auto* dump = app.add_subcommand("dump-features", "Write conv feature maps as PGM images");
  std::string input_path, layer_list;
  dump->add_option("--model", model_path)->required();
  dump->add_option("--input", input_path)->required();
  dump->add_option("--layers", layer_list)->required();
  dump->add_option("--outdir", outdir)->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  Manifest manifest;
  try {
    if (extract->parsed()) {
      record_flags(*extract, manifest);
      const Checkpoint s = read_input(std_path, manifest);
      const Checkpoint i = read_input(init_path, manifest);
      const Checkpoint r = read_input(robust_path, manifest);
      const SignatureFile sig = extract_rws(s, i, r, ExtractOptions{parse_mode(mode), layers, corruption});
      write_signature(sig, out_path);
      manifest.output(out_path);
      manifest.write(manifest_beside(out_path));
    } else if (patch_cmd->parsed()) {
      record_flags(*patch_cmd, manifest);
      const Checkpoint model = read_input(model_path, manifest);
      PatchRecipe recipe;
      for (const auto& flag : sig_flags) {
        std::string path = flag;
        float alpha = 1.0f;
        const auto colon = flag.rfind(':');
        if (colon != std::string::npos) {
          path = flag.substr(0, colon);
          alpha = parse_float(flag.substr(colon + 1), "alpha");
        }
        manifest.input(path);
        recipe.entries.push_back({read_signature(path), alpha});
      }
      if (!recipe_path.empty()) {
        manifest.input(recipe_path);
        std::ifstream in(recipe_path);
        json j;
        try {
          j = json::parse(in);
          for (const auto& e : j) {
            const std::string p = e.at("path").get<std::string>();
            manifest.input(p);
            recipe.entries.push_back({read_signature(p), e.value("alpha", 1.0f)});
          }
        } catch (const json::exception& e) {
          throw FormatError(ParseError::BadHeader, std::string("malformed recipe: ") + e.what());
        }
      }
      write_checkpoint(patch(model, recipe), out_path);
      manifest.output(out_path);
      manifest.write(manifest_beside(out_path));
    } else if (sweep->parsed()) {
      record_flags(*sweep, manifest);
      const Checkpoint model = read_input(model_path, manifest);
      manifest.input(sig_path);
      const SignatureFile sig = read_signature(sig_path);
      const auto texts = split_list(alphas);
      std::vector<float> values;
      for (const auto& t : texts) values.push_back(parse_float(t, "alpha"));
      const auto patched = rescale_sweep(model, sig, values);
      fs::create_directories(outdir);
      for (std::size_t k = 0; k < patched.size(); ++k) {
        const fs::path p = fs::path(outdir) / ("alpha_" + alpha_label(texts[k]) + ".ckpt");
        write_checkpoint(patched[k], p);
        manifest.output(p);
      }
      manifest.write(fs::path(outdir) / "manifest.json");
    } else if (quant->parsed() || dequant->parsed()) {
      const bool q = quant->parsed();
      record_flags(q ? *quant : *dequant, manifest);
      manifest.input(sig_path);
      const SignatureFile sig = read_signature(sig_path);
      write_signature(q ? quantize(sig, bits) : dequantize(sig), out_path);
      manifest.output(out_path);
      manifest.write(manifest_beside(out_path));
    } else if (report->parsed()) {
      record_flags(*report, manifest);
      std::string csv;
      if (kind == "norms") {
        const Checkpoint s = read_input(std_path, manifest);
        std::optional<Checkpoint> i;
        if (!init_path.empty()) i = read_input(init_path, manifest);
        csv = to_csv(layer_norm_profile(read_signature_list(sigs_list, manifest), s, i ? &*i : nullptr));
      } else if (kind == "layer-cosine") {
        if (layer.empty()) throw ValidationError("--layer is required for layer-cosine");
        csv = to_csv(per_layer_cosine(read_signature_list(sigs_list, manifest), layer));
      } else if (kind == "relationship") {
        csv = to_csv(rws_relationship_matrix(read_signature_list(sigs_list, manifest)));
      } else if (kind == "cross-dataset") {
        csv = to_csv(cross_dataset_report(read_signature_list(sigs_a, manifest), read_signature_list(sigs_b, manifest)));
      } else if (kind == "storage") {
        const Checkpoint s = read_input(std_path, manifest);
        csv = "configuration,bytes,ratio\n";
        for (const auto& row : storage_report(s, read_signature_list(sigs_list, manifest))) {
          csv += row.configuration + "," + std::to_string(row.bytes) + "," + format_number(row.ratio) + "\n";
        }
      } else if (kind == "transfer") {
        const Checkpoint s = read_input(std_path, manifest);
        std::vector<std::pair<std::string, Checkpoint>> models;
        for (const auto& entry : split_list(models_list)) {
          const auto eq = entry.find('=');
          if (eq == std::string::npos) throw ValidationError("--models entries must be <corruption>=<path>");
          models.emplace_back(entry.substr(0, eq), read_input(entry.substr(eq + 1), manifest));
        }
        const ImageSet test = resolve_dataset(dataset, Split::Test, n, seed, &manifest);
        csv = to_csv(transfer_gain_matrix(models, s, test, severity), "trained_on");
      } else {
        throw ValidationError("unknown report kind '" + kind + "'");
      }
      write_text(out_path, csv);
      manifest.output(out_path);
      manifest.write(manifest_beside(out_path));
    } else if (train_cmd->parsed()) {
      record_flags(*train_cmd, manifest);
      TrainConfig config;
      if (!config_path.empty()) {
        manifest.input(config_path);
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open " + config_path);
        config = TrainConfig::from_json(std::string(std::istreambuf_iterator<char>(in), {}));
      }
      if (train_cmd->get_option("--dataset")->count()) config.dataset = dataset;
      Checkpoint init;
      if (init_flag.rfind("seed:", 0) == 0) {
        const auto init_seed = std::stoull(init_flag.substr(5));
        if (arch != "convnet" && arch != "mlp") throw ValidationError("unknown --arch '" + arch + "'");
        init = init_checkpoint(arch == "mlp" ? NetSpec::mlp() : NetSpec::convnet(), init_seed);
      } else {
        init = read_input(init_flag, manifest);
      }
      std::optional<CorruptionSpec> spec;
      if (!corruption_flag.empty()) spec = parse_corruption_flag(corruption_flag);
      const ImageSet data = resolve_dataset(config.dataset, Split::Train, config.train_size, config.data_seed, &manifest);
      TrainLog log;
      const Checkpoint model = train(config, data, init, spec, &log);
      write_checkpoint(model, out_path);
      for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) err << "epoch " << e + 1 << " loss " << log.epoch_loss[e] << "\n";
      manifest.output(out_path);
      manifest.write(manifest_beside(out_path));
    } else if (eval_cmd->parsed()) {
      const Checkpoint model = read_checkpoint(model_path);
      const ImageSet test = resolve_dataset(dataset, Split::Test, n, seed, nullptr);
      double acc = 0.0;
      if (corruption_flag.rfind("all:", 0) == 0) {
        acc = evaluate_mean_corrupted(model, test, static_cast<int>(parse_float(corruption_flag.substr(4), "severity")));
      } else if (!corruption_flag.empty()) {
        acc = evaluate(model, test, parse_corruption_flag(corruption_flag));
      } else {
        acc = evaluate(model, test);
      }
      out << format_number(acc) << "\n";
    } else if (dump->parsed()) {
      record_flags(*dump, manifest);
      const Checkpoint model = read_input(model_path, manifest);
      manifest.input(input_path);
      const GrayImage image = read_pgm(input_path);
      for (const auto& p : feature_map_dump(model, image.pixels, split_list(layer_list), outdir)) manifest.output(p);
      manifest.write(fs::path(outdir) / "manifest.json");
    }
  } catch (const FingerprintMismatch& e) {
    err << "error: " << e.what() << "\n  target fingerprint:    " << e.expected()
        << "\n  signature fingerprint: " << e.actual() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace rws
