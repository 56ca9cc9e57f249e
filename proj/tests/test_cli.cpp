#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "rws/cli.hpp"
#include "rws/dataset.hpp"
#include "rws/digest.hpp"
#include "rws/signature.hpp"
#include "support.hpp"

using namespace rws;
using namespace rws::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Workspace {
  fs::path dir;
  std::string init, std_model, robust, other;

  explicit Workspace(const std::string& name) : dir(scratch_dir(name)) {
    const Checkpoint i = init_checkpoint(NetSpec::convnet(), 1);
    init = (dir / "init.ckpt").string();
    std_model = (dir / "std.ckpt").string();
    robust = (dir / "robust.ckpt").string();
    other = (dir / "other.ckpt").string();
    write_checkpoint(i, init);
    write_checkpoint(jitter(i, 0.01, 2), std_model);
    Checkpoint r = jitter(i, 0.01, 3);
    r.metadata["train.corruption"] = "contrast";
    write_checkpoint(r, robust);
    write_checkpoint(init_checkpoint(tiny_mlp(), 1), other);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string extract(const std::string& name, int layers = 2) const {
    const auto out = path(name);
    const Run r = cli({"extract", "--std=" + std_model, "--init=" + init, "--robust=" + robust,
                       "--layers=" + std::to_string(layers), "--out=" + out});
    REQUIRE(r.code == 0);
    return out;
  }
};

}  // namespace

TEST_CASE("usage errors exit 1") {
  Run r = cli({});
  CHECK(r.code == 1);
  r = cli({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("extract") != std::string::npos);
  r = cli({"extract", "--bogus=1"});
  CHECK(r.code == 1);
  r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("patch") != std::string::npos);
}

TEST_CASE("extract writes a signature and a manifest") {
  Workspace ws("cli_extract");
  const auto sig_path = ws.extract("c.rws");
  const SignatureFile sig = read_signature(sig_path);
  CHECK(sig.corruption() == "contrast");
  CHECK(sig.mode() == ProjectionMode::Vector);
  CHECK(sig.layers_kept() == 2);

  const auto manifest = nlohmann::json::parse(slurp(sig_path + ".manifest.json"));
  CHECK(manifest["subcommand"] == "extract");
  CHECK(manifest["flags"]["--layers"] == "2");
  CHECK(manifest["inputs"][ws.std_model] == sha256_file(ws.std_model));
  CHECK(manifest["outputs"][sig_path] == sha256_file(sig_path));
  const std::string text = slurp(sig_path + ".manifest.json");
  CHECK(text.find("\"flags\"") < text.find("\"inputs\""));
  CHECK(text.find("\"inputs\"") < text.find("\"outputs\""));

  // Default layer count exceeds the four groups of the convnet.
  const Run too_many = cli({"extract", "--std=" + ws.std_model, "--init=" + ws.init, "--robust=" + ws.robust, "--out=" + ws.path("x.rws")});
  CHECK(too_many.code == 1);
}

TEST_CASE("patch behaviour") {
  Workspace ws("cli_patch");
  const auto sig = ws.extract("c.rws");
  const std::string std_before = slurp(ws.std_model);

  SUBCASE("no signatures copies the model byte for byte") {
    const Run r = cli({"patch", "--model=" + ws.std_model, "--out=" + ws.path("same.ckpt")});
    CHECK(r.code == 0);
    CHECK(slurp(ws.path("same.ckpt")) == std_before);
  }
  SUBCASE("alpha flags and recipe files agree") {
    CHECK(cli({"patch", "--model=" + ws.std_model, "--sig=" + sig + ":0.5", "--sig=" + sig + ":0.5", "--out=" + ws.path("a.ckpt")}).code == 0);
    std::ofstream(ws.path("recipe.json")) << "[{\"path\": \"" << sig << "\", \"alpha\": 0.5}, {\"path\": \"" << sig << "\", \"alpha\": 0.5}]";
    CHECK(cli({"patch", "--model=" + ws.std_model, "--recipe=" + ws.path("recipe.json"), "--out=" + ws.path("b.ckpt")}).code == 0);
    CHECK(slurp(ws.path("a.ckpt")) == slurp(ws.path("b.ckpt")));
    CHECK(cli({"patch", "--model=" + ws.std_model, "--sig=" + sig, "--out=" + ws.path("c.ckpt")}).code == 0);
    CHECK(max_relative_diff(read_checkpoint(ws.path("a.ckpt")), read_checkpoint(ws.path("c.ckpt"))) <= 1e-6);
  }
  SUBCASE("fingerprint mismatch prints both digests") {
    const Run r = cli({"patch", "--model=" + ws.other, "--sig=" + sig, "--out=" + ws.path("bad.ckpt")});
    CHECK(r.code == 1);
    CHECK(r.err.find(arch_fingerprint(read_checkpoint(ws.other))) != std::string::npos);
    CHECK(r.err.find(read_signature(sig).arch_fingerprint()) != std::string::npos);
    CHECK_FALSE(fs::exists(ws.path("bad.ckpt")));
  }
  SUBCASE("io and format failures exit 2") {
    CHECK(cli({"patch", "--model=" + ws.path("missing.ckpt"), "--out=" + ws.path("x.ckpt")}).code == 2);
    CHECK(cli({"patch", "--model=" + fixture("header_overrun.ckpt").string(), "--out=" + ws.path("x.ckpt")}).code == 2);
    CHECK(cli({"patch", "--model=" + ws.std_model, "--sig=" + sig + ":abc", "--out=" + ws.path("x.ckpt")}).code == 1);
  }
  SUBCASE("reruns are byte-identical and inputs untouched") {
    const std::string sig_before = slurp(sig);
    CHECK(cli({"patch", "--model=" + ws.std_model, "--sig=" + sig, "--out=" + ws.path("r1.ckpt")}).code == 0);
    CHECK(cli({"patch", "--model=" + ws.std_model, "--sig=" + sig, "--out=" + ws.path("r2.ckpt")}).code == 0);
    CHECK(slurp(ws.path("r1.ckpt")) == slurp(ws.path("r2.ckpt")));
    CHECK(slurp(ws.std_model) == std_before);
    CHECK(slurp(sig) == sig_before);
  }
}

TEST_CASE("sweep, quantize and dequantize") {
  Workspace ws("cli_sweep");
  const auto sig = ws.extract("c.rws");
  const auto outdir = ws.path("sweep");
  CHECK(cli({"sweep", "--model=" + ws.std_model, "--sig=" + sig, "--alphas=0,0.5,1.0", "--outdir=" + outdir}).code == 0);
  CHECK(fs::exists(fs::path(outdir) / "alpha_0.ckpt"));
  CHECK(fs::exists(fs::path(outdir) / "alpha_0.5.ckpt"));
  CHECK(fs::exists(fs::path(outdir) / "manifest.json"));
  CHECK(read_checkpoint((fs::path(outdir) / "alpha_0.ckpt").string()).tensors[0].tensor.identical(read_checkpoint(ws.std_model).tensors[0].tensor));

  CHECK(cli({"quantize", "--sig=" + sig, "--bits=8", "--out=" + ws.path("q.rws")}).code == 0);
  CHECK(read_signature(ws.path("q.rws")).quant_bits() == 8);
  CHECK(cli({"quantize", "--sig=" + sig, "--bits=4", "--out=" + ws.path("q4.rws")}).code == 1);
  CHECK(cli({"quantize", "--sig=" + ws.path("q.rws"), "--bits=8", "--out=" + ws.path("qq.rws")}).code == 1);
  CHECK(cli({"dequantize", "--sig=" + ws.path("q.rws"), "--out=" + ws.path("d.rws")}).code == 0);
  CHECK(read_signature(ws.path("d.rws")).quant_bits() == 0);
}

TEST_CASE("reports") {
  Workspace ws("cli_report");
  const auto a = ws.extract("a.rws", 4);
  const auto b = ws.extract("b.rws", 4);
  const auto list = a + "," + b;
  CHECK(cli({"report", "--kind=norms", "--sigs=" + list, "--std=" + ws.std_model, "--init=" + ws.init, "--out=" + ws.path("n.csv")}).code == 0);
  CHECK(slurp(ws.path("n.csv")).rfind("layer,mean_norm", 0) == 0);
  CHECK(cli({"report", "--kind=layer-cosine", "--layer=conv1", "--sigs=" + list, "--out=" + ws.path("l.csv")}).code == 0);
  CHECK(cli({"report", "--kind=relationship", "--sigs=" + list, "--out=" + ws.path("r.csv")}).code == 0);
  CHECK(cli({"report", "--kind=storage", "--sigs=" + list, "--std=" + ws.std_model, "--out=" + ws.path("s.csv")}).code == 0);
  CHECK(slurp(ws.path("s.csv")).find("ensemble:standard+2full-f32") != std::string::npos);
  CHECK(cli({"report", "--kind=layer-cosine", "--sigs=" + list, "--out=" + ws.path("x.csv")}).code == 1);
  CHECK(cli({"report", "--kind=pie-chart", "--out=" + ws.path("x.csv")}).code == 1);
  CHECK(fs::exists(ws.path("r.csv.manifest.json")));
}

TEST_CASE("train, eval and feature dumps") {
  Workspace ws("cli_train");
  std::ofstream(ws.path("cfg.json")) << R"({"train_size": 100, "epochs": 1})";
  const Run t = cli({"train", "--dataset=synthA", "--init=seed:3", "--config=" + ws.path("cfg.json"), "--corruption=contrast:5",
                     "--out=" + ws.path("m.ckpt")});
  CHECK(t.code == 0);
  CHECK(t.err.find("epoch 1 loss") != std::string::npos);
  const Checkpoint m = read_checkpoint(ws.path("m.ckpt"));
  CHECK(m.meta("train.corruption") == "contrast");
  CHECK(m.meta("train.severity") == "5");

  const Run e = cli({"eval", "--model=" + ws.path("m.ckpt"), "--dataset=synthA", "--n=50"});
  CHECK(e.code == 0);
  const double acc = std::stod(e.out);
  CHECK((acc >= 0.0 && acc <= 1.0));
  CHECK(cli({"eval", "--model=" + ws.path("m.ckpt"), "--dataset=synthA", "--n=50", "--corruption=all:5"}).code == 0);
  CHECK(cli({"eval", "--model=" + ws.path("m.ckpt"), "--dataset=synthA", "--corruption=fog:5"}).code == 1);
  CHECK(cli({"train", "--init=seed:1", "--arch=resnet", "--out=" + ws.path("z.ckpt")}).code == 1);

  std::vector<std::uint8_t> raster(28 * 28, 0);
  for (int i = 0; i < 28; ++i) raster[i * 28 + i] = 255;
  write_pgm(ws.path("in.pgm"), 28, 28, raster);
  CHECK(cli({"dump-features", "--model=" + ws.path("m.ckpt"), "--input=" + ws.path("in.pgm"), "--layers=conv1",
             "--outdir=" + ws.path("maps")}).code == 0);
  CHECK(fs::exists(ws.path("maps/conv1_7.pgm")));
  CHECK(fs::exists(ws.path("maps/manifest.json")));
}
