#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "edgeseg/canny.hpp"
#include "edgeseg/config.hpp"
#include "edgeseg/png_io.hpp"
#include "edgeseg/synth.hpp"

using namespace edgeseg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "edgeseg");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Scratch directory with a tiny config and a small dataset.
struct Workspace {
  fs::path dir;
  Workspace() : dir(fs::temp_directory_path() / "edgeseg_cli_test") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    RunConfig cfg;
    cfg.model = ModelConfig::tiny();
    cfg.synth.height = cfg.synth.width = 32;
    cfg.train.crop_size = 32;
    cfg.train.max_steps = 3;
    cfg.train.checkpoint_every = 2;
    std::ofstream(dir / "config.json") << to_json(cfg).dump(2);
    REQUIRE(run_cli({"synth", "--config", config(), "--out", path("data"), "--count", "3"}).code == 0);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string config() const { return path("config.json"); }
};

}  // namespace

TEST_CASE("help lists every subcommand and flag") {
  const Result top = run_cli({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"synth", "train", "eval", "segment", "edges", "cluster", "ablate", "sweep"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  const Result all = run_cli({"--help-all"});
  for (const char* flag : {"--config", "--set", "--seed", "--data", "--out", "--resume", "--checkpoint", "--json",
                           "--band-radius", "--image", "--intermediates", "--low", "--high", "--stage", "--k",
                           "--train", "--test", "--seeds", "--lambdas", "--count", "--first-index"}) {
    CHECK_MESSAGE(all.out.find(flag) != std::string::npos, flag);
  }
  const Result edges = run_cli({"edges", "--help"});
  CHECK(edges.out.find("[100]") != std::string::npos);
  CHECK(edges.out.find("[200]") != std::string::npos);
  CHECK(run_cli({"cluster", "--help"}).out.find("[3]") != std::string::npos);
}

TEST_CASE("argument and config errors exit with the config code") {
  CHECK(run_cli({}).code == cli::kConfigError);
  CHECK(run_cli({"frobnicate"}).code == cli::kConfigError);
  CHECK(run_cli({"train", "--data", "x"}).code == cli::kConfigError);
  const Result bad_key = run_cli({"synth", "--out", "x", "--set", "train.learning_rat=1"});
  CHECK(bad_key.code == cli::kConfigError);
  CHECK(bad_key.err.find("learning_rate") != std::string::npos);
  CHECK(run_cli({"synth", "--out", "x", "--set", "train.batch_size=0"}).code == cli::kConfigError);
  CHECK(run_cli({"synth", "--out", "x", "--set", "nonsense"}).code == cli::kConfigError);
  CHECK(run_cli({"cluster", "--checkpoint", "c", "--image", "i", "--out", "o", "--stage", "5"}).code ==
        cli::kConfigError);
}

TEST_CASE("missing files exit with the io code") {
  CHECK(run_cli({"eval", "--checkpoint", "/nonexistent/c.bin", "--data", "/nonexistent"}).code == cli::kIoError);
  CHECK(run_cli({"edges", "--image", "/nonexistent.png", "--out", "/tmp/x.png"}).code == cli::kIoError);
  CHECK(run_cli({"synth", "--out", "x", "--config", "/nonexistent.json"}).code == cli::kIoError);
}

TEST_CASE("edges uses 100 and 200 by default") {
  Workspace ws;
  const std::string img = ws.path("data/images/000000.png");
  const Result r = run_cli({"edges", "--image", img, "--out", ws.path("e.png")});
  CHECK(r.code == 0);
  CHECK(r.out.find("low 100, high 200") != std::string::npos);
  const EdgeMap expected = canny(load_png(img), 100, 200);
  const ImageU8 written = load_png(ws.path("e.png"));
  for (std::size_t i = 0; i < expected.values.size(); ++i) CHECK(written.data[i] == (expected.values[i] > 0 ? 255 : 0));
}

TEST_CASE("synth, train, eval, segment and cluster end to end") {
  Workspace ws;
  const Result effective = run_cli({"synth", "--config", ws.config(), "--out", ws.path("d2"), "--count", "1",
                                    "--seed", "5", "--set", "synth.max_glyphs=4"});
  CHECK(effective.err.find("effective config: ") != std::string::npos);
  CHECK(effective.err.find("\"max_glyphs\":4") != std::string::npos);
  CHECK(effective.err.find("\"seed\":5") != std::string::npos);

  const Result t1 = run_cli({"train", "--config", ws.config(), "--data", ws.path("data"), "--out", ws.path("run1")});
  REQUIRE(t1.code == 0);
  for (const char* f : {"config.json", "train.log", "summary.json", "checkpoint.bin", "checkpoint_000002.bin"}) {
    CHECK_MESSAGE(fs::exists(ws.dir / "run1" / f), f);
  }
  std::istringstream log(slurp(ws.dir / "run1" / "train.log"));
  std::size_t step = 0, lines = 0;
  double seg, det, total;
  while (log >> step >> seg >> det >> total) {
    ++lines;
    CHECK(step == lines);
    CHECK(total == doctest::Approx(seg + det));
  }
  CHECK(lines == 3);

  // Same seed, same bytes.
  REQUIRE(run_cli({"train", "--config", ws.config(), "--data", ws.path("data"), "--out", ws.path("run2")}).code == 0);
  CHECK(slurp(ws.dir / "run1" / "train.log") == slurp(ws.dir / "run2" / "train.log"));
  CHECK(slurp(ws.dir / "run1" / "checkpoint.bin") == slurp(ws.dir / "run2" / "checkpoint.bin"));

  // Resume from step 2 and finish: identical final checkpoint.
  fs::create_directories(ws.dir / "run3");
  std::string head = slurp(ws.dir / "run1" / "train.log");
  head = head.substr(0, head.find('\n', head.find('\n') + 1) + 1);
  std::ofstream(ws.dir / "run3" / "train.log") << head;
  REQUIRE(run_cli({"train", "--data", ws.path("data"), "--out", ws.path("run3"), "--resume",
                   ws.path("run1/checkpoint_000002.bin")})
              .code == 0);
  CHECK(slurp(ws.dir / "run3" / "train.log") == slurp(ws.dir / "run1" / "train.log"));
  CHECK(slurp(ws.dir / "run3" / "checkpoint.bin") == slurp(ws.dir / "run1" / "checkpoint.bin"));

  const Result ev = run_cli({"eval", "--checkpoint", ws.path("run1/checkpoint.bin"), "--data", ws.path("data"),
                             "--json", ws.path("eval.json")});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("fgIoU=") != std::string::npos);
  CHECK(ev.out.find("edge_fgIoU=") != std::string::npos);
  CHECK(slurp(ws.dir / "eval.json").find("\"fgIoU\"") != std::string::npos);

  const Result seg_r = run_cli({"segment", "--checkpoint", ws.path("run1/checkpoint.bin"), "--image",
                                ws.path("data/images/000001.png"), "--out", ws.path("mask.png"), "--intermediates",
                                ws.path("inter")});
  CHECK(seg_r.code == 0);
  CHECK(load_mask(ws.path("mask.png")).height == 32);
  for (const char* f : {"edges_raw.png", "area.png", "edges_filtered.png"}) CHECK(fs::exists(ws.dir / "inter" / f));

  const Result cl = run_cli({"cluster", "--checkpoint", ws.path("run1/checkpoint.bin"), "--image",
                             ws.path("data/images/000001.png"), "--out", ws.path("clusters.png"), "--stage", "1"});
  CHECK(cl.code == 0);
  CHECK(cl.out.find("k=3") != std::string::npos);
  const ImageU8 labels = load_png(ws.path("clusters.png"));
  for (auto v : labels.data) CHECK((v == 0 || v == 127 || v == 255));
}

TEST_CASE("divergent training exits with the numeric code") {
  Workspace ws;
  const Result r = run_cli({"train", "--config", ws.config(), "--data", ws.path("data"), "--out", ws.path("boom"),
                            "--set", "train.learning_rate=1e30", "--set", "train.max_steps=5"});
  CHECK(r.code == cli::kNumericError);
  CHECK(r.err.find("non-finite") != std::string::npos);
}

TEST_CASE("sweep and ablate write their tables") {
  Workspace ws;
  const std::vector<std::string> common{"--config", ws.config(), "--set", "train.max_steps=1",
                                        "--train", ws.path("data"), "--test", ws.path("data")};
  std::vector<std::string> sweep{"sweep", "--out", ws.path("sw"), "--lambdas", "0.1,1"};
  sweep.insert(sweep.end(), common.begin(), common.end());
  const Result s = run_cli(sweep);
  CHECK(s.code == 0);
  CHECK(fs::exists(ws.dir / "sw" / "sweep.json"));
  CHECK(slurp(ws.dir / "sw" / "sweep.txt") == s.out);

  std::vector<std::string> ablate{"ablate", "--out", ws.path("ab"), "--seeds", "3"};
  ablate.insert(ablate.end(), common.begin(), common.end());
  const Result a = run_cli(ablate);
  CHECK(a.code == 0);
  CHECK(fs::exists(ws.dir / "ab" / "ablation.json"));
  CHECK(slurp(ws.dir / "ab" / "ablation.txt") == a.out);
}
