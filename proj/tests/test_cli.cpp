#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "voxprompt/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Dir {
  fs::path path;
  explicit Dir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Dir() { fs::remove_all(path); }
};

int run(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = std::string(VOXPROMPT_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string text;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) text.append(buf, n);
  const int status = pclose(p);
  if (out) *out = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<json> lines(const fs::path& p) {
  std::vector<json> v;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) v.push_back(json::parse(l));
  return v;
}

}  // namespace

TEST_CASE("cli: help and usage errors") {
  std::string out;
  CHECK(run("--help", &out) == 0);
  CHECK(out.find("gen-data") != std::string::npos);
  CHECK(run("train --help", &out) == 0);
  for (const char* flag : {"--data", "--steps", "--batch-size", "--lr", "--edit-steps", "--no-mask-prompt",
                           "--no-edit-training", "--resume", "--metrics", "--config"})
    CHECK(out.find(flag) != std::string::npos);
  CHECK(run("gen-data --out x --frobnicate") == 2);
  CHECK(run("") == 2);
  CHECK(run("nonsense") == 2);
  CHECK(run("--version", &out) == 0);
  CHECK(out.find("0.1.0") != std::string::npos);
}

TEST_CASE("cli: gen-data, eval, infer") {
  Dir d("vp_cli_data");
  const auto data = (d.path / "a").string();
  CHECK(run("gen-data --out " + data + " --volumes 2 --seed 4") == 0);
  int n = 0;
  for (const auto& e : fs::directory_iterator(data)) n += e.is_regular_file();
  CHECK(n == 5);
  CHECK(run("gen-data --out " + (d.path / "b").string() + " --volumes 2 --seed 4") == 0);
  for (const char* f : {"vol_000.nii", "lab_001.nii", "manifest.json"})
    CHECK(slurp(fs::path(data) / f) == slurp(d.path / "b" / f));
  CHECK(run("gen-data --out " + (d.path / "c").string() + " --volumes 1 --dims 4,8,8") == 1);

  const auto m = data + "/manifest.json";
  const auto rep = (d.path / "r.json").string();
  CHECK(run("eval --oracle --data " + m + " --report " + rep + " --csv " + (d.path / "r.csv").string() +
            " --min-dice 0.999") == 0);
  const auto rj = json::parse(slurp(rep));
  CHECK(rj["summary"]["overall"]["mean_dice"] == 1.0);
  CHECK(rj.contains("runtime_s"));
  CHECK(slurp(d.path / "r.csv").rfind("volume,class_id,dice,oracle_dice,prompts,edits_used\n", 0) == 0);

  // Edits 0 is the default path.
  CHECK(run("eval --oracle --no-runtime --data " + m + " --report " + (d.path / "e0.json").string()) == 0);
  CHECK(run("eval --oracle --no-runtime --edits 0 --data " + m + " --report " + (d.path / "e1.json").string()) == 0);
  CHECK(slurp(d.path / "e0.json") == slurp(d.path / "e1.json"));

  CHECK(run("eval --oracle --protocol slice --mode bbox --data " + m + " --report " + rep) == 2);
  CHECK(run("eval --data " + m + " --report " + rep) == 2);
  CHECK(run("eval --oracle --data " + (d.path / "missing.json").string() + " --report " + rep) == 1);

  // Train a tiny model and run infer with it.
  const auto ck = (d.path / "ck.bin").string();
  const auto metrics = (d.path / "m.jsonl").string();
  std::ofstream(d.path / "t.toml") << "steps = 2\nbatch_size = 2\nimage_size = 32\nwidths = [4, 4, 8, 8]\n"
                                      "no_augment = true\nno_prefetch = true\n";
  CHECK(run("train --data " + m + " --out " + ck + " --metrics " + metrics + " --no-edit-training --config " +
            (d.path / "t.toml").string()) == 0);
  auto ms = lines(metrics);
  REQUIRE(ms.size() == 2);
  CHECK_FALSE(ms[0].contains("dice_after_edits"));
  CHECK(run("train --data " + m + " --out " + ck + " --metrics " + metrics + " --steps 3 --resume " + ck +
            " --config " + (d.path / "t.toml").string()) == 0);
  ms = lines(metrics);
  REQUIRE(ms.size() == 3);
  CHECK(ms[2]["step"] == 2);
  CHECK(ms[2].contains("dice_after_edits"));

  std::ofstream(d.path / "bad.toml") << "stepz = 3\n";
  CHECK(run("train --data " + m + " --out " + ck + " --config " + (d.path / "bad.toml").string()) == 2);

  std::ofstream(d.path / "p.json") << R"({"box": [15, 15, 45, 45]})";
  const auto out = (d.path / "o.nii").string();
  CHECK(run("infer --ckpt " + ck + " --volume " + data + "/vol_000.nii --slice 12 --boundaries 12,12 --prompt-json " +
            (d.path / "p.json").string() + " --out " + out) == 0);
  const auto vol = voxprompt::parse_nifti(voxprompt::read_file(data + "/vol_000.nii"));
  const auto lab = voxprompt::parse_nifti_labels(voxprompt::read_file(out));
  CHECK(lab.dims() == vol.volume.dims());
  for (int z = 0; z < lab.dims().z; ++z)
    if (z != 12)
      for (int y = 0; y < lab.dims().y; ++y)
        for (int x = 0; x < lab.dims().x; ++x) CHECK(lab(z, y, x) == 0);
  const auto out2 = (d.path / "o2.nii").string();
  CHECK(run("infer --ckpt " + ck + " --volume " + data + "/vol_000.nii --slice 12 --boundaries 12,12 --prompt-json " +
            (d.path / "p.json").string() + " --out " + out2) == 0);
  CHECK(slurp(out) == slurp(out2));
  CHECK(run("infer --ckpt " + ck + " --volume " + data + "/vol_000.nii --slice 2 --boundaries 12,14 --prompt-json " +
            (d.path / "p.json").string() + " --out " + out2) == 2);
}

TEST_CASE("cli: serve prints an ephemeral port and drains on SIGTERM") {
  Dir d("vp_cli_serve");
  const auto data = (d.path / "a").string();
  REQUIRE(run("gen-data --out " + data + " --volumes 1") == 0);
  const auto ck = (d.path / "ck.bin").string();
  std::ofstream(d.path / "t.toml") << "steps = 1\nbatch_size = 1\nimage_size = 32\nwidths = [2, 2, 2, 2]\n";
  REQUIRE(run("train --data " + data + "/manifest.json --out " + ck + " --config " + (d.path / "t.toml").string() +
              " --metrics " + (d.path / "m.jsonl").string()) == 0);

  int fds[2];
  REQUIRE(pipe(fds) == 0);
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    execl(VOXPROMPT_CLI, VOXPROMPT_CLI, "serve", "--ckpt", ck.c_str(), "--addr", "127.0.0.1:0", nullptr);
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  char ch;
  while (read(fds[0], &ch, 1) == 1 && ch != '\n') line += ch;
  close(fds[0]);
  const auto colon = line.rfind(':');
  REQUIRE(colon != std::string::npos);
  const int port = std::stoi(line.substr(colon + 1));
  CHECK(port > 0);
  httplib::Client c("127.0.0.1", port);
  auto h = c.Get("/health");
  REQUIRE(h);
  CHECK(json::parse(h->body)["version"] == "0.1.0");
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
