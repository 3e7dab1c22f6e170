#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
  json j() const { return json::parse(out); }
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "inkmark");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = inkmark::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const auto d = fs::temp_directory_path() / "inkmark_cli_tests";
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  const auto r = run({"keygen"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--provider"), std::string::npos);
  EXPECT_EQ(run({"--format", "yaml", "keygen", "--provider", "p"}).code, 2);
  EXPECT_EQ(run({"attack", "--kind", "teleport"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, SeededKeygenIsDeterministic) {
  const auto a = run({"--seed", "5", "keygen", "--provider", "p"});
  const auto b = run({"--seed", "5", "keygen", "--provider", "p"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, run({"--seed", "6", "keygen", "--provider", "p"}).out);
  EXPECT_EQ(a.j().at("secret_hex").get<std::string>().size(), 64U);
  const auto text = run({"--seed", "5", "--format", "text", "keygen", "--provider", "p"});
  EXPECT_NE(text.out.find("provider_id: p\n"), std::string::npos);
}

TEST(Cli, DomainErrorsExitOne) {
  const auto dir = workdir();
  write(dir / "bad_key.json", R"({"provider_id":"p","scheme_id":"redgreen","created_at":"x","secret_hex":"abcd"})");
  write(dir / "ids.txt", "1 2 3\n");
  const auto r = run({"detect", "--key", (dir / "bad_key.json").string(), "--vocab-size", "10", "--input",
                      (dir / "ids.txt").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("secret"), std::string::npos) << r.err;
  EXPECT_EQ(run({"detect", "--key", (dir / "missing.json").string(), "--vocab-size", "10"}).code, 1);
  write(dir / "junk.json", "{not json");
  EXPECT_EQ(run({"detect", "--key", (dir / "junk.json").string(), "--vocab-size", "10"}).code, 1);
  EXPECT_EQ(run({"train", (dir / "no_such_dir").string(), "--out", (dir / "m.json").string()}).code, 1);
  EXPECT_EQ(run({"entropy", "--distribution", "0.5,0.6"}).code, 1);
}

TEST(Cli, GenerateDetectRoundTrip) {
  const auto dir = workdir();
  const auto key = (dir / "rg.json").string();
  ASSERT_EQ(run({"--seed", "1", "keygen", "--provider", "p", "--out", key}).code, 0);
  const auto wm = (dir / "wm.txt").string();
  const auto g = run({"--seed", "2", "generate", "--peak-mass", "0.3", "--vocab-size", "1000", "--length", "100",
                      "--scheme", "redgreen", "--hard", "--key", key, "--out", wm});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_EQ(g.out, run({"--seed", "2", "generate", "--peak-mass", "0.3", "--vocab-size", "1000", "--length", "100",
                        "--scheme", "redgreen", "--hard", "--key", key, "--out", wm})
                       .out);
  const auto d = run({"detect", "--key", key, "--vocab-size", "1000", "--input", wm});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_TRUE(d.j().at("verdict").get<bool>());
  EXPECT_EQ(d.j().at("params").at("gamma"), 0.5);

  const auto plain = (dir / "plain.txt").string();
  ASSERT_EQ(run({"--seed", "3", "generate", "--peak-mass", "0.3", "--vocab-size", "1000", "--length", "100", "--out",
                 plain})
                .code,
            0);
  EXPECT_FALSE(run({"detect", "--key", key, "--vocab-size", "1000", "--input", plain}).j().at("verdict").get<bool>());
  // Declared scheme must match the key.
  EXPECT_EQ(run({"detect", "--key", key, "--scheme", "binary", "--vocab-size", "1000", "--input", wm}).code, 1);
}

TEST(Cli, TrainOnADirectoryAndGenerateText) {
  const auto dir = workdir() / "corpus";
  fs::remove_all(dir);
  fs::create_directories(dir / "sub");
  write(dir / "a.txt", "the cat sat on the mat .");
  write(dir / "sub" / "b.txt", "the dog sat on the log .");
  const auto model = (workdir() / "model.json").string();
  const auto t = run({"train", dir.string(), "--order", "2", "--out", model});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(t.j().at("documents"), 2);
  EXPECT_EQ(t.j().at("order"), 2);
  const auto g = run({"--seed", "4", "generate", "--model", model, "--length", "12"});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_TRUE(g.j().at("text").is_string());
  EXPECT_LE(g.j().at("tokens").size(), 12U);
}

TEST(Cli, EntropyEstimators) {
  const auto e = run({"entropy", "--distribution", "0.5,0.25,0.25", "--modulus", "2"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.j().at("estimator"), "exact");
  const auto f = workdir() / "aaa.txt";
  write(f, std::string(5000, 'a'));
  const auto m = run({"entropy", f.string()});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(m.j().at("estimator"), "matchlength");
  EXPECT_LT(m.j().at("value").get<double>(), 0.1);
}

TEST(Cli, AttacksReportBeforeAndAfter) {
  const auto dir = workdir();
  const auto key = (dir / "rg2.json").string();
  ASSERT_EQ(run({"--seed", "9", "keygen", "--provider", "p", "--out", key}).code, 0);
  const auto emoji = run({"--seed", "1", "attack", "--kind", "emoji", "--peak-mass", "0.001", "--vocab-size", "1000",
                          "--key", key, "--hard", "--separator", "999", "--length", "150"});
  ASSERT_EQ(emoji.code, 0) << emoji.err;
  EXPECT_TRUE(emoji.j().at("before").at("verdict").get<bool>());
  EXPECT_FALSE(emoji.j().at("after").at("verdict").get<bool>());
  EXPECT_EQ(run({"attack", "--kind", "emoji", "--peak-mass", "0.1", "--vocab-size", "100", "--key", key}).code, 1);
  EXPECT_EQ(run({"attack", "--kind", "prefix", "--peak-mass", "0.1", "--vocab-size", "100"}).code, 1);

  const auto bkey = (dir / "bin.json").string();
  ASSERT_EQ(run({"--seed", "9", "keygen", "--provider", "b", "--scheme", "binary", "--out", bkey}).code, 0);
  const auto prefix = run({"--seed", "2", "attack", "--kind", "prefix", "--peak-mass", "0.05", "--vocab-size", "256",
                           "--key", bkey, "--lambda", "16", "--length", "60"});
  ASSERT_EQ(prefix.code, 0) << prefix.err;
  EXPECT_EQ(prefix.j().at("invocation_ratio"), "60:1");
  EXPECT_TRUE(prefix.j().at("before").at("verdict").get<bool>());
  EXPECT_FALSE(prefix.j().at("after").at("verdict").get<bool>());
}
