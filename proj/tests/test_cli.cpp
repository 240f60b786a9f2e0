#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Run alfa(const std::string& args) {
  // ctest runs these in parallel: one scratch dir per test.
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const auto dir = fs::temp_directory_path() / (std::string("alfa_cli_io_") + info->name());
  fs::create_directories(dir);
  const auto out = dir / "stdout", err = dir / "stderr";
  const std::string cmd = std::string("'") + ALFA_CLI + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Last stderr line parsed as JSON.
nlohmann::json error_line(const Run& r) {
  std::istringstream in(r.err);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return nlohmann::json::parse(last);
}

}  // namespace

TEST(Cli, HelpListsSubcommands) {
  auto r = alfa("--help");
  EXPECT_EQ(r.code, 0);
  for (const auto* sub : {"prompts", "adapt", "score", "bank", "eval", "descriptors", "synth"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  auto s = alfa("score --help");
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("--image-bundle"), std::string::npos);
  EXPECT_NE(s.out.find("--jobs"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  auto r = alfa("adapt --prompt-bundle x --out y");
  EXPECT_EQ(r.code, 1);
  auto j = error_line(r);
  EXPECT_EQ(j["error"], "usage");
  EXPECT_NE(j["message"].get<std::string>().find("--image-bundle"), std::string::npos);
  EXPECT_EQ(alfa("frobnicate").code, 1);
  EXPECT_EQ(alfa("").code, 1);
  EXPECT_EQ(alfa("score --prompt-bundle p --image-bundle i --jobs 0").code, 1);
}

TEST(Cli, DataErrorsExitTwo) {
  auto dir = fresh_dir("alfa_cli_bad");
  std::ofstream(dir / "junk.alfb") << "definitely not a bundle";
  auto r = alfa("score --image-bundle '" + (dir / "junk.alfb").string() + "' --prompt-bundle '" +
                (dir / "junk.alfb").string() + "' --out '" + (dir / "r.json").string() + "'");
  EXPECT_EQ(r.code, 2);
  auto j = error_line(r);
  EXPECT_EQ(j["error"], "bad_magic");
  EXPECT_TRUE(j.contains("message"));
  auto missing = alfa("eval --results '" + (dir / "nowhere").string() + "' --out '" + (dir / "e.json").string() + "'");
  EXPECT_EQ(missing.code, 2);
}

TEST(Cli, SynthScoreEvalIsDeterministic) {
  auto dir = fresh_dir("alfa_cli_e2e");
  ASSERT_EQ(alfa("synth --out-dir '" + (dir / "fx").string() + "' --normal 6 --abnormal 6 --dim 16 --grid 8").code, 0);
  std::string reports[2];
  for (int pass = 0; pass < 2; ++pass) {
    const auto out = dir / ("out" + std::to_string(pass));
    const std::string jobs = pass == 0 ? "1" : "3";
    auto s = alfa("score --images '" + (dir / "fx" / "images").string() + "' --prompt-bundle '" +
                  (dir / "fx" / "prompts.alfb").string() + "' --out-dir '" + out.string() + "' --jobs " + jobs);
    ASSERT_EQ(s.code, 0) << s.err;
    auto e = alfa("eval --results '" + out.string() + "' --out '" + (out / "report.json").string() + "' --jobs " + jobs);
    ASSERT_EQ(e.code, 0) << e.err;
    reports[pass] = slurp(out / "report.json");
    EXPECT_EQ(slurp(out / "normal_0000.json"), slurp(dir / "out0" / "normal_0000.json"));
    EXPECT_EQ(slurp(out / "abnormal_0011.map.alfb"), slurp(dir / "out0" / "abnormal_0011.map.alfb"));
  }
  EXPECT_EQ(reports[0], reports[1]);
  auto report = nlohmann::json::parse(reports[0]);
  EXPECT_TRUE(report.contains("classes"));
}

TEST(Cli, SingleImageAdaptAndDescriptors) {
  auto dir = fresh_dir("alfa_cli_single");
  ASSERT_EQ(alfa("synth --out-dir '" + dir.string() + "' --normal 1 --abnormal 1 --dim 16 --grid 6").code, 0);
  const auto img = (dir / "images" / "abnormal_0001.alfb").string();
  const auto prompts = (dir / "prompts.alfb").string();
  auto a = alfa("adapt --image-bundle '" + img + "' --prompt-bundle '" + prompts + "' --out '" + (dir / "a.json").string() + "'");
  ASSERT_EQ(a.code, 0) << a.err;
  auto aj = nlohmann::json::parse(slurp(dir / "a.json"));
  EXPECT_TRUE(aj.contains("prompts"));
  auto s = alfa("score --image-bundle '" + img + "' --prompt-bundle '" + prompts + "' --out '" + (dir / "r.json").string() +
                "' --map-out '" + (dir / "r.map.alfb").string() + "'");
  ASSERT_EQ(s.code, 0) << s.err;
  auto rj = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_GE(rj["score"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "r.map.alfb"));
  auto d = alfa("descriptors --image-bundle '" + img + "' --descriptor-bundle '" + prompts + "' --top 3 --out '" +
                (dir / "d.json").string() + "'");
  ASSERT_EQ(d.code, 0) << d.err;
}

TEST(Cli, BadConfigFileIsADataError) {
  auto dir = fresh_dir("alfa_cli_conf");
  std::ofstream(dir / "bad.conf") << "nonsense_key = 1\n";
  auto r = alfa("--config '" + (dir / "bad.conf").string() + "' synth --out-dir '" + (dir / "fx").string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_line(r)["error"], "parse");
}
