#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dic/bench.hpp"
#include "dic/error.hpp"
#include "dic/latent.hpp"
#include "dic/wav.hpp"

using namespace dic;
namespace fs = std::filesystem;

namespace {

const char* kSample = R"J({
    "000000000000": {
        "editing_prompt": "a live recording of ambient acoustic [violin] music",
        "original_prompt": "a live recording of ambient acoustic [guitar] music",
        "blended_word": "(\"guitar\", \"violin\")",
        "emphasize": "(\"violin\")",
        "audio_path": "wavs/MusicCaps_-4SYC2YgzL8.wav",
        "editing_type_id": "0",
        "editing_instruction": "change the instrument from guitar to violin"
    }
}
)J";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dic_bench_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

BenchManifest synthetic_manifest(int n) {
  BenchManifest m;
  const char* instruments[] = {"guitar", "violin", "piano", "flute", "drums",
                               "cello",  "organ",  "harp",  "bass",  "trumpet"};
  for (int i = 0; i < n; ++i) {
    BenchEntry e;
    const std::string a = instruments[i % 10];
    const std::string b = instruments[(i + 3) % 10];
    e.original_prompt = "ambient [" + a + "] music";
    e.editing_prompt = "ambient [" + b + "] music";
    e.blended_word = {a, b};
    e.emphasize = {b};
    e.audio_path = "clips/" + std::to_string(i) + ".wav";
    e.editing_type_id = i % 10;
    e.editing_instruction = "swap " + a + " for " + b;
    char id[16];
    std::snprintf(id, sizeof id, "%012d", i);
    m.entries.emplace(id, e);
  }
  return m;
}

struct Rig {
  NoiseSchedule schedule = subsample(make_schedule(200, kDefaultBetaStart, kDefaultBetaEnd), 10);
  AnalyticGaussianModel model{schedule, {}};
};

BenchConfig synth_config() {
  BenchConfig c;
  c.latents = LatentSource::synthesize;
  c.seed = 4;
  return c;
}

void write_wav(const fs::path& path, int rate, int channels, const std::vector<double>& samples) {
  std::vector<std::uint8_t> data;
  for (double s : samples) {
    const auto v = static_cast<std::int16_t>(std::lround(s * 32767.0));
    for (int c = 0; c < channels; ++c) {
      data.push_back(static_cast<std::uint8_t>(v & 0xFF));
      data.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    }
  }
  auto u32 = [](std::ofstream& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u16 = [](std::ofstream& o, std::uint16_t v) {
    o.put(static_cast<char>(v & 0xFF));
    o.put(static_cast<char>(v >> 8));
  };
  std::ofstream o(path, std::ios::binary);
  o.write("RIFF", 4);
  u32(o, 36 + static_cast<std::uint32_t>(data.size()));
  o.write("WAVEfmt ", 8);
  u32(o, 16);
  u16(o, 1);
  u16(o, static_cast<std::uint16_t>(channels));
  u32(o, static_cast<std::uint32_t>(rate));
  u32(o, static_cast<std::uint32_t>(rate * channels * 2));
  u16(o, static_cast<std::uint16_t>(channels * 2));
  u16(o, 16);
  o.write("data", 4);
  u32(o, static_cast<std::uint32_t>(data.size()));
  o.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

std::vector<double> chirp(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    s[i] = 0.5 * std::sin(2.0 * std::numbers::pi * (220.0 + 400.0 * t) * t);
  }
  return s;
}

}  // namespace

TEST_CASE("manifest sample parses field-exactly") {
  const BenchManifest m = parse_manifest(kSample);
  REQUIRE(m.entries.size() == 1);
  const BenchEntry& e = m.entries.at("000000000000");
  CHECK(e.editing_prompt == "a live recording of ambient acoustic [violin] music");
  CHECK(e.original_prompt == "a live recording of ambient acoustic [guitar] music");
  CHECK(e.blended_word == std::pair<std::string, std::string>{"guitar", "violin"});
  CHECK(e.emphasize == std::vector<std::string>{"violin"});
  CHECK(e.audio_path == "wavs/MusicCaps_-4SYC2YgzL8.wav");
  CHECK(e.editing_type_id == 0);
  CHECK(e.editing_instruction == "change the instrument from guitar to violin");
  CHECK_FALSE(e.neg_prompt.has_value());
  CHECK(m.warnings.empty());
}

TEST_CASE("manifest serialization is canonical and round-trips") {
  const BenchManifest m = parse_manifest(kSample);
  CHECK(serialize_manifest(m) == kSample);
  CHECK(parse_manifest(serialize_manifest(m)) == m);

  BenchManifest big = synthetic_manifest(12);
  big.entries.begin()->second.neg_prompt = "no drums";
  big.entries.begin()->second.emphasize = {"a \"quoted\" word", "two"};
  const std::string text = serialize_manifest(big);
  CHECK(parse_manifest(text) == big);
  CHECK(serialize_manifest(parse_manifest(text)) == text);
}

TEST_CASE("manifest parser accepts alternate shapes") {
  CHECK(parse_manifest("{}").entries.empty());
  const auto m = parse_manifest(R"J({"b": {"editing_prompt": "x [violin]", "original_prompt": "x [guitar]",
      "blended_word": ["guitar", "violin"], "emphasize": [], "audio_path": "a.wav", "editing_type_id": 9,
      "editing_instruction": "i", "neg_prompt": "guitar"},
    "a": {"editing_prompt": "y", "original_prompt": "z", "blended_word": "('p', 'q')", "emphasize": "()",
      "audio_path": "b.wav", "editing_type_id": " 3 ", "editing_instruction": "j"}})J");
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries.begin()->first == "a");
  CHECK(m.entries.at("b").editing_type_id == 9);
  CHECK(m.entries.at("b").neg_prompt == "guitar");
  CHECK(m.entries.at("a").blended_word.second == "q");
  CHECK(m.entries.at("a").emphasize.empty());
  CHECK(m.warnings.size() == 2);  // p and q are absent from their prompts
}

TEST_CASE("manifest parser errors") {
  const std::string base = R"J({"e1": {"editing_prompt": "x", "original_prompt": "y", "blended_word": "(\"a\", \"b\")",
      "emphasize": "()", "audio_path": "p", "editing_type_id": "TYPE", "editing_instruction": "i"}})J";
  auto with_type = [&](const std::string& t) {
    std::string s = base;
    s.replace(s.find("\"TYPE\""), 6, t);
    return s;
  };
  CHECK_NOTHROW(parse_manifest(with_type("\"7\"")));
  CHECK_THROWS_AS(parse_manifest(with_type("\"10\"")), RangeError);
  CHECK_THROWS_AS(parse_manifest(with_type("-1")), RangeError);
  CHECK_THROWS_AS(parse_manifest(with_type("\"seven\"")), RangeError);
  CHECK_THROWS_AS(parse_manifest(with_type("1.5")), RangeError);

  try {
    parse_manifest(R"J({"e9": {"editing_prompt": "x", "blended_word": "(\"a\", \"b\")", "emphasize": "()",
        "audio_path": "p", "editing_type_id": "1", "editing_instruction": "i"}})J");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("original_prompt") != std::string::npos);
    CHECK(msg.find("e9") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_manifest("[1, 2]"), ParseError);
  CHECK_THROWS_AS(parse_manifest("{\"a\": 1}"), ParseError);
  CHECK_THROWS_AS(parse_manifest("{not json"), ParseError);
  CHECK_THROWS_AS(parse_manifest(R"J({"a": {}, "a": {}})J"), ParseError);
  std::string one_word = with_type("\"1\"");
  const std::string pair_text = R"J("(\"a\", \"b\")")J";
  one_word.replace(one_word.find(pair_text), pair_text.size(), R"J("(\"a\")")J");
  CHECK_THROWS_AS(parse_manifest(one_word), ParseError);
}

TEST_CASE("phrase tuples") {
  CHECK(parse_phrase_tuple(R"J(("guitar", "violin"))J") == std::vector<std::string>{"guitar", "violin"});
  CHECK(parse_phrase_tuple(R"J(("violin"))J") == std::vector<std::string>{"violin"});
  CHECK(parse_phrase_tuple("(electric guitar, drums)") == std::vector<std::string>{"electric guitar", "drums"});
  CHECK(parse_phrase_tuple("()").empty());
  CHECK(format_phrase_tuple({"guitar", "violin"}) == R"J(("guitar", "violin"))J");
  CHECK_THROWS_AS(parse_phrase_tuple(R"J(("open))J"), ParseError);
}

TEST_CASE("run_bench cardinality, order and determinism") {
  Rig rig;
  const BenchManifest one = parse_manifest(kSample);
  const auto rows = run_bench(one, rig.model, rig.model, rig.schedule, synth_config());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == "ddim");
  CHECK(rows[1].method == "dic");
  CHECK(rows[2].method == "sdedit");
  for (const auto& r : rows) {
    CHECK(r.entry_id == "000000000000");
    CHECK(std::isfinite(r.structure_distance_e3));
    CHECK(std::isfinite(r.mse));
    CHECK(std::isfinite(r.edit_fidelity_proxy));
  }
  const auto again = run_bench(one, rig.model, rig.model, rig.schedule, synth_config());
  CHECK(report_csv(rows) == report_csv(again));
  CHECK(report_json(rows) == report_json(again));
  CHECK(report_csv(rows).rfind("entry_id,editing_type_id,method,structure_distance_e3,mse,edit_fidelity_proxy\n", 0) ==
        0);
}

TEST_CASE("run_bench aggregates by editing type") {
  Rig rig;
  const BenchManifest m = synthetic_manifest(10);
  BenchConfig cfg = synth_config();
  cfg.methods = {"sdedit", "dic"};
  const auto rows = run_bench(m, rig.model, rig.model, rig.schedule, cfg);
  CHECK(rows.size() == 20);
  const auto agg = aggregate_by_type(rows);
  CHECK(agg.size() == 20);
  std::size_t total = 0;
  for (const auto& g : agg) total += g.count;
  CHECK(total == rows.size());

  cfg.methods = {"dic"};
  const auto dic_only = aggregate_by_type(run_bench(m, rig.model, rig.model, rig.schedule, cfg));
  CHECK(dic_only.size() == 10);

  cfg.jobs = 3;
  cfg.methods = {"sdedit", "dic"};
  CHECK(report_csv(run_bench(m, rig.model, rig.model, rig.schedule, cfg)) == report_csv(rows));

  cfg.methods = {"magic"};
  CHECK_THROWS_AS(run_bench(m, rig.model, rig.model, rig.schedule, cfg), ConfigError);
}

TEST_CASE("run_bench with the attention model") {
  Rig rig;
  TinyModelConfig tc;
  const TinyAttentionModel tiny(tc);
  BenchConfig cfg = synth_config();
  cfg.edit.control = ControlSchedule::defaults(10, tiny.layers());
  cfg.edit.blend = BlendWords{};
  const auto rows = run_bench(synthetic_manifest(2), tiny, rig.model, rig.schedule, cfg);
  CHECK(rows.size() == 6);
  for (const auto& r : rows) CHECK(std::isfinite(r.mse));
}

TEST_CASE("latent files are resolved next to the manifest") {
  Rig rig;
  const auto dir = scratch("files");
  const BenchManifest m = synthetic_manifest(3);
  BenchConfig cfg;
  cfg.base_dir = dir;
  cfg.methods = {"ddim"};
  try {
    run_bench(m, rig.model, rig.model, rig.schedule, cfg);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0.dicl") != std::string::npos);
    CHECK(msg.find("2.dicl") != std::string::npos);
  }
  fs::create_directories(dir / "clips");
  for (const auto& [id, e] : m.entries) {
    const Tensor z = synthesize_latent(id, encode_prompt(e.original_prompt, 0), rig.model, 4);
    write_dicl((dir / e.audio_path).replace_extension(".dicl"), z);
  }
  const auto from_files = run_bench(m, rig.model, rig.model, rig.schedule, cfg);
  BenchConfig synth = synth_config();
  synth.methods = {"ddim"};
  CHECK(report_csv(from_files) == report_csv(run_bench(m, rig.model, rig.model, rig.schedule, synth)));
  fs::remove_all(dir);
}

TEST_CASE("wav frontend") {
  const auto dir = scratch("wav");
  write_wav(dir / "tone.wav", 16000, 1, chirp(16000));
  const WavData wav = read_wav(dir / "tone.wav");
  CHECK(wav.sample_rate == 16000);
  CHECK(wav.samples.size() == 16000);

  const Tensor mel = log_mel(wav.samples);
  CHECK(mel.rows() == 64);
  CHECK(mel.cols() == 1 + (16000 - 1024) / 160);

  const Tensor z = wav_to_latent(wav);
  CHECK(z.shape() == Shape{1, 16, 64});
  double mean = 0.0, var = 0.0;
  for (double v : z.data()) mean += v;
  mean /= z.size();
  for (double v : z.data()) var += (v - mean) * (v - mean);
  var /= z.size();
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-9);

  // Short clips tile their frames to fill the latent.
  write_wav(dir / "short.wav", 16000, 1, chirp(4000));
  CHECK(wav_to_latent(read_wav(dir / "short.wav")).shape() == Shape{1, 16, 64});

  write_wav(dir / "stereo.wav", 16000, 2, chirp(2000));
  CHECK_THROWS_AS(read_wav(dir / "stereo.wav"), IoError);
  write_wav(dir / "fast.wav", 44100, 1, chirp(2000));
  CHECK_THROWS_AS(wav_to_latent(read_wav(dir / "fast.wav")), IoError);
  CHECK_THROWS_AS(read_wav(dir / "absent.wav"), IoError);

  Rig rig;
  BenchManifest m = synthetic_manifest(1);
  m.entries.begin()->second.audio_path = "tone.wav";
  BenchConfig cfg;
  cfg.latents = LatentSource::wav;
  cfg.base_dir = dir;
  cfg.methods = {"dic"};
  CHECK(run_bench(m, rig.model, rig.model, rig.schedule, cfg).size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("report writers") {
  std::vector<MetricReport> rows{{"x,1", 2, "dic", 1.5, 0.25, -0.5}};
  CHECK(report_csv(rows) ==
        "entry_id,editing_type_id,method,structure_distance_e3,mse,edit_fidelity_proxy\n\"x,1\",2,dic,1.5,0.25,-0.5\n");
  const std::string json = report_json(rows);
  CHECK(json.find("\"structure_distance_e3\": 1.5") != std::string::npos);
  const auto agg = aggregate_by_type(rows);
  CHECK(aggregate_csv(agg) ==
        "editing_type_id,method,count,structure_distance_e3,mse,edit_fidelity_proxy\n2,dic,1,1.5,0.25,-0.5\n");
  CHECK(aggregate_json(agg).find("\"count\": 1") != std::string::npos);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-0.0) == "0");
}
