#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pdspeech/audio.hpp"
#include "pdspeech/errors.hpp"
#include "pdspeech/rng.hpp"
#include "oracles.hpp"

using namespace pdspeech;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

fs::path test_dir() {
  const fs::path d = fs::temp_directory_path() / "pdaudio_tests";
  fs::create_directories(d);
  return d;
}

// Byte-level WAV builder independent of write_wav, so the reader is checked
// against the file format itself rather than against our own writer.
void push_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

void push_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void push_tag(std::vector<unsigned char>& b, const char* t) { b.insert(b.end(), t, t + 4); }

std::vector<unsigned char> wav_bytes(std::uint16_t fmt, std::uint16_t channels, std::uint32_t rate,
                                     std::uint16_t bits, const std::vector<unsigned char>& payload,
                                     const std::vector<unsigned char>& extra_chunk = {}) {
  std::vector<unsigned char> b;
  push_tag(b, "RIFF");
  push_u32(b, static_cast<std::uint32_t>(4 + extra_chunk.size() + 24 + 8 + payload.size()));
  push_tag(b, "WAVE");
  b.insert(b.end(), extra_chunk.begin(), extra_chunk.end());
  push_tag(b, "fmt ");
  push_u32(b, 16);
  push_u16(b, fmt);
  push_u16(b, channels);
  push_u32(b, rate);
  push_u32(b, rate * channels * bits / 8);
  push_u16(b, static_cast<std::uint16_t>(channels * bits / 8));
  push_u16(b, bits);
  push_tag(b, "data");
  push_u32(b, static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::vector<unsigned char> pcm16_payload(const std::vector<std::int16_t>& samples) {
  std::vector<unsigned char> p;
  for (std::int16_t s : samples) push_u16(p, static_cast<std::uint16_t>(s));
  return p;
}

std::vector<unsigned char> float32_payload(const std::vector<float>& samples) {
  std::vector<unsigned char> p;
  for (float s : samples) {
    std::uint32_t bits;
    std::memcpy(&bits, &s, 4);
    push_u32(p, bits);
  }
  return p;
}

std::string write_file(const std::string& name, const std::vector<unsigned char>& bytes) {
  const fs::path p = test_dir() / name;
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  f.close();
  return p.string();
}

template <typename F>
Err thrown_code(F&& f) {
  try {
    f();
  } catch (const PdError& e) {
    return e.code();
  }
  FAIL("expected a PdError");
  return Err::MissingFile;
}

std::vector<double> sine(std::size_t n, double freq, int rate, double amp = 1.0) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / rate);
  }
  return s;
}

}  // namespace

TEST_CASE("silence round trips exactly through the wav writer") {
  const std::string path = (test_dir() / "zeros.wav").string();
  write_wav(path, std::vector<double>(16000, 0.0), 16000);
  const AudioRecording rec = read_wav(path);
  CHECK(rec.sample_rate == 16000);
  CHECK(rec.samples.size() == 16000);
  CHECK(rec.source_path == path);
  for (double s : rec.samples) CHECK(s == 0.0);
}

TEST_CASE("pcm16 sine decodes to the quantized values") {
  const int rate = 16000;
  const std::size_t n = 1600;
  std::vector<std::int16_t> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::sin(2.0 * kPi * 440.0 * static_cast<double>(i) / rate);
    q[i] = static_cast<std::int16_t>(
        std::clamp(std::llround(x * 32768.0), -32768LL, 32767LL));
  }
  const std::string path = write_file("sine440.wav", wav_bytes(1, 1, rate, 16, pcm16_payload(q)));
  const AudioRecording rec = read_wav(path);
  REQUIRE(rec.samples.size() == n);
  CHECK(rec.sample_rate == rate);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(rec.samples[i] == q[i] / 32768.0);  // exact integer scaling
    const double truth = std::sin(2.0 * kPi * 440.0 * static_cast<double>(i) / rate);
    CHECK(std::fabs(rec.samples[i] - truth) <= 1.0 / 32768.0);
  }
}

TEST_CASE("stereo channels average to mono") {
  const std::vector<std::int16_t> left{1000, -2000, 3000, 0};
  const std::vector<std::int16_t> right{3000, 2000, -1000, -4000};
  std::vector<std::int16_t> interleaved;
  for (std::size_t i = 0; i < left.size(); ++i) {
    interleaved.push_back(left[i]);
    interleaved.push_back(right[i]);
  }
  const std::string path =
      write_file("stereo.wav", wav_bytes(1, 2, 8000, 16, pcm16_payload(interleaved)));
  const AudioRecording rec = read_wav(path);
  REQUIRE(rec.samples.size() == left.size());
  for (std::size_t i = 0; i < left.size(); ++i) {
    CHECK(rec.samples[i] == doctest::Approx((left[i] + right[i]) / 65536.0).epsilon(1e-12));
  }

  // Identical channels must reproduce the mono signal exactly.
  std::vector<std::int16_t> dup;
  for (std::int16_t s : left) {
    dup.push_back(s);
    dup.push_back(s);
  }
  const std::string path2 = write_file("dup.wav", wav_bytes(1, 2, 8000, 16, pcm16_payload(dup)));
  const AudioRecording rec2 = read_wav(path2);
  for (std::size_t i = 0; i < left.size(); ++i) {
    CHECK(rec2.samples[i] == doctest::Approx(left[i] / 32768.0).epsilon(1e-12));
  }
}

TEST_CASE("float32 payload decodes and clips to unit range") {
  const std::vector<float> vals{0.25f, -0.5f, 1.5f, -2.0f, 0.0f};
  const std::string path =
      write_file("f32.wav", wav_bytes(3, 1, 44100, 32, float32_payload(vals)));
  const AudioRecording rec = read_wav(path);
  REQUIRE(rec.samples.size() == vals.size());
  CHECK(rec.sample_rate == 44100);
  CHECK(rec.samples[0] == doctest::Approx(0.25));
  CHECK(rec.samples[1] == doctest::Approx(-0.5));
  CHECK(rec.samples[2] == 1.0);
  CHECK(rec.samples[3] == -1.0);
  CHECK(rec.samples[4] == 0.0);
}

TEST_CASE("unknown riff chunks are skipped with word alignment") {
  std::vector<unsigned char> extra;
  push_tag(extra, "LIST");
  push_u32(extra, 3);  // odd size forces a pad byte
  extra.push_back('a');
  extra.push_back('b');
  extra.push_back('c');
  extra.push_back(0);
  const std::vector<std::int16_t> q{100, -100, 200};
  const std::string path =
      write_file("extra.wav", wav_bytes(1, 1, 8000, 16, pcm16_payload(q), extra));
  const AudioRecording rec = read_wav(path);
  REQUIRE(rec.samples.size() == 3);
  CHECK(rec.samples[2] == doctest::Approx(200 / 32768.0));
}

TEST_CASE("malformed wav files are rejected") {
  CHECK(thrown_code([] { read_wav((test_dir() / "nope.wav").string()); }) == Err::MissingFile);

  auto good = wav_bytes(1, 1, 8000, 16, pcm16_payload({1, 2, 3, 4}));

  auto bad_magic = good;
  bad_magic[3] = 'X';
  CHECK(thrown_code([&] { read_wav(write_file("badmagic.wav", bad_magic)); }) ==
        Err::MalformedRiff);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);  // data chunk now longer than the file
  CHECK(thrown_code([&] { read_wav(write_file("trunc.wav", truncated)); }) == Err::MalformedRiff);

  std::vector<unsigned char> no_data;
  push_tag(no_data, "RIFF");
  push_u32(no_data, 4);
  push_tag(no_data, "WAVE");
  CHECK(thrown_code([&] { read_wav(write_file("nodata.wav", no_data)); }) == Err::MalformedRiff);

  CHECK(thrown_code([&] {
          read_wav(write_file("rate0.wav", wav_bytes(1, 1, 0, 16, pcm16_payload({1, 2}))));
        }) == Err::MalformedRiff);
}

TEST_CASE("unsupported encodings are rejected") {
  CHECK(thrown_code([] {
          read_wav(write_file("adpcm.wav", wav_bytes(2, 1, 8000, 16, pcm16_payload({1, 2}))));
        }) == Err::UnsupportedEncoding);
  CHECK(thrown_code([] {
          read_wav(write_file("pcm8.wav", wav_bytes(1, 1, 8000, 8, {0x10, 0x20})));
        }) == Err::UnsupportedEncoding);
  CHECK(thrown_code([] {
          read_wav(write_file("tri.wav", wav_bytes(1, 3, 8000, 16, pcm16_payload({1, 2, 3}))));
        }) == Err::UnsupportedEncoding);
  CHECK(thrown_code([] {
          read_wav(write_file("empty.wav", wav_bytes(1, 1, 8000, 16, {})));
        }) == Err::EmptyAudio);
}

TEST_CASE("write then read stays within one quantization step") {
  Rng rng(7);
  std::vector<double> samples = oracles::random_vec(rng, 500, -1.0, 1.0);
  samples[100] = 2.0;  // must clip, not wrap
  const std::string path = (test_dir() / "roundtrip.wav").string();
  write_wav(path, samples, 8000);
  const AudioRecording rec = read_wav(path);
  REQUIRE(rec.samples.size() == samples.size());
  CHECK(rec.sample_rate == 8000);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == 100) continue;
    CHECK(std::fabs(rec.samples[i] - samples[i]) <= 1.0 / 32768.0);
  }
  CHECK(rec.samples[100] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));

  CHECK(thrown_code([&] { write_wav(path, {}, 8000); }) == Err::EmptyAudio);
  CHECK(thrown_code([&] { write_wav(path, {0.1}, 0); }) == Err::MalformedInput);
}

TEST_CASE("resample at the same rate is the identity") {
  AudioRecording rec;
  rec.sample_rate = 16000;
  rec.samples = sine(400, 300.0, 16000, 0.5);
  const AudioRecording out = resample(rec, 16000);
  CHECK(out.samples == rec.samples);
  CHECK(out.sample_rate == 16000);
}

TEST_CASE("linear upsampling interpolates a ramp") {
  AudioRecording rec;
  rec.sample_rate = 1;
  rec.samples = {0.0, 1.0, 0.0};
  const AudioRecording out = resample(rec, 2);
  REQUIRE(out.samples.size() == 5);
  CHECK(out.sample_rate == 2);
  const std::vector<double> want{0.0, 0.5, 1.0, 0.5, 0.0};
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(out.samples[i] == doctest::Approx(want[i]).epsilon(1e-9));
  }
}

TEST_CASE("upsampling preserves the dominant frequency") {
  AudioRecording rec;
  rec.sample_rate = 8000;
  rec.samples = sine(2000, 100.0, 8000);  // 0.25 s of 100 Hz
  const AudioRecording up = resample(rec, 16000);
  REQUIRE(up.samples.size() == 3999);
  const std::size_t bin = oracles::dft_peak_bin(up.samples);
  const double freq = static_cast<double>(bin) * 16000.0 / static_cast<double>(up.samples.size());
  CHECK(std::fabs(freq - 100.0) < 1.0);
}

TEST_CASE("a two-hop resample returns near the original spectrum") {
  AudioRecording rec;
  rec.sample_rate = 8000;
  rec.samples = sine(2000, 100.0, 8000);
  const AudioRecording back = resample(resample(rec, 12000), 8000);
  REQUIRE(back.samples.size() == rec.samples.size());
  CHECK(back.sample_rate == 8000);
  CHECK(oracles::dft_peak_bin(back.samples) == oracles::dft_peak_bin(rec.samples));
}

TEST_CASE("resample_to_length handles endpoints and degenerate sizes") {
  Rng rng(11);
  const std::vector<double> x = oracles::random_vec(rng, 17);
  const std::vector<double> up = resample_to_length(x, 40);
  REQUIRE(up.size() == 40);
  CHECK(up.front() == x.front());
  CHECK(up.back() == x.back());

  CHECK(resample_to_length(x, 1) == std::vector<double>{x.front()});
  const std::vector<double> spread = resample_to_length({0.75}, 4);
  CHECK(spread == std::vector<double>(4, 0.75));
  CHECK(thrown_code([] { resample_to_length({}, 8); }) == Err::EmptyAudio);
}

TEST_CASE("manifest round trips with relative path resolution") {
  const fs::path dir = test_dir() / "manifest_a";
  fs::create_directories(dir / "audio");
  write_wav((dir / "audio" / "a.wav").string(), sine(800, 150.0, 8000, 0.4), 8000);
  write_wav((dir / "audio" / "b.wav").string(), sine(800, 250.0, 8000, 0.4), 8000);
  {
    std::ofstream ts(dir / "b.json");
    ts << R"([{"word":"ba","start":0.01,"end":0.05}])" << "\n";
  }
  {
    std::ofstream mf(dir / "set.json");
    mf << R"([
      {"path":"audio/a.wav","subject":"s1","label":"HC","kind":"vowel"},
      {"path":"audio/b.wav","subject":"s2","label":"PD","kind":"text","timestamps":"b.json"}
    ])" << "\n";
  }

  const DatasetManifest m = load_manifest((dir / "set.json").string(), 16000);
  REQUIRE(m.entries.size() == 2);
  CHECK(m.working_rate == 16000);
  CHECK(m.entries[0].path == (dir / "audio" / "a.wav").string());
  CHECK(m.entries[0].subject_id == "s1");
  CHECK(m.entries[0].label == Label::HC);
  CHECK(m.entries[0].kind == Kind::Vowel);
  CHECK(m.entries[0].timestamp_path.empty());
  CHECK(m.entries[1].label == Label::PD);
  CHECK(m.entries[1].kind == Kind::Text);
  CHECK(m.entries[1].timestamp_path == (dir / "b.json").string());

  // Saving elsewhere relativizes paths; loading back resolves to the same files.
  const fs::path dir2 = test_dir() / "manifest_b";
  fs::create_directories(dir2);
  save_manifest((dir2 / "copy.json").string(), m);
  const DatasetManifest m2 = load_manifest((dir2 / "copy.json").string(), 16000);
  REQUIRE(m2.entries.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(fs::weakly_canonical(m2.entries[i].path) == fs::weakly_canonical(m.entries[i].path));
    CHECK(m2.entries[i].subject_id == m.entries[i].subject_id);
    CHECK(m2.entries[i].label == m.entries[i].label);
    CHECK(m2.entries[i].kind == m.entries[i].kind);
  }
  CHECK(fs::weakly_canonical(m2.entries[1].timestamp_path) ==
        fs::weakly_canonical(m.entries[1].timestamp_path));
}

TEST_CASE("manifest validation rejects malformed input") {
  const fs::path dir = test_dir() / "manifest_bad";
  fs::create_directories(dir);
  auto write_doc = [&](const std::string& name, const std::string& body) {
    std::ofstream f(dir / name);
    f << body;
    return (dir / name).string();
  };

  CHECK(thrown_code([&] { load_manifest((dir / "missing.json").string(), 16000); }) ==
        Err::MissingFile);
  CHECK(thrown_code([&] { load_manifest(write_doc("obj.json", "{}"), 16000); }) ==
        Err::MalformedInput);
  CHECK(thrown_code([&] { load_manifest(write_doc("syntax.json", "[{"), 16000); }) ==
        Err::MalformedInput);
  CHECK(thrown_code([&] {
          load_manifest(write_doc("nokey.json", R"([{"subject":"s","label":"HC","kind":"vowel"}])"),
                        16000);
        }) == Err::MalformedInput);
  CHECK(thrown_code([&] {
          load_manifest(
              write_doc("badlabel.json",
                        R"([{"path":"a.wav","subject":"s","label":"XX","kind":"vowel"}])"),
              16000);
        }) == Err::MalformedInput);
  CHECK(thrown_code([&] {
          load_manifest(write_doc("badkind.json",
                                  R"([{"path":"a.wav","subject":"s","label":"HC","kind":"hum"}])"),
                        16000);
        }) == Err::MalformedInput);
  CHECK(thrown_code([&] {
          load_manifest(write_doc("nosubj.json",
                                  R"([{"path":"a.wav","subject":"","label":"HC","kind":"vowel"}])"),
                        16000);
        }) == Err::MalformedInput);
  CHECK(thrown_code([&] {
          load_manifest(
              write_doc("dup.json",
                        R"([{"path":"a.wav","subject":"s1","label":"HC","kind":"vowel"},
                            {"path":"a.wav","subject":"s2","label":"PD","kind":"vowel"}])"),
              16000);
        }) == Err::MalformedInput);
}

TEST_CASE("load_recording applies metadata and the working rate") {
  const fs::path dir = test_dir() / "loadrec";
  fs::create_directories(dir);
  const std::string wav = (dir / "c.wav").string();
  write_wav(wav, sine(2000, 100.0, 8000, 0.8), 8000);

  ManifestEntry entry;
  entry.path = wav;
  entry.subject_id = "s9";
  entry.label = Label::PD;
  entry.kind = Kind::Text;

  const AudioRecording rec = load_recording(entry, 16000);
  CHECK(rec.sample_rate == 16000);
  CHECK(rec.samples.size() == 3999);
  CHECK(rec.subject_id == "s9");
  CHECK(rec.label == Label::PD);
  CHECK(rec.kind == Kind::Text);
  CHECK(rec.source_path == wav);

  const AudioRecording same = load_recording(entry, 8000);
  CHECK(same.sample_rate == 8000);
  CHECK(same.samples.size() == 2000);
}

TEST_CASE("label and kind names round trip") {
  CHECK(label_from_string("HC") == Label::HC);
  CHECK(label_from_string("PD") == Label::PD);
  CHECK(std::string(label_name(Label::HC)) == "HC");
  CHECK(std::string(label_name(Label::PD)) == "PD");
  CHECK(kind_from_string("vowel") == Kind::Vowel);
  CHECK(kind_from_string("syllable") == Kind::Syllable);
  CHECK(kind_from_string("text") == Kind::Text);
  for (Kind k : {Kind::Vowel, Kind::Syllable, Kind::Text}) {
    CHECK(kind_from_string(kind_name(k)) == k);
  }
  CHECK(thrown_code([] { label_from_string("hc"); }) == Err::MalformedInput);
  CHECK(thrown_code([] { kind_from_string("word"); }) == Err::MalformedInput);
}
