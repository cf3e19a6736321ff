// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advseg/common.hpp"
#include "advseg/dataset.hpp"
#include "advseg/image.hpp"
#include "advseg/labels.hpp"
#include "advseg/png_io.hpp"

namespace fs = std::filesystem;
using namespace advseg;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("advseg_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const auto va = a.next(), vb = b.next(), vc = c.next();
    all_equal = all_equal && va == vb;
    any_diff = any_diff || va != vc;
  }
  EXPECT_TRUE(all_equal);
  EXPECT_TRUE(any_diff);
}

TEST(Rng, UniformBoundsAndMean) {
  Rng r(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = r.uniform();
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Rng, UniformIntInclusiveRange) {
  Rng r(9);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 2000; ++i) {
    const int v = r.uniform_int(3, 7);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 7);
    saw_lo = saw_lo || v == 3;
    saw_hi = saw_hi || v == 7;
  }
  EXPECT_TRUE(saw_lo);
  EXPECT_TRUE(saw_hi);
  EXPECT_EQ(r.uniform_int(5, 5), 5);
}

TEST(Rng, SerializeRestoresStream) {
  Rng a(1234);
  for (int i = 0; i < 17; ++i) a.next();
  const std::string state = a.serialize();
  Rng b(0);
  b.deserialize(state);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, WeightedIndexRespectsZeros) {
  Rng r(5);
  const double w[4] = {0.0, 0.0, 1.0, 0.0};
  for (int i = 0; i < 200; ++i) EXPECT_EQ(r.weighted_index(w, 4), 2);
}

TEST(Rng, WeightedIndexProportions) {
  Rng r(11);
  const double w[3] = {1.0, 3.0, 0.0};
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 40000; ++i) ++counts[r.weighted_index(w, 3)];
  EXPECT_EQ(counts[2], 0);
  EXPECT_NEAR(counts[1] / 40000.0, 0.75, 0.02);
}

TEST(Seeds, DeriveSeedDecorrelates) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(99, 3), derive_seed(99, 3));
}

TEST(FormatDouble, RoundTripsExactly) {
  const double cases[] = {0.0,   1.0,     -1.5,     1e-5,          0.1,
                          1.0 / 3.0, 6.02e23, -7.25e-12, 3.14159265358979};
  for (double v : cases) {
    const std::string s = format_double(v);
    EXPECT_EQ(std::stod(s), v) << s;
  }
}

TEST(Labels, PaletteRoundTrip) {
  for (int i = 0; i < kNumClasses; ++i) {
    const Rgb c = index_color(i);
    EXPECT_EQ(color_index(c), i);
  }
  EXPECT_EQ(color_index(kIgnoreColor), kIgnoreIndex);
  EXPECT_EQ(color_index(Rgb{1, 2, 3}), -1);
  EXPECT_THROW(index_color(kNumClasses), InvalidIndexError);
  EXPECT_THROW(index_color(-1), InvalidIndexError);
}

TEST(Labels, PaletteColorsDistinct) {
  for (int i = 0; i < kNumClasses; ++i)
    for (int j = i + 1; j < kNumClasses; ++j) EXPECT_FALSE(kClassColors[i] == kClassColors[j]);
}

TEST(Labels, EnumStringsRoundTrip) {
  for (int i = 0; i < kNumWeather; ++i) {
    const auto w = static_cast<WeatherCondition>(i);
    EXPECT_EQ(weather_from_string(to_string(w)), w);
  }
  for (int i = 0; i < kNumTime; ++i) {
    const auto t = static_cast<TimeOfDay>(i);
    EXPECT_EQ(time_from_string(to_string(t)), t);
  }
  EXPECT_EQ(domain_from_string("standard_real"), DomainTag::StandardReal);
  EXPECT_EQ(domain_from_string("adverse_synthetic"), DomainTag::AdverseSynthetic);
  EXPECT_THROW(weather_from_string("drizzle"), ConfigError);
  EXPECT_THROW(time_from_string("dusk"), ConfigError);
  EXPECT_THROW(domain_from_string("other"), ConfigError);
}

TEST(Image, QuantizeSnapsToEightBitGrid) {
  Image img(2, 2);
  img.at(0, 0, 0) = 0.5f;
  img.at(0, 0, 1) = 0.123456f;
  img.at(1, 1, 2) = 0.9999f;
  quantize8_inplace(img);
  for (float v : img.px) {
    const float back = std::round(v * 255.f) / 255.f;
    EXPECT_FLOAT_EQ(v, back);
  }
  Image again = img;
  quantize8_inplace(again);
  EXPECT_EQ(again.px, img.px);
}

TEST(Image, MeanLuminanceWeights) {
  Image img(1, 1);
  img.at(0, 0, 0) = 1.f;
  EXPECT_NEAR(mean_luminance(img), 0.2126, 1e-6);
  img.at(0, 0, 0) = 0.f;
  img.at(0, 0, 2) = 1.f;
  EXPECT_NEAR(mean_luminance(img), 0.0722, 1e-6);
}

TEST(Image, MaskCodecRoundTrip) {
  Mask m(3, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) m.at(y, x) = static_cast<std::uint8_t>((y * 4 + x) % kNumClasses);
  m.at(2, 3) = kIgnoreIndex;
  const ImageU8 enc = encode_mask(m);
  const Mask dec = decode_mask(enc);
  EXPECT_EQ(dec.v, m.v);
}

TEST(Image, MaskDecodeRejectsUnknownColorWithLocation) {
  ImageU8 img(2, 2);
  img.at(1, 0, 0) = 12;
  img.at(1, 0, 1) = 34;
  img.at(1, 0, 2) = 56;
  try {
    decode_mask(img);
    FAIL() << "expected UnknownColorError";
  } catch (const UnknownColorError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(12,34,56)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1,0)"), std::string::npos) << msg;
  }
}

TEST(Png, RoundTripBytes) {
  const fs::path dir = fresh_dir("png");
  ImageU8 img(5, 7);
  Rng r(3);
  for (auto& v : img.px) v = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  const std::string path = (dir / "t.png").string();
  write_png(path, img);
  const ImageU8 back = read_png(path);
  EXPECT_EQ(back.h, img.h);
  EXPECT_EQ(back.w, img.w);
  EXPECT_EQ(back.px, img.px);
  fs::remove_all(dir);
}

TEST(Png, DeterministicFileBytes) {
  const fs::path dir = fresh_dir("png_det");
  ImageU8 img(9, 4);
  Rng r(8);
  for (auto& v : img.px) v = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  const std::string p1 = (dir / "a.png").string(), p2 = (dir / "b.png").string();
  write_png(p1, img);
  write_png(p2, img);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  EXPECT_FALSE(b1.empty());
  EXPECT_EQ(b1, b2);
  fs::remove_all(dir);
}

TEST(Png, MissingFileThrowsIoError) {
  EXPECT_THROW(read_png("/nonexistent/deeply/missing.png"), IoError);
}

namespace {

LabeledSample tiny_sample(const std::string& id, WeatherCondition w, TimeOfDay t) {
  LabeledSample s;
  s.id = id;
  s.image = Image(4, 4);
  Rng r(fnv1a64(id.data(), id.size()));
  for (auto& v : s.image.px) v = static_cast<float>(r.uniform());
  quantize8_inplace(s.image);
  s.mask = Mask(4, 4, 0);
  s.mask.at(0, 0) = kIgnoreIndex;
  s.mask.at(1, 1) = 7;
  s.weather = w;
  s.time = t;
  s.domain = (w == WeatherCondition::Normal && t == TimeOfDay::Day) ? DomainTag::StandardReal
                                                                    : DomainTag::AdverseSynthetic;
  return s;
}

}  // namespace

TEST(Dataset, SaveLoadRoundTrip) {
  const fs::path dir = fresh_dir("ds");
  std::vector<LabeledSample> samples = {
      tiny_sample("b_sample", WeatherCondition::Rain, TimeOfDay::Night),
      tiny_sample("a_sample", WeatherCondition::Normal, TimeOfDay::Day),
  };
  save_dataset(samples, dir.string());
  const std::vector<LabeledSample> back = load_dataset(dir.string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "a_sample");  // sorted by id
  EXPECT_EQ(back[1].id, "b_sample");
  EXPECT_EQ(back[1].weather, WeatherCondition::Rain);
  EXPECT_EQ(back[1].time, TimeOfDay::Night);
  EXPECT_EQ(back[1].domain, DomainTag::AdverseSynthetic);
  for (const auto& s : samples) {
    const auto& loaded = s.id == back[0].id ? back[0] : back[1];
    EXPECT_EQ(loaded.image.px, s.image.px);
    EXPECT_EQ(loaded.mask.v, s.mask.v);
  }
  fs::remove_all(dir);
}

TEST(Dataset, DuplicateIdRejected) {
  const fs::path dir = fresh_dir("ds_dup");
  std::vector<LabeledSample> samples = {
      tiny_sample("same", WeatherCondition::Normal, TimeOfDay::Day),
      tiny_sample("same", WeatherCondition::Fog, TimeOfDay::Day),
  };
  EXPECT_THROW(save_dataset(samples, dir.string()), DuplicateIdError);
  fs::remove_all(dir);
}

TEST(Dataset, MissingManifestThrows) {
  const fs::path dir = fresh_dir("ds_nomanifest");
  EXPECT_THROW(load_dataset(dir.string()), MissingManifestError);
  fs::remove_all(dir);
}

TEST(Dataset, CorruptManifestIsConfigError) {
  const fs::path dir = fresh_dir("ds_badjson");
  std::ofstream(dir / "manifest.json") << "{ not json";
  EXPECT_THROW(load_dataset(dir.string()), ConfigError);
  fs::remove_all(dir);
}

TEST(Dataset, MissingImageFileNamed) {
  const fs::path dir = fresh_dir("ds_missingfile");
  std::vector<LabeledSample> samples = {tiny_sample("victim", WeatherCondition::Normal, TimeOfDay::Day)};
  save_dataset(samples, dir.string());
  fs::remove(dir / "images" / "victim.png");
  try {
    load_dataset(dir.string());
    FAIL() << "expected MissingFileError";
  } catch (const MissingFileError& e) {
    EXPECT_NE(std::string(e.what()).find("victim"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Dataset, ManifestJsonShape) {
  const fs::path dir = fresh_dir("ds_json");
  std::vector<LabeledSample> samples = {tiny_sample("x", WeatherCondition::Snow, TimeOfDay::Day)};
  save_dataset(samples, dir.string());
  std::ifstream is(dir / "manifest.json");
  nlohmann::json j = nlohmann::json::parse(is);
  EXPECT_EQ(j.at("schema_version").get<int>(), 1);
  ASSERT_EQ(j.at("samples").size(), 1u);
  const auto& rec = j.at("samples")[0];
  EXPECT_EQ(rec.at("id"), "x");
  EXPECT_EQ(rec.at("weather"), "snow");
  EXPECT_EQ(rec.at("time"), "day");
  EXPECT_EQ(rec.at("domain"), "adverse_synthetic");
  EXPECT_TRUE(rec.contains("image"));
  EXPECT_TRUE(rec.contains("mask"));
  fs::remove_all(dir);
}

TEST(Errors, HierarchyMapsToExitCategories) {
  EXPECT_THROW(throw InvalidSpecError("x"), ConfigError);
  EXPECT_THROW(throw CheckpointMismatchError("x"), ConfigError);
  EXPECT_THROW(throw UnknownColorError("x"), DatasetError);
  EXPECT_THROW(throw MissingManifestError("x"), DatasetError);
  EXPECT_THROW(throw DuplicateIdError("x"), DatasetError);
  EXPECT_THROW(throw EmptyDatasetError("x"), DatasetError);
  EXPECT_THROW(throw IoError("x"), Error);
}
