// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "advseg/scenegen.hpp"

using namespace advseg;

namespace {

SceneSpec base_spec(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.height = 64;
  s.width = 64;
  return s;
}

double pixel_std(const Image& img) {
  double mean = 0.0;
  for (float v : img.px) mean += v;
  mean /= static_cast<double>(img.px.size());
  double var = 0.0;
  for (float v : img.px) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(img.px.size()));
}

}  // namespace

TEST(SceneSpec, ValidationNamesBadField) {
  SceneSpec s = base_spec(1);
  s.severity = 1.5;
  try {
    s.validate();
    FAIL() << "expected InvalidSpecError";
  } catch (const InvalidSpecError& e) {
    EXPECT_NE(std::string(e.what()).find("severity"), std::string::npos);
  }
  s = base_spec(1);
  s.height = 16;
  EXPECT_THROW(s.validate(), InvalidSpecError);
  s = base_spec(1);
  s.horizon_frac = 0.7;
  s.road_frac = 0.4;
  EXPECT_THROW(s.validate(), InvalidSpecError);
  s = base_spec(1);
  s.counts.cars = -1;
  EXPECT_THROW(s.validate(), InvalidSpecError);
}

TEST(SceneGen, DeterministicForSeed) {
  const LabeledSample a = generate_scene(base_spec(77));
  const LabeledSample b = generate_scene(base_spec(77));
  EXPECT_EQ(a.image.px, b.image.px);
  EXPECT_EQ(a.mask.v, b.mask.v);
  const LabeledSample c = generate_scene(base_spec(78));
  EXPECT_NE(a.image.px, c.image.px);
}

TEST(SceneGen, ImageOnEightBitGrid) {
  const LabeledSample s = generate_scene(base_spec(5));
  for (float v : s.image.px) {
    EXPECT_FLOAT_EQ(v, std::round(v * 255.f) / 255.f);
  }
}

TEST(SceneGen, BandStructure) {
  SceneSpec spec = base_spec(13);
  spec.counts = {};
  spec.counts.cars = 0;
  spec.counts.persons = 0;
  spec.counts.poles = 0;
  spec.counts.traffic_lights = 0;
  spec.counts.traffic_signs = 0;
  spec.counts.buildings = 0;
  const LabeledSample s = generate_scene(spec);
  // Top row is sky, bottom row is road.
  for (int x = 0; x < spec.width; ++x) {
    EXPECT_EQ(s.mask.at(0, x), static_cast<std::uint8_t>(SemanticClass::Sky));
    EXPECT_EQ(s.mask.at(spec.height - 1, x), static_cast<std::uint8_t>(SemanticClass::Road));
  }
  // Sidewalk sits directly above the road band.
  bool saw_sidewalk = false;
  for (int y = 0; y < spec.height && !saw_sidewalk; ++y)
    for (int x = 0; x < spec.width; ++x)
      if (s.mask.at(y, x) == static_cast<std::uint8_t>(SemanticClass::Sidewalk)) {
        saw_sidewalk = true;
        break;
      }
  EXPECT_TRUE(saw_sidewalk);
}

TEST(SceneGen, ZeroCountMeansZeroPixels) {
  SceneSpec spec = base_spec(29);
  spec.counts.persons = 0;
  const LabeledSample s = generate_scene(spec);
  for (std::uint8_t v : s.mask.v)
    ASSERT_NE(v, static_cast<std::uint8_t>(SemanticClass::Person));
}

TEST(SceneGen, CountsProducePixels) {
  SceneSpec spec = base_spec(31);
  spec.counts.cars = 3;
  spec.counts.persons = 2;
  spec.counts.poles = 3;
  spec.counts.traffic_lights = 2;
  spec.counts.traffic_signs = 2;
  spec.counts.buildings = 3;
  const LabeledSample s = generate_scene(spec);
  std::set<std::uint8_t> present(s.mask.v.begin(), s.mask.v.end());
  for (SemanticClass c : {SemanticClass::Car, SemanticClass::Person, SemanticClass::Pole,
                          SemanticClass::TrafficLight, SemanticClass::TrafficSign,
                          SemanticClass::Building, SemanticClass::Road, SemanticClass::Sidewalk,
                          SemanticClass::Sky})
    EXPECT_TRUE(present.count(static_cast<std::uint8_t>(c))) << class_name(c);
}

TEST(SceneGen, UnpaintedPixelsAreIgnore) {
  SceneSpec spec = base_spec(41);
  spec.counts.buildings = 0;  // leaves a gap between horizon and sidewalk
  spec.counts.cars = 0;
  spec.counts.persons = 0;
  spec.counts.poles = 0;
  spec.counts.traffic_lights = 0;
  spec.counts.traffic_signs = 0;
  const LabeledSample s = generate_scene(spec);
  int ignore = 0;
  for (std::uint8_t v : s.mask.v) ignore += v == kIgnoreIndex ? 1 : 0;
  EXPECT_GT(ignore, 0);
}

TEST(Weather, MaskNeverTouched) {
  const LabeledSample s = generate_scene(base_spec(55));
  const std::vector<std::uint8_t> before = s.mask.v;
  Rng rng(99);
  for (WeatherCondition w : {WeatherCondition::Normal, WeatherCondition::Rain,
                             WeatherCondition::Fog, WeatherCondition::Snow}) {
    Image out = apply_weather(s.image, s.mask, w, 0.9, rng);
    EXPECT_EQ(s.mask.v, before);
    EXPECT_EQ(out.h, s.image.h);
  }
  Image night = apply_time(s.image, TimeOfDay::Night, rng);
  EXPECT_EQ(s.mask.v, before);
  EXPECT_EQ(night.w, s.image.w);
}

TEST(Weather, NormalIsIdentity) {
  const LabeledSample s = generate_scene(base_spec(60));
  Rng rng(1);
  const Image out = apply_weather(s.image, s.mask, WeatherCondition::Normal, 0.7, rng);
  EXPECT_EQ(out.px, s.image.px);
}

TEST(Weather, FogContrastMonotone) {
  for (std::uint64_t seed : {101ull, 102ull, 103ull, 104ull, 105ull}) {
    const LabeledSample s = generate_scene(base_spec(seed));
    double prev = 1e9;
    for (double sev : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      Rng rng(7);
      const Image out = apply_weather(s.image, s.mask, WeatherCondition::Fog, sev, rng);
      const double sd = pixel_std(out);
      EXPECT_LE(sd, prev + 1e-9) << "seed " << seed << " severity " << sev;
      prev = sd;
    }
  }
}

TEST(Weather, FogIsRngFree) {
  const LabeledSample s = generate_scene(base_spec(110));
  Rng r1(1), r2(999);
  const Image a = apply_weather(s.image, s.mask, WeatherCondition::Fog, 0.6, r1);
  const Image b = apply_weather(s.image, s.mask, WeatherCondition::Fog, 0.6, r2);
  EXPECT_EQ(a.px, b.px);
}

TEST(Weather, RainAddsStreaksProportionalToSeverity) {
  const LabeledSample s = generate_scene(base_spec(120));
  Rng r1(4), r2(4);
  const Image light = apply_weather(s.image, s.mask, WeatherCondition::Rain, 0.2, r1);
  const Image heavy = apply_weather(s.image, s.mask, WeatherCondition::Rain, 0.7, r2);
  int light_changed = 0, heavy_changed = 0;
  for (std::size_t i = 0; i < s.image.px.size(); ++i) {
    light_changed += light.px[i] != s.image.px[i] ? 1 : 0;
    heavy_changed += heavy.px[i] != s.image.px[i] ? 1 : 0;
  }
  EXPECT_GT(light_changed, 0);
  EXPECT_GT(heavy_changed, light_changed);
}

TEST(Weather, HeavyRainPullsInHaze) {
  EXPECT_DOUBLE_EQ(kHeavyRainThreshold, 0.8);
  EXPECT_DOUBLE_EQ(kHeavyRainHazeSeverity, 0.2);
  const LabeledSample s = generate_scene(base_spec(130));
  // At the threshold the whole frame shifts (haze blankets every pixel);
  // just below it only streaks and splashes touch the image.
  Rng r1(4), r2(4);
  const Image below = apply_weather(s.image, s.mask, WeatherCondition::Rain,
                                    kHeavyRainThreshold - 0.01, r1);
  const Image at = apply_weather(s.image, s.mask, WeatherCondition::Rain, kHeavyRainThreshold, r2);
  int below_changed = 0, at_changed = 0;
  for (std::size_t i = 0; i < s.image.px.size(); ++i) {
    below_changed += below.px[i] != s.image.px[i] ? 1 : 0;
    at_changed += at.px[i] != s.image.px[i] ? 1 : 0;
  }
  const auto total = static_cast<int>(s.image.px.size());
  EXPECT_LT(below_changed, total * 9 / 10);
  EXPECT_GT(at_changed, total * 9 / 10);
}

TEST(Weather, SnowLiftsRoadBrightness) {
  const LabeledSample s = generate_scene(base_spec(140));
  Rng rng(6);
  const Image out = apply_weather(s.image, s.mask, WeatherCondition::Snow, 1.0, rng);
  double road_before = 0.0, road_after = 0.0;
  int n = 0;
  for (int y = 0; y < s.image.h; ++y)
    for (int x = 0; x < s.image.w; ++x)
      if (s.mask.at(y, x) == static_cast<std::uint8_t>(SemanticClass::Road)) {
        for (int c = 0; c < 3; ++c) {
          road_before += s.image.at(y, x, c);
          road_after += out.at(y, x, c);
        }
        ++n;
      }
  ASSERT_GT(n, 0);
  EXPECT_GT(road_after / n, road_before / n + 0.2);
}

TEST(Time, DayIsIdentity) {
  const LabeledSample s = generate_scene(base_spec(150));
  Rng rng(1);
  const Image out = apply_time(s.image, TimeOfDay::Day, rng);
  EXPECT_EQ(out.px, s.image.px);
}

TEST(Time, NightStrictlyDarker) {
  for (std::uint64_t seed : {160ull, 161ull, 162ull, 163ull, 164ull, 165ull, 166ull, 167ull}) {
    SceneSpec spec = base_spec(seed);
    const LabeledSample s = generate_scene(spec);
    Rng rng(seed);
    std::vector<LightSpot> lights = {{10, 20}, {12, 40}};
    const Image night = apply_time(s.image, TimeOfDay::Night, rng, lights);
    EXPECT_LT(mean_luminance(night), mean_luminance(s.image)) << "seed " << seed;
  }
}

TEST(Time, NightSceneViaSpecIsDarker) {
  SceneSpec day = base_spec(170);
  SceneSpec night = base_spec(170);
  night.time = TimeOfDay::Night;
  const LabeledSample d = generate_scene(day);
  const LabeledSample n = generate_scene(night);
  EXPECT_LT(mean_luminance(n.image), mean_luminance(d.image));
  EXPECT_EQ(n.mask.v, d.mask.v);  // conditions never change geometry
}

TEST(Plan, JsonRoundTrip) {
  GenerationPlan p;
  p.count = 12;
  p.master_seed = 99;
  p.height = 48;
  p.width = 56;
  p.weather_weights = {0.5, 1.5, 0.0, 2.0};
  p.time_weights = {1.0, 3.0};
  p.severity_lo = 0.2;
  p.severity_hi = 0.8;
  p.counts.cars = 5;
  const nlohmann::json j = plan_to_json(p);
  const GenerationPlan q = plan_from_json(j);
  EXPECT_EQ(q.count, 12);
  EXPECT_EQ(q.master_seed, 99u);
  EXPECT_EQ(q.height, 48);
  EXPECT_EQ(q.width, 56);
  EXPECT_EQ(q.weather_weights, p.weather_weights);
  EXPECT_EQ(q.time_weights, p.time_weights);
  EXPECT_DOUBLE_EQ(q.severity_lo, 0.2);
  EXPECT_DOUBLE_EQ(q.severity_hi, 0.8);
  EXPECT_EQ(q.counts.cars, 5);
}

TEST(Plan, ValidationRejectsBadWeights) {
  GenerationPlan p;
  p.count = 1;
  p.weather_weights = {0.0, 0.0, 0.0, 0.0};
  EXPECT_THROW(p.validate(), InvalidSpecError);
  p.weather_weights = {1.0, 0.0, 0.0, -0.5};
  EXPECT_THROW(p.validate(), InvalidSpecError);
  p = GenerationPlan{};
  p.severity_lo = 0.9;
  p.severity_hi = 0.2;
  EXPECT_THROW(p.validate(), InvalidSpecError);
}

TEST(Plan, SingleCellWeightsForceThatCell) {
  GenerationPlan p;
  p.count = 10;
  p.master_seed = 5;
  p.height = 32;
  p.width = 32;
  p.weather_weights = {0.0, 0.0, 0.0, 1.0};  // snow only
  p.time_weights = {0.0, 1.0};               // night only
  const std::vector<LabeledSample> samples = generate_samples(p);
  ASSERT_EQ(samples.size(), 10u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.weather, WeatherCondition::Snow);
    EXPECT_EQ(s.time, TimeOfDay::Night);
    EXPECT_EQ(s.domain, DomainTag::AdverseSynthetic);
  }
}

TEST(Plan, DomainFollowsConditions) {
  GenerationPlan p;
  p.count = 40;
  p.master_seed = 6;
  p.height = 32;
  p.width = 32;
  const std::vector<LabeledSample> samples = generate_samples(p);
  for (const auto& s : samples) {
    const bool standard = s.weather == WeatherCondition::Normal && s.time == TimeOfDay::Day;
    EXPECT_EQ(s.domain, standard ? DomainTag::StandardReal : DomainTag::AdverseSynthetic);
  }
}

TEST(Plan, CoverageOverTwoHundredSamples) {
  GenerationPlan p;
  p.count = 200;
  p.master_seed = 7;
  p.height = 32;
  p.width = 32;
  const std::vector<LabeledSample> samples = generate_samples(p);
  std::set<std::pair<int, int>> cells;
  for (const auto& s : samples)
    cells.insert({static_cast<int>(s.weather), static_cast<int>(s.time)});
  EXPECT_EQ(cells.size(), static_cast<std::size_t>(kNumWeather * kNumTime));
}

TEST(Plan, SamplesDeterministicAndIndexSeeded) {
  GenerationPlan p;
  p.count = 6;
  p.master_seed = 8;
  p.height = 32;
  p.width = 32;
  const auto a = generate_samples(p);
  const auto b = generate_samples(p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].image.px, b[i].image.px);
    EXPECT_EQ(a[i].mask.v, b[i].mask.v);
  }
  EXPECT_NE(a[0].image.px, a[1].image.px);
}
