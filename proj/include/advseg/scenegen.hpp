// SPDX-License-Identifier: Apache-2.0
//
// Procedural 2D street-scene generator with pixel-perfect ground truth.
// Scenes are painted back to front (sky, buildings, vegetation, road,
// sidewalk, then the small primitives), every painted pixel gets its class
// index, and weather / time-of-day effects are composited onto the image
// afterwards. The mask is never touched by an effect.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "advseg/dataset.hpp"

namespace advseg {

// Heavy rain drags in a light haze pass.
inline constexpr double kHeavyRainThreshold = 0.8;
inline constexpr double kHeavyRainHazeSeverity = 0.2;

struct PrimitiveCounts {
  int cars = 3;
  int persons = 2;
  int poles = 3;
  int traffic_lights = 2;
  int traffic_signs = 2;
  int buildings = 4;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  WeatherCondition weather = WeatherCondition::Normal;
  TimeOfDay time = TimeOfDay::Day;
  double severity = 0.5;
  PrimitiveCounts counts;
  int height = 64, width = 64;
  double horizon_frac = 0.35;
  double road_frac = 0.30;

  // Nighttime constants; the simulator randomizes these per scene.
  double night_lum_lo = 0.15;
  double night_lum_hi = 0.35;
  double light_skip_prob = 0.2;

  void validate() const {
    if (severity < 0.0 || severity > 1.0) throw InvalidSpecError("SceneSpec.severity out of [0,1]");
    if (height < 32 || width < 32) throw InvalidSpecError("SceneSpec.resolution below 32x32");
    if (horizon_frac <= 0.0 || horizon_frac >= 1.0) throw InvalidSpecError("SceneSpec.horizon_frac");
    if (road_frac <= 0.0 || road_frac >= 1.0) throw InvalidSpecError("SceneSpec.road_frac");
    if (horizon_frac + road_frac >= 1.0)
      throw InvalidSpecError("SceneSpec.layout: horizon_frac + road_frac must be < 1");
    if (counts.cars < 0 || counts.persons < 0 || counts.poles < 0 || counts.traffic_lights < 0 ||
        counts.traffic_signs < 0 || counts.buildings < 0)
      throw InvalidSpecError("SceneSpec.counts: negative count");
  }
};

struct GenerationPlan {
  int count = 0;
  std::uint64_t master_seed = 0;
  int height = 64, width = 64;
  std::array<double, kNumWeather> weather_weights = {1.0, 1.0, 1.0, 1.0};
  std::array<double, kNumTime> time_weights = {1.0, 1.0};
  double severity_lo = 0.0, severity_hi = 1.0;
  PrimitiveCounts counts;
  double horizon_frac = 0.35;
  double road_frac = 0.30;

  void validate() const {
    if (count < 0) throw InvalidSpecError("GenerationPlan.count negative");
    double ws = 0.0, ts = 0.0;
    for (double w : weather_weights) {
      if (w < 0.0) throw InvalidSpecError("GenerationPlan.weights.weather: negative weight");
      ws += w;
    }
    for (double w : time_weights) {
      if (w < 0.0) throw InvalidSpecError("GenerationPlan.weights.time: negative weight");
      ts += w;
    }
    if (ws <= 0.0) throw InvalidSpecError("GenerationPlan.weights.weather: all zero");
    if (ts <= 0.0) throw InvalidSpecError("GenerationPlan.weights.time: all zero");
    if (severity_lo < 0.0 || severity_hi > 1.0 || severity_lo > severity_hi)
      throw InvalidSpecError("GenerationPlan.severity range");
    SceneSpec probe;
    probe.height = height;
    probe.width = width;
    probe.horizon_frac = horizon_frac;
    probe.road_frac = road_frac;
    probe.counts = counts;
    probe.validate();
  }
};

inline GenerationPlan plan_from_json(const nlohmann::json& j) {
  GenerationPlan p;
  p.count = j.at("count").get<int>();
  p.master_seed = j.at("master_seed").get<std::uint64_t>();
  const auto& res = j.at("resolution");
  p.height = res.at(0).get<int>();
  p.width = res.at(1).get<int>();
  const auto& ww = j.at("weights").at("weather");
  for (int i = 0; i < kNumWeather; ++i) {
    const std::string key{to_string(static_cast<WeatherCondition>(i))};
    p.weather_weights[static_cast<std::size_t>(i)] = ww.value(key, 0.0);
  }
  const auto& tw = j.at("weights").at("time");
  for (int i = 0; i < kNumTime; ++i) {
    const std::string key{to_string(static_cast<TimeOfDay>(i))};
    p.time_weights[static_cast<std::size_t>(i)] = tw.value(key, 0.0);
  }
  p.severity_lo = j.at("severity").at("lo").get<double>();
  p.severity_hi = j.at("severity").at("hi").get<double>();
  if (j.contains("counts")) {
    const auto& c = j.at("counts");
    p.counts.cars = c.value("cars", p.counts.cars);
    p.counts.persons = c.value("persons", p.counts.persons);
    p.counts.poles = c.value("poles", p.counts.poles);
    p.counts.traffic_lights = c.value("traffic_lights", p.counts.traffic_lights);
    p.counts.traffic_signs = c.value("traffic_signs", p.counts.traffic_signs);
    p.counts.buildings = c.value("buildings", p.counts.buildings);
  }
  if (j.contains("layout")) {
    p.horizon_frac = j.at("layout").value("horizon", p.horizon_frac);
    p.road_frac = j.at("layout").value("road_band", p.road_frac);
  }
  p.validate();
  return p;
}

inline nlohmann::json plan_to_json(const GenerationPlan& p) {
  return {
      {"count", p.count},
      {"master_seed", p.master_seed},
      {"resolution", {p.height, p.width}},
      {"weights",
       {{"weather",
         {{"normal", p.weather_weights[0]},
          {"rain", p.weather_weights[1]},
          {"fog", p.weather_weights[2]},
          {"snow", p.weather_weights[3]}}},
        {"time", {{"day", p.time_weights[0]}, {"night", p.time_weights[1]}}}}},
      {"severity", {{"lo", p.severity_lo}, {"hi", p.severity_hi}}},
      {"counts",
       {{"cars", p.counts.cars},
        {"persons", p.counts.persons},
        {"poles", p.counts.poles},
        {"traffic_lights", p.counts.traffic_lights},
        {"traffic_signs", p.counts.traffic_signs},
        {"buildings", p.counts.buildings}}},
      {"layout", {{"horizon", p.horizon_frac}, {"road_band", p.road_frac}}},
  };
}

/// Center of a lit traffic-light lamp, used for nighttime bloom.
struct LightSpot {
  int y = 0, x = 0;
};

namespace detail {

inline void blend_px(Image& img, int y, int x, float r, float g, float b, float a) {
  if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
  img.at(y, x, 0) = clamp01((1.f - a) * img.at(y, x, 0) + a * r);
  img.at(y, x, 1) = clamp01((1.f - a) * img.at(y, x, 1) + a * g);
  img.at(y, x, 2) = clamp01((1.f - a) * img.at(y, x, 2) + a * b);
}

struct Painter {
  Image& img;
  Mask& mask;

  void put(int y, int x, float r, float g, float b, std::uint8_t cls) {
    if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
    img.at(y, x, 0) = clamp01(r);
    img.at(y, x, 1) = clamp01(g);
    img.at(y, x, 2) = clamp01(b);
    mask.at(y, x) = cls;
  }

  void rect(int y0, int y1, int x0, int x1, float r, float g, float b, std::uint8_t cls, Rng& rng,
            float jitter) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const float n = jitter > 0.f ? static_cast<float>(rng.uniform(-jitter, jitter)) : 0.f;
        put(y, x, r + n, g + n, b + n, cls);
      }
  }

  void disc(int cy, int cx, int radius, float r, float g, float b, std::uint8_t cls, Rng& rng,
            float jitter) {
    for (int y = cy - radius; y <= cy + radius; ++y)
      for (int x = cx - radius; x <= cx + radius; ++x) {
        const int dy = y - cy, dx = x - cx;
        if (dy * dy + dx * dx > radius * radius) continue;
        const float n = jitter > 0.f ? static_cast<float>(rng.uniform(-jitter, jitter)) : 0.f;
        put(y, x, r + n, g + n, b + n, cls);
      }
  }
};

struct SceneLayout {
  int horizon = 0;
  int sidewalk_top = 0;
  int road_top = 0;
};

inline SceneLayout layout_rows(const SceneSpec& spec) {
  SceneLayout l;
  l.horizon = static_cast<int>(std::lround(spec.height * spec.horizon_frac));
  l.road_top = spec.height - static_cast<int>(std::lround(spec.height * spec.road_frac));
  l.sidewalk_top = std::max(l.horizon + 1, l.road_top - std::max(2, spec.height / 16));
  return l;
}

}  // namespace detail

/// Fog: depth-proportional blend toward haze gray plus a mild low-pass.
/// Purely deterministic; the rng parameter is unused but kept so all
/// weather effects share one signature.
inline Image apply_fog(const Image& in, const detail::SceneLayout& l, double severity) {
  const float g_r = 0.72f, g_g = 0.72f, g_b = 0.74f;
  const auto s = static_cast<float>(severity);
  Image out = in;
  for (int y = 0; y < in.h; ++y) {
    // Depth proxy: rows climb from the bottom of the road band to the horizon.
    float depth;
    if (y >= l.road_top) {
      depth = 0.25f * (1.f - static_cast<float>(y - l.road_top) /
                                 static_cast<float>(std::max(1, in.h - l.road_top)));
    } else {
      depth = 0.25f + 0.75f * static_cast<float>(l.road_top - y) /
                          static_cast<float>(std::max(1, l.road_top));
    }
    const float alpha = s * (0.30f + 0.65f * depth);
    for (int x = 0; x < in.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = in.at(y, x, c);
        const float haze = (c == 2) ? g_b : (c == 1 ? g_g : g_r);
        out.at(y, x, c) = (1.f - alpha) * v + alpha * haze;
      }
  }
  // 3x3 box blur, blended in proportion to severity.
  const float blur_mix = 0.5f * s;
  if (blur_mix > 0.f) {
    Image blurred = out;
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x)
        for (int c = 0; c < 3; ++c) {
          float acc = 0.f;
          int n = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= in.h || xx < 0 || xx >= in.w) continue;
              acc += out.at(yy, xx, c);
              ++n;
            }
          blurred.at(y, x, c) = acc / static_cast<float>(n);
        }
    for (std::size_t i = 0; i < out.px.size(); ++i)
      out.px[i] = (1.f - blur_mix) * out.px[i] + blur_mix * blurred.px[i];
  }
  return out;
}

/// Weather compositing. The mask is consulted read-only (ground splashes and
/// snow accumulation target Road/Sidewalk pixels) and never modified.
inline Image apply_weather(const Image& in, const Mask& mask, WeatherCondition weather,
                           double severity, Rng& rng) {
  if (severity < 0.0 || severity > 1.0) throw InvalidSpecError("apply_weather: severity out of [0,1]");
  if (in.h != mask.h || in.w != mask.w) throw ShapeError("apply_weather: image/mask shape mismatch");

  // Effects reuse the scene's row layout; reconstruct it from the mask by
  // finding the first road row (falls back to a bandless estimate).
  detail::SceneLayout l;
  l.road_top = in.h;
  for (int y = 0; y < in.h && l.road_top == in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      if (mask.at(y, x) == static_cast<std::uint8_t>(SemanticClass::Road)) {
        l.road_top = y;
        break;
      }
  if (l.road_top == in.h) l.road_top = (2 * in.h) / 3;

  switch (weather) {
    case WeatherCondition::Normal:
      return in;

    case WeatherCondition::Fog:
      return apply_fog(in, l, severity);

    case WeatherCondition::Rain: {
      Image out = in;
      const double wind = (rng.coin(0.5) ? 1.0 : -1.0) * rng.uniform(0.25, 0.45);
      const int streaks =
          static_cast<int>(std::lround(severity * in.h * in.w / 68.0));
      for (int i = 0; i < streaks; ++i) {
        const int x0 = rng.uniform_int(0, in.w - 1);
        const int y0 = rng.uniform_int(0, in.h - 1);
        const int len = std::max(3, static_cast<int>(std::lround(rng.uniform(0.08, 0.16) * in.h)));
        const float a = static_cast<float>(rng.uniform(0.25, 0.5));
        for (int t = 0; t < len; ++t) {
          const int y = y0 + t;
          const int x = x0 + static_cast<int>(std::lround(wind * t));
          detail::blend_px(out, y, x, 0.78f, 0.80f, 0.85f, a);
        }
      }
      // Ground splashes on Road / Sidewalk.
      std::vector<int> ground;
      for (int i = 0; i < in.h * in.w; ++i) {
        const std::uint8_t m = mask.v[static_cast<std::size_t>(i)];
        if (m == static_cast<std::uint8_t>(SemanticClass::Road) ||
            m == static_cast<std::uint8_t>(SemanticClass::Sidewalk))
          ground.push_back(i);
      }
      if (!ground.empty()) {
        const int splashes = static_cast<int>(std::lround(severity * 0.06 * ground.size()));
        for (int i = 0; i < splashes; ++i) {
          const int px = ground[static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<int>(ground.size()) - 1))];
          detail::blend_px(out, px / in.w, px % in.w, 0.85f, 0.87f, 0.9f,
                           static_cast<float>(rng.uniform(0.3, 0.6)));
        }
      }
      if (severity >= kHeavyRainThreshold) out = apply_fog(out, l, kHeavyRainHazeSeverity);
      return out;
    }

    case WeatherCondition::Snow: {
      Image out = in;
      // Accumulation: lift Road / Sidewalk toward white.
      for (int i = 0; i < in.h * in.w; ++i) {
        const std::uint8_t m = mask.v[static_cast<std::size_t>(i)];
        float lift = 0.f;
        if (m == static_cast<std::uint8_t>(SemanticClass::Road))
          lift = 0.55f * static_cast<float>(severity);
        else if (m == static_cast<std::uint8_t>(SemanticClass::Sidewalk))
          lift = 0.45f * static_cast<float>(severity);
        if (lift > 0.f)
          for (int c = 0; c < 3; ++c) {
            float& v = out.px[static_cast<std::size_t>(3 * i + c)];
            v = clamp01(v + lift * (0.94f - v));
          }
      }
      const int flakes = static_cast<int>(std::lround(severity * in.h * in.w / 55.0));
      for (int i = 0; i < flakes; ++i) {
        const int y = rng.uniform_int(0, in.h - 1);
        const int x = rng.uniform_int(0, in.w - 1);
        const float a = static_cast<float>(rng.uniform(0.6, 0.9));
        detail::blend_px(out, y, x, 0.96f, 0.96f, 0.97f, a);
        if (rng.coin(0.3)) detail::blend_px(out, y, x + 1, 0.96f, 0.96f, 0.97f, 0.5f * a);
      }
      return out;
    }
  }
  throw Error("apply_weather: bad weather condition");
}

/// Nighttime: global luminance drop with a mild blue shift, then bloom disks
/// at the lit traffic-light lamps; each lamp goes dark with a small
/// probability (flickered or switched off).
inline Image apply_time(const Image& in, TimeOfDay time, Rng& rng,
                        const std::vector<LightSpot>& lights = {}, double lum_lo = 0.15,
                        double lum_hi = 0.35, double light_skip_prob = 0.2) {
  if (time == TimeOfDay::Day) return in;
  const auto f = static_cast<float>(rng.uniform(lum_lo, lum_hi));
  Image out = in;
  for (int i = 0; i < in.h * in.w; ++i) {
    out.px[static_cast<std::size_t>(3 * i)] *= f * 0.85f;
    out.px[static_cast<std::size_t>(3 * i + 1)] *= f * 0.92f;
    out.px[static_cast<std::size_t>(3 * i + 2)] = clamp01(out.px[static_cast<std::size_t>(3 * i + 2)] * f * 1.10f);
  }
  const int radius = std::max(2, std::min(in.h, in.w) / 18);
  for (const LightSpot& ls : lights) {
    const double intensity = rng.uniform(0.5, 0.95);
    if (rng.coin(light_skip_prob)) continue;  // flickered / turned off
    for (int y = ls.y - radius; y <= ls.y + radius; ++y)
      for (int x = ls.x - radius; x <= ls.x + radius; ++x) {
        if (y < 0 || y >= in.h || x < 0 || x >= in.w) continue;
        const double d2 = double(y - ls.y) * (y - ls.y) + double(x - ls.x) * (x - ls.x);
        if (d2 > double(radius) * radius) continue;
        const float fall = static_cast<float>(intensity * (1.0 - std::sqrt(d2) / radius) *
                                              (1.0 - std::sqrt(d2) / radius));
        out.at(y, x, 0) = clamp01(out.at(y, x, 0) + fall * 1.0f);
        out.at(y, x, 1) = clamp01(out.at(y, x, 1) + fall * 0.9f);
        out.at(y, x, 2) = clamp01(out.at(y, x, 2) + fall * 0.6f);
      }
  }
  return out;
}

/// Renders one scene. Image and mask are deterministic functions of the spec.
inline LabeledSample generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int H = spec.height, W = spec.width;
  Rng rng(spec.seed);

  LabeledSample s;
  s.image = Image(H, W);
  s.mask = Mask(H, W, kIgnoreIndex);
  detail::Painter p{s.image, s.mask};
  const detail::SceneLayout l = detail::layout_rows(spec);
  std::vector<LightSpot> lights;

  constexpr auto kSky = static_cast<std::uint8_t>(SemanticClass::Sky);
  constexpr auto kBuilding = static_cast<std::uint8_t>(SemanticClass::Building);
  constexpr auto kVegetation = static_cast<std::uint8_t>(SemanticClass::Vegetation);
  constexpr auto kRoad = static_cast<std::uint8_t>(SemanticClass::Road);
  constexpr auto kSidewalk = static_cast<std::uint8_t>(SemanticClass::Sidewalk);
  constexpr auto kPole = static_cast<std::uint8_t>(SemanticClass::Pole);
  constexpr auto kLight = static_cast<std::uint8_t>(SemanticClass::TrafficLight);
  constexpr auto kSign = static_cast<std::uint8_t>(SemanticClass::TrafficSign);
  constexpr auto kPerson = static_cast<std::uint8_t>(SemanticClass::Person);
  constexpr auto kCar = static_cast<std::uint8_t>(SemanticClass::Car);

  // Sky band with a vertical gradient.
  for (int y = 0; y < l.horizon; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(std::max(1, l.horizon));
    const float r = 0.55f + 0.20f * t, g = 0.70f + 0.12f * t, b = 0.92f + 0.03f * t;
    for (int x = 0; x < W; ++x) {
      const float n = static_cast<float>(rng.uniform(-0.012, 0.012));
      p.put(y, x, r + n, g + n, b + n, kSky);
    }
  }

  // Building silhouettes, bases on the sidewalk line.
  for (int i = 0; i < spec.counts.buildings; ++i) {
    const int bw = std::max(4, static_cast<int>(std::lround(rng.uniform(0.12, 0.28) * W)));
    const int x0 = rng.uniform_int(-bw / 3, W - 1 - (2 * bw) / 3);
    const int top = rng.uniform_int(std::max(1, H / 20), std::max(2, l.horizon - 2));
    const float base_r = 0.40f + static_cast<float>(rng.uniform(-0.10, 0.12));
    const float base_g = base_r - 0.04f + static_cast<float>(rng.uniform(-0.03, 0.03));
    const float base_b = base_r - 0.07f + static_cast<float>(rng.uniform(-0.03, 0.03));
    const int win_py = std::max(3, H / 18), win_px = std::max(3, W / 22);
    for (int y = top; y < l.sidewalk_top; ++y)
      for (int x = std::max(0, x0); x < std::min(W, x0 + bw); ++x) {
        const bool window = ((y - top) % win_py) < win_py / 2 && ((x - x0) % win_px) < win_px / 2 &&
                            y > top + 1 && x > x0 && x < x0 + bw - 1;
        const float n = static_cast<float>(rng.uniform(-0.02, 0.02));
        const float k = window ? 0.55f : 1.0f;
        p.put(y, x, base_r * k + n, base_g * k + n, base_b * k + n, kBuilding);
      }
  }

  // Vegetation blobs hugging the horizon.
  const int veg_blobs = 2 + rng.uniform_int(0, 3);
  for (int i = 0; i < veg_blobs; ++i) {
    const int cy = rng.uniform_int(std::max(1, l.horizon - H / 16), l.sidewalk_top - 1);
    const int cx = rng.uniform_int(0, W - 1);
    const int ry = std::max(2, static_cast<int>(std::lround(rng.uniform(0.04, 0.09) * H)));
    const int rx = std::max(3, static_cast<int>(std::lround(rng.uniform(0.05, 0.12) * W)));
    const float g0 = 0.42f + static_cast<float>(rng.uniform(-0.08, 0.08));
    for (int y = cy - ry; y <= cy + ry; ++y)
      for (int x = cx - rx; x <= cx + rx; ++x) {
        const double dy = double(y - cy) / ry, dx = double(x - cx) / rx;
        const double edge = rng.uniform(0.0, 0.30);
        if (dy * dy + dx * dx > 1.0 - edge) continue;
        const float n = static_cast<float>(rng.uniform(-0.05, 0.05));
        p.put(y, x, 0.18f + n, g0 + n, 0.14f + n, kVegetation);
      }
  }

  // Road band with center dashes.
  for (int y = l.road_top; y < H; ++y) {
    const float t = static_cast<float>(y - l.road_top) / static_cast<float>(std::max(1, H - l.road_top));
    for (int x = 0; x < W; ++x) {
      const float n = static_cast<float>(rng.uniform(-0.015, 0.015));
      const float shade = 0.26f + 0.05f * t;
      p.put(y, x, shade + n, shade + n, shade + 0.02f + n, kRoad);
    }
  }
  for (int y = l.road_top; y < H; ++y) {
    if ((y / 2) % 2 == 0) continue;  // dashed
    for (int x = W / 2 - 1; x <= W / 2; ++x)
      if (s.mask.at(y, x) == kRoad) {
        const float n = static_cast<float>(rng.uniform(-0.02, 0.02));
        p.put(y, x, 0.70f + n, 0.68f + n, 0.55f + n, kRoad);
      }
  }

  // Sidewalk strip between road and the background band.
  for (int y = l.sidewalk_top; y < l.road_top; ++y)
    for (int x = 0; x < W; ++x) {
      const float seam = (x % std::max(4, W / 10)) == 0 ? -0.06f : 0.f;
      const float n = static_cast<float>(rng.uniform(-0.02, 0.02));
      p.put(y, x, 0.62f + seam + n, 0.60f + seam + n, 0.57f + seam + n, kSidewalk);
    }

  // Poles on the sidewalk.
  const int pole_w = std::max(1, W / 90);
  for (int i = 0; i < spec.counts.poles; ++i) {
    const int x = rng.uniform_int(1, W - 2);
    const int base = rng.uniform_int(l.sidewalk_top, l.road_top - 1);
    const int h = static_cast<int>(std::lround(rng.uniform(0.18, 0.32) * H));
    p.rect(std::max(0, base - h), base + 1, x, x + pole_w, 0.42f, 0.42f, 0.45f, kPole, rng, 0.012f);
  }

  // Traffic lights: hanging housings with one lit lamp.
  for (int i = 0; i < spec.counts.traffic_lights; ++i) {
    const int bw = std::max(2, static_cast<int>(std::lround(0.028 * W)));
    const int bh = std::max(3, (bw * 9) / 5);
    const int cx = rng.uniform_int(bw, W - 1 - bw);
    const int top = rng.uniform_int(std::max(1, l.horizon - H / 10),
                                    std::max(2, l.sidewalk_top - bh - 1));
    p.rect(top, top + bh, cx - bw / 2, cx - bw / 2 + bw, 0.13f, 0.13f, 0.14f, kLight, rng, 0.01f);
    const int lamp = rng.uniform_int(0, 2);  // red / amber / green
    const float lr = lamp == 0 ? 0.95f : (lamp == 1 ? 0.98f : 0.15f);
    const float lg = lamp == 0 ? 0.15f : (lamp == 1 ? 0.75f : 0.90f);
    const int ly = top + 1 + (lamp * std::max(1, bh - 2)) / 3;
    p.disc(ly, cx, std::max(1, bw / 3), lr, lg, 0.10f, kLight, rng, 0.f);
    lights.push_back({ly, cx});
  }

  // Traffic signs: small plates in the same band.
  for (int i = 0; i < spec.counts.traffic_signs; ++i) {
    const int sw = std::max(2, static_cast<int>(std::lround(0.032 * W)));
    const int cx = rng.uniform_int(sw, W - 1 - sw);
    const int cy = rng.uniform_int(std::max(1, l.horizon - H / 12), std::max(2, l.sidewalk_top - 2));
    const bool diamond = rng.coin(0.5);
    const bool red = rng.coin(0.5);
    const float r = red ? 0.82f : 0.12f, g = red ? 0.14f : 0.25f, b = red ? 0.12f : 0.80f;
    for (int y = cy - sw; y <= cy + sw; ++y)
      for (int x = cx - sw; x <= cx + sw; ++x) {
        const int dy = std::abs(y - cy), dx = std::abs(x - cx);
        if (diamond ? (dy + dx > sw) : (dy > (3 * sw) / 4 || dx > (3 * sw) / 4)) continue;
        const bool inner = diamond ? (dy + dx <= sw / 2) : (dy <= sw / 3 && dx <= sw / 3);
        const float n = static_cast<float>(rng.uniform(-0.02, 0.02));
        if (inner)
          p.put(y, x, 0.92f + n, 0.92f + n, 0.90f + n, kSign);
        else
          p.put(y, x, r + n, g + n, b + n, kSign);
      }
  }

  // Persons on the sidewalk.
  constexpr float kClothes[][3] = {{0.75f, 0.20f, 0.20f}, {0.20f, 0.30f, 0.70f},
                                   {0.20f, 0.55f, 0.30f}, {0.65f, 0.55f, 0.20f},
                                   {0.45f, 0.25f, 0.55f}};
  for (int i = 0; i < spec.counts.persons; ++i) {
    const int foot = rng.uniform_int(l.sidewalk_top + 1, l.road_top - 1);
    const int ph = std::max(4, static_cast<int>(std::lround(rng.uniform(0.10, 0.16) * H)));
    const int pw = std::max(2, (3 * ph) / 10);
    const int x = rng.uniform_int(pw, W - 1 - pw);
    const auto& c = kClothes[static_cast<std::size_t>(rng.uniform_int(0, 4))];
    p.rect(foot - (2 * ph) / 3, foot + 1, x - pw / 2, x - pw / 2 + pw, c[0], c[1], c[2], kPerson,
           rng, 0.02f);
    p.disc(foot - (2 * ph) / 3 - ph / 6, x, std::max(1, ph / 6), 0.85f, 0.70f, 0.60f, kPerson, rng,
           0.015f);
  }

  // Cars on the road, nearer ones bigger.
  constexpr float kBodies[][3] = {{0.72f, 0.12f, 0.12f}, {0.15f, 0.25f, 0.65f},
                                  {0.80f, 0.80f, 0.82f}, {0.15f, 0.15f, 0.17f},
                                  {0.55f, 0.57f, 0.60f}};
  for (int i = 0; i < spec.counts.cars; ++i) {
    const int foot = rng.uniform_int(l.road_top + 1, H - 2);
    const float t = static_cast<float>(foot - l.road_top) / static_cast<float>(std::max(1, H - l.road_top));
    const int cl = std::max(6, static_cast<int>(std::lround((0.10 + 0.16 * t) * W)));
    const int ch = std::max(3, (2 * cl) / 5);
    const int x0 = rng.uniform_int(0, std::max(0, W - 1 - cl));
    const auto& c = kBodies[static_cast<std::size_t>(rng.uniform_int(0, 4))];
    p.rect(foot - ch, foot + 1, x0, x0 + cl, c[0], c[1], c[2], kCar, rng, 0.02f);
    // Cabin with darker glass.
    p.rect(foot - ch, foot - ch + std::max(1, ch / 3), x0 + cl / 5, x0 + cl - cl / 5, 0.18f, 0.22f,
           0.28f, kCar, rng, 0.015f);
    const int wr = std::max(1, cl / 9);
    p.disc(foot, x0 + cl / 5, wr, 0.06f, 0.06f, 0.07f, kCar, rng, 0.01f);
    p.disc(foot, x0 + cl - cl / 5, wr, 0.06f, 0.06f, 0.07f, kCar, rng, 0.01f);
  }

  s.image = apply_weather(s.image, s.mask, spec.weather, spec.severity, rng);
  s.image = apply_time(s.image, spec.time, rng, lights, spec.night_lum_lo, spec.night_lum_hi,
                       spec.light_skip_prob);
  quantize8_inplace(s.image);

  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "scene_%016llx",
                static_cast<unsigned long long>(spec.seed));
  s.id = idbuf;
  s.weather = spec.weather;
  s.time = spec.time;
  s.domain = (spec.weather == WeatherCondition::Normal && spec.time == TimeOfDay::Day)
                 ? DomainTag::StandardReal
                 : DomainTag::AdverseSynthetic;
  return s;
}

/// Generates plan.count samples with per-sample seeds derived from the master
/// seed, so the output bytes depend only on the plan.
inline std::vector<LabeledSample> generate_samples(const GenerationPlan& plan) {
  plan.validate();
  std::vector<LabeledSample> samples;
  samples.reserve(static_cast<std::size_t>(plan.count));
  for (int i = 0; i < plan.count; ++i) {
    const std::uint64_t seed_i = derive_seed(plan.master_seed, static_cast<std::uint64_t>(i));
    Rng attr(seed_i);
    SceneSpec spec;
    spec.seed = derive_seed(seed_i, 1);
    spec.weather = static_cast<WeatherCondition>(
        attr.weighted_index(plan.weather_weights.data(), kNumWeather));
    spec.time = static_cast<TimeOfDay>(attr.weighted_index(plan.time_weights.data(), kNumTime));
    spec.severity = attr.uniform(plan.severity_lo, plan.severity_hi);
    spec.counts = plan.counts;
    spec.height = plan.height;
    spec.width = plan.width;
    spec.horizon_frac = plan.horizon_frac;
    spec.road_frac = plan.road_frac;
    LabeledSample s = generate_scene(spec);
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "%06d", i);
    s.id = idbuf;
    samples.push_back(std::move(s));
  }
  return samples;
}

inline DatasetManifest generate_dataset(const GenerationPlan& plan, const std::string& out_root) {
  return save_dataset(generate_samples(plan), out_root);
}

}  // namespace advseg
