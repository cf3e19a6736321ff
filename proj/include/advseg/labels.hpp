// SPDX-License-Identifier: Apache-2.0
//
// The 10-class label schema: indices, display names, mask colors, and the
// weather / time-of-day / domain attributes carried by every sample.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "advseg/common.hpp"

namespace advseg {

inline constexpr int kNumClasses = 10;
inline constexpr std::uint8_t kIgnoreIndex = 255;

enum class SemanticClass : std::uint8_t {
  Road = 0,
  Sidewalk = 1,
  Building = 2,
  Pole = 3,
  TrafficLight = 4,
  TrafficSign = 5,
  Vegetation = 6,
  Sky = 7,
  Person = 8,
  Car = 9,
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Cityscapes color convention for the 10 retained classes.
inline constexpr std::array<Rgb, kNumClasses> kClassColors = {{
    {128, 64, 128},   // Road
    {244, 35, 232},   // Sidewalk
    {70, 70, 70},     // Building
    {153, 153, 153},  // Pole
    {250, 170, 30},   // TrafficLight
    {220, 220, 0},    // TrafficSign
    {107, 142, 35},   // Vegetation
    {70, 130, 180},   // Sky
    {220, 20, 60},    // Person
    {0, 0, 142},      // Car
}};

inline constexpr Rgb kIgnoreColor = {0, 0, 0};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Road",       "Sidewalk",    "Building", "Pole",   "TrafficLight",
    "TrafficSign", "Vegetation", "Sky",      "Person", "Car",
};

inline Rgb class_color(SemanticClass c) {
  return kClassColors[static_cast<int>(c)];
}

/// Color for a mask value: a class index 0..9 or the Ignore sentinel 255.
inline Rgb index_color(int index) {
  if (index == kIgnoreIndex) return kIgnoreColor;
  if (index < 0 || index >= kNumClasses)
    throw InvalidIndexError("invalid class index " + std::to_string(index));
  return kClassColors[static_cast<std::size_t>(index)];
}

/// Inverse palette lookup; -1 when no class (and not Ignore) owns the color.
inline int color_index(Rgb c) {
  if (c == kIgnoreColor) return kIgnoreIndex;
  for (int i = 0; i < kNumClasses; ++i)
    if (kClassColors[static_cast<std::size_t>(i)] == c) return i;
  return -1;
}

inline std::string_view class_name(SemanticClass c) {
  return kClassNames[static_cast<int>(c)];
}

// ---------------------------------------------------------------------------
// Sample attributes
// ---------------------------------------------------------------------------

enum class WeatherCondition : std::uint8_t { Normal = 0, Rain, Fog, Snow };
enum class TimeOfDay : std::uint8_t { Day = 0, Night };
enum class DomainTag : std::uint8_t { StandardReal = 0, AdverseSynthetic };

inline constexpr int kNumWeather = 4;
inline constexpr int kNumTime = 2;

inline std::string_view to_string(WeatherCondition w) {
  switch (w) {
    case WeatherCondition::Normal: return "normal";
    case WeatherCondition::Rain: return "rain";
    case WeatherCondition::Fog: return "fog";
    case WeatherCondition::Snow: return "snow";
  }
  throw Error("bad WeatherCondition");
}

inline std::string_view to_string(TimeOfDay t) {
  switch (t) {
    case TimeOfDay::Day: return "day";
    case TimeOfDay::Night: return "night";
  }
  throw Error("bad TimeOfDay");
}

inline std::string_view to_string(DomainTag d) {
  switch (d) {
    case DomainTag::StandardReal: return "standard_real";
    case DomainTag::AdverseSynthetic: return "adverse_synthetic";
  }
  throw Error("bad DomainTag");
}

inline WeatherCondition weather_from_string(std::string_view s) {
  if (s == "normal") return WeatherCondition::Normal;
  if (s == "rain") return WeatherCondition::Rain;
  if (s == "fog") return WeatherCondition::Fog;
  if (s == "snow") return WeatherCondition::Snow;
  throw ConfigError("unknown weather condition \"" + std::string(s) + "\"");
}

inline TimeOfDay time_from_string(std::string_view s) {
  if (s == "day") return TimeOfDay::Day;
  if (s == "night") return TimeOfDay::Night;
  throw ConfigError("unknown time of day \"" + std::string(s) + "\"");
}

inline DomainTag domain_from_string(std::string_view s) {
  if (s == "standard_real") return DomainTag::StandardReal;
  if (s == "adverse_synthetic") return DomainTag::AdverseSynthetic;
  throw ConfigError("unknown domain tag \"" + std::string(s) + "\"");
}

}  // namespace advseg
