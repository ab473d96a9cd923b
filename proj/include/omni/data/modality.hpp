#pragma once

#include <array>
#include <string>

#include "omni/core/error.hpp"

namespace omni {

enum class Modality : uint8_t {
  Image = 0,
  Video = 1,
  Audio = 2,
  Point = 3,
  Depth = 4,
  Normal = 5,
  Imu = 6,
  Fmri = 7,
};

inline constexpr std::array<Modality, 8> kAllModalities = {
    Modality::Image, Modality::Video, Modality::Audio, Modality::Point,
    Modality::Depth, Modality::Normal, Modality::Imu,  Modality::Fmri,
};

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Video: return "video";
    case Modality::Audio: return "audio";
    case Modality::Point: return "point";
    case Modality::Depth: return "depth";
    case Modality::Normal: return "normal";
    case Modality::Imu: return "imu";
    case Modality::Fmri: return "fmri";
  }
  throw ArgError("bad modality tag " + std::to_string(static_cast<int>(m)));
}

// Noun used inside the captioning prompt ("... for the provided {phrase}.").
// IMU and fMRI never use this form; they have dedicated prompt templates.
inline const char* modality_phrase(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::Video: return "video";
    case Modality::Audio: return "audio";
    case Modality::Point: return "point cloud";
    case Modality::Depth: return "depth map";
    case Modality::Normal: return "normal map";
    default:
      throw ArgError(std::string("no caption phrase for modality ") +
                     modality_name(m));
  }
}

inline Modality modality_from_name(const std::string& s) {
  for (Modality m : kAllModalities)
    if (s == modality_name(m)) return m;
  throw ArgError("unknown modality '" + s + "'");
}

}  // namespace omni
