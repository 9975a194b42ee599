// Small phantom cases shared by several test files.
#pragma once

#include <string>
#include <vector>

#include "metsyn/phantom.hpp"
#include "metsyn/synthesis.hpp"

namespace fixture {

// 16x16x24 femur; keeps every test that trains or synthesizes quick.
inline metsyn::PhantomSpec micro_spec(std::uint64_t seed = 0) {
  metsyn::PhantomSpec s;
  s.dims = {16, 16, 24};
  s.shaft_radius_mm = 3.2;
  s.cortical_thickness_mm = 0.9;
  s.head_radius_mm = 4.5;
  s.bend_mm = 1.5;
  s.lesion_axis_mm = {1.7, 2.6};
  s.seed = seed;
  return s;
}

inline std::vector<metsyn::LabeledCase> donors(int n, std::uint64_t seed) {
  std::vector<metsyn::LabeledCase> out;
  for (int i = 0; i < n; ++i) {
    metsyn::Rng rng(metsyn::Rng::derive(seed, {1, static_cast<std::uint64_t>(i)}));
    auto f = metsyn::make_lesioned_femur(micro_spec(seed + 100 + static_cast<std::uint64_t>(i)), 1, rng);
    out.push_back({"p" + std::to_string(i), metsyn::standardize_intensities(f.image).volume, f.lesion});
  }
  return out;
}

inline std::vector<metsyn::LabeledCase> hosts(int n, std::uint64_t seed) {
  std::vector<metsyn::LabeledCase> out;
  for (int i = 0; i < n; ++i) {
    auto f = metsyn::make_healthy_femur(micro_spec(seed + 200 + static_cast<std::uint64_t>(i)));
    out.push_back({"h" + std::to_string(i), metsyn::standardize_intensities(f.image).volume, f.femur});
  }
  return out;
}

} // namespace fixture
