#ifndef ASTFOCUS_SYNTHETIC_HPP_
#define ASTFOCUS_SYNTHETIC_HPP_

#include <cstdint>
#include <vector>

#include "astfocus/attack.hpp"
#include "astfocus/oracle.hpp"
#include "astfocus/tensor.hpp"

namespace astfocus {

// Moving-rectangle toy suite. Every clip shows a bright square drifting along
// one seeded trajectory over a smooth background. Class c is identified by a
// +-1 texture P_c painted on the square: template c carries it with
// amplitude `texture`, a clip of class y carries P_y with an amplitude drawn
// from [signal_min, signal_max].
struct SuiteSpec {
  int videos = 20;
  int classes = 5;
  int frames = 16;
  int height = 32;
  int width = 32;
  int object_size = 8;
  double speed = 0.5;  // pixels per frame
  double texture = 0.25;
  double signal_min = 0.03;
  double signal_max = 0.03;
  double noise = 0.01;
  double beta = 0.05;
  std::uint64_t seed = 0;
};

struct ToySuite {
  SuiteSpec spec;
  std::vector<Video> templates;
  std::vector<BenchItem> items;
  // Top-left corner of the square in every frame.
  std::vector<PatchRect> trajectory;

  TemplateOracle oracle() const { return TemplateOracle(templates, spec.beta); }
};

ToySuite make_toy_suite(const SuiteSpec& spec);

// Attack settings sized for 32x32 toy clips.
AttackConfig toy_attack_config();

}  // namespace astfocus

#endif  // ASTFOCUS_SYNTHETIC_HPP_
