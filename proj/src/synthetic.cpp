#include "astfocus/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "astfocus/error.hpp"

namespace astfocus {

namespace {

constexpr double kObjectLevel = 0.72;
constexpr double kBackgroundLevel = 0.35;

std::vector<PatchRect> make_trajectory(const SuiteSpec& s, Rng& rng) {
  const double max_r = s.height - s.object_size;
  const double max_c = s.width - s.object_size;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = max_r * (0.25 + 0.5 * u(rng));
  double c = max_c * (0.25 + 0.5 * u(rng));
  const double angle = 2.0 * std::numbers::pi * u(rng);
  double vr = s.speed * std::sin(angle);
  double vc = s.speed * std::cos(angle);
  std::vector<PatchRect> out;
  for (int f = 0; f < s.frames; ++f) {
    out.push_back({static_cast<int>(std::lround(r)), static_cast<int>(std::lround(c)),
                   s.object_size, s.object_size});
    if (r + vr < 0.0 || r + vr > max_r) vr = -vr;
    if (c + vc < 0.0 || c + vc > max_c) vc = -vc;
    r += vr;
    c += vc;
  }
  return out;
}

// Balanced +-1 texture per frame and channel in object coordinates.
std::vector<double> make_texture(const SuiteSpec& s, Rng& rng) {
  const std::size_t per = static_cast<std::size_t>(s.object_size) * s.object_size;
  std::vector<double> tex;
  tex.reserve(per * s.frames * kChannels);
  std::vector<double> plane(per);
  for (int f = 0; f < s.frames; ++f) {
    for (int ch = 0; ch < kChannels; ++ch) {
      for (std::size_t i = 0; i < per; ++i) plane[i] = i < per / 2 ? 1.0 : -1.0;
      std::shuffle(plane.begin(), plane.end(), rng);
      tex.insert(tex.end(), plane.begin(), plane.end());
    }
  }
  return tex;
}

struct Background {
  double level[kChannels];
  double fr, fc, phase;

  double at(int row, int col, int ch, const SuiteSpec& s) const {
    return level[ch] + 0.06 * std::sin(2.0 * std::numbers::pi *
                                           (fr * row / s.height + fc * col / s.width) +
                                       phase + ch);
  }
};

std::vector<double> render(const SuiteSpec& s, const Background& bg,
                           const std::vector<PatchRect>& traj, const std::vector<double>& tex,
                           double amplitude) {
  const VideoShape shape{s.frames, s.height, s.width};
  std::vector<double> data(shape.size());
  const std::size_t per = static_cast<std::size_t>(s.object_size) * s.object_size;
  for (int f = 0; f < s.frames; ++f) {
    const PatchRect& obj = traj[static_cast<std::size_t>(f)];
    for (int r = 0; r < s.height; ++r) {
      for (int c = 0; c < s.width; ++c) {
        for (int ch = 0; ch < kChannels; ++ch) {
          double v = bg.at(r, c, ch, s);
          if (obj.contains(r, c)) {
            const std::size_t local = static_cast<std::size_t>(r - obj.top) * s.object_size +
                                      static_cast<std::size_t>(c - obj.left);
            v = kObjectLevel + amplitude * tex[(static_cast<std::size_t>(f) * kChannels + ch) * per + local];
          }
          data[shape.index(f, r, c, ch)] = v;
        }
      }
    }
  }
  return data;
}

}  // namespace

ToySuite make_toy_suite(const SuiteSpec& s) {
  if (s.videos < 1 || s.classes < 2 || s.frames < 1 || s.object_size < 1 ||
      s.object_size > std::min(s.height, s.width)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid toy suite spec");
  }
  if (!(s.signal_min >= 0.0 && s.signal_min <= s.signal_max) || s.texture < 0.0 || s.noise < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid toy suite amplitudes");
  }
  Rng rng(s.seed);
  ToySuite suite;
  suite.spec = s;
  suite.trajectory = make_trajectory(s, rng);

  std::vector<std::vector<double>> textures;
  for (int c = 0; c < s.classes; ++c) textures.push_back(make_texture(s, rng));

  const VideoShape shape{s.frames, s.height, s.width};
  const Background canonical{{kBackgroundLevel, kBackgroundLevel, kBackgroundLevel}, 1.0, 1.0, 0.0};
  for (int c = 0; c < s.classes; ++c) {
    auto data = render(s, canonical, suite.trajectory, textures[static_cast<std::size_t>(c)], s.texture);
    for (double& v : data) v = std::clamp(v, 0.0, 1.0);
    suite.templates.emplace_back(shape, std::move(data));
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < s.videos; ++k) {
    const int label = k % s.classes;
    Background bg{};
    for (double& l : bg.level) l = kBackgroundLevel + 0.1 * (u(rng) - 0.5);
    bg.fr = 0.5 + u(rng);
    bg.fc = 0.5 + u(rng);
    bg.phase = 2.0 * std::numbers::pi * u(rng);
    const double amplitude = s.signal_min + (s.signal_max - s.signal_min) * u(rng);
    auto data = render(s, bg, suite.trajectory, textures[static_cast<std::size_t>(label)], amplitude);
    for (double& v : data) v = std::clamp(v + s.noise * noise(rng), 0.0, 1.0);
    suite.items.push_back({Video(shape, std::move(data)), label});
  }
  return suite;
}

AttackConfig toy_attack_config() {
  AttackConfig c;
  c.patch_height = 14;
  c.patch_width = 14;
  c.stride = 4;
  c.ppo.learning_rate = 0.02;
  c.ppo.critic_learning_rate = 0.01;
  return c;
}

}  // namespace astfocus
