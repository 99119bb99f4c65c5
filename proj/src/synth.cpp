#include "edgeseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "edgeseg/errors.hpp"
#include "edgeseg/png_io.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int luma(const std::uint8_t* c) { return (299 * c[0] + 587 * c[1] + 114 * c[2] + 500) / 1000; }

void random_color(Rng& rng, std::uint8_t* c) {
  for (int i = 0; i < 3; ++i) c[i] = static_cast<std::uint8_t>(rng.below(256));
}

/// Colour whose luma differs from `against` by at least `gap`.
void contrasting_color(Rng& rng, int against, int gap, std::uint8_t* c) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    random_color(rng, c);
    if (std::abs(luma(c) - against) >= gap) return;
  }
  const std::uint8_t v = against < 128 ? 255 : 0;
  c[0] = c[1] = c[2] = v;
}

struct Background {
  std::uint8_t from[3], to[3];
  double dx = 0, dy = 0;  // unit gradient direction
};

void sample_color(const Background& bg, double t, std::uint8_t* out) {
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(bg.from[i] + (bg.to[i] - bg.from[i]) * t));
  }
}

double gradient_t(const Background& bg, const SynthConfig& cfg, double px, double py) {
  const double cx = cfg.width * 0.5, cy = cfg.height * 0.5;
  const double half = 0.5 * (std::abs(bg.dx) * cfg.width + std::abs(bg.dy) * cfg.height);
  const double t = 0.5 + ((px - cx) * bg.dx + (py - cy) * bg.dy) / (2.0 * half);
  return std::clamp(t, 0.0, 1.0);
}

void paint(ImageU8& img, Mask* mask, const Stroke& s) {
  int left, top, right, bottom;
  s.bounds(left, top, right, bottom);
  left = std::max(left, 0);
  top = std::max(top, 0);
  right = std::min(right, img.width - 1);
  bottom = std::min(bottom, img.height - 1);
  for (int y = top; y <= bottom; ++y) {
    for (int x = left; x <= right; ++x) {
      if (!s.covers(x + 0.5, y + 0.5)) continue;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = s.color[c];
      if (mask) mask->at(y, x) = 1;
    }
  }
}

Stroke make_stroke(Rng& rng, const SynthConfig& cfg, int gx, int gy, int size) {
  Stroke s;
  s.width = rng.range(cfg.min_stroke, cfg.max_stroke);
  const int w = static_cast<int>(s.width);
  switch (rng.below(3)) {
    case 0: {
      s.kind = Stroke::Kind::Bar;
      if (rng.coin(0.5)) {  // vertical
        s.x0 = gx + rng.range(0, std::max(0, size - w));
        s.x1 = s.x0 + w;
        s.y0 = gy + rng.range(0, size / 3);
        s.y1 = gy + size - rng.range(0, size / 3);
      } else {
        s.y0 = gy + rng.range(0, std::max(0, size - w));
        s.y1 = s.y0 + w;
        s.x0 = gx + rng.range(0, size / 3);
        s.x1 = gx + size - rng.range(0, size / 3);
      }
      break;
    }
    case 1: {
      s.kind = Stroke::Kind::Segment;
      s.ax = gx + rng.uniform(0, size);
      s.ay = gy + rng.uniform(0, size);
      s.bx = gx + rng.uniform(0, size);
      s.by = gy + rng.uniform(0, size);
      break;
    }
    default: {
      s.kind = Stroke::Kind::Arc;
      s.radius = rng.uniform(size * 0.25, size * 0.5);
      s.ax = gx + size * 0.5;
      s.ay = gy + size * 0.5;
      s.start = rng.uniform(0, kTwoPi);
      s.span = rng.uniform(0.5 * std::numbers::pi, kTwoPi);
      break;
    }
  }
  return s;
}

std::string file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.png", index);
  return buf;
}

}  // namespace

bool Stroke::covers(double px, double py) const {
  switch (kind) {
    case Kind::Bar:
      return px >= x0 && px < x1 && py >= y0 && py < y1;
    case Kind::Segment: {
      const double vx = bx - ax, vy = by - ay;
      const double len2 = vx * vx + vy * vy;
      double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
      return dx * dx + dy * dy <= 0.25 * width * width;
    }
    case Kind::Arc: {
      const double dx = px - ax, dy = py - ay;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (std::abs(d - radius) > 0.5 * width) return false;
      const double delta = std::fmod(std::atan2(dy, dx) - start + 2.0 * kTwoPi, kTwoPi);
      return delta <= span;
    }
  }
  return false;
}

void Stroke::bounds(int& left, int& top, int& right, int& bottom) const {
  switch (kind) {
    case Kind::Bar:
      left = x0, top = y0, right = x1 - 1, bottom = y1 - 1;
      return;
    case Kind::Segment: {
      const double r = 0.5 * width;
      left = static_cast<int>(std::floor(std::min(ax, bx) - r - 1));
      right = static_cast<int>(std::ceil(std::max(ax, bx) + r));
      top = static_cast<int>(std::floor(std::min(ay, by) - r - 1));
      bottom = static_cast<int>(std::ceil(std::max(ay, by) + r));
      return;
    }
    case Kind::Arc: {
      const double r = radius + 0.5 * width;
      left = static_cast<int>(std::floor(ax - r - 1));
      right = static_cast<int>(std::ceil(ax + r));
      top = static_cast<int>(std::floor(ay - r - 1));
      bottom = static_cast<int>(std::ceil(ay + r));
      return;
    }
  }
}

std::uint64_t sample_seed(const SynthConfig& cfg, std::uint64_t index) {
  return stream_seed(cfg.seed, "synth", index);
}

Sample synth_sample(const SynthConfig& cfg, std::uint64_t index) {
  cfg.validate();
  Sample out;
  out.seed = sample_seed(cfg, index);
  Rng rng(out.seed);
  ImageU8 img(cfg.height, cfg.width, 3);
  Mask text(cfg.height, cfg.width);

  Background bg;
  random_color(rng, bg.from);
  if (cfg.gradient_background) {
    random_color(rng, bg.to);
    const double angle = rng.uniform(0, kTwoPi);
    bg.dx = std::cos(angle);
    bg.dy = std::sin(angle);
  } else {
    std::copy_n(bg.from, 3, bg.to);
  }
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double t = cfg.gradient_background ? gradient_t(bg, cfg, x + 0.5, y + 0.5) : 0.0;
      sample_color(bg, t, &img.at(y, x));
    }
  }

  // Distractors: non-text shapes that still produce strong Canny edges.
  if (cfg.shape_background) {
    const int shapes = rng.range(0, cfg.max_shapes);
    for (int i = 0; i < shapes; ++i) {
      Stroke s;
      random_color(rng, s.color);
      if (rng.coin(0.5)) {
        s.kind = Stroke::Kind::Bar;
        s.x0 = rng.range(-8, cfg.width - 4);
        s.y0 = rng.range(-8, cfg.height - 4);
        s.x1 = s.x0 + rng.range(8, std::max(8, cfg.width / 2));
        s.y1 = s.y0 + rng.range(8, std::max(8, cfg.height / 2));
      } else {
        s.kind = Stroke::Kind::Arc;
        s.ax = rng.uniform(0, cfg.width);
        s.ay = rng.uniform(0, cfg.height);
        s.width = rng.uniform(6, std::max(6.0, cfg.width / 3.0));
        s.radius = 0.5 * s.width;  // a filled disc
        s.start = 0;
        s.span = kTwoPi;
      }
      paint(img, nullptr, s);
    }
  }

  out.glyph_count = rng.range(cfg.min_glyphs, cfg.max_glyphs);
  const int max_size = std::max(6, std::min(cfg.height, cfg.width) / 3);
  const int min_size = std::max(5, max_size / 2);
  for (int g = 0; g < out.glyph_count; ++g) {
    const int size = rng.range(min_size, max_size);
    const int gx = rng.range(0, cfg.width - size);
    const int gy = rng.range(0, cfg.height - size);
    const std::uint8_t* under = &img.at(gy + size / 2, gx + size / 2);
    std::uint8_t color[3];
    contrasting_color(rng, luma(under), 96, color);
    const int strokes = rng.range(1, 3);
    for (int k = 0; k < strokes; ++k) {
      Stroke s = make_stroke(rng, cfg, gx, gy, size);
      std::copy_n(color, 3, s.color);
      paint(img, &text, s);
      out.strokes.push_back(s);
    }
  }

  if (cfg.noise_background && cfg.noise_amplitude > 0) {
    const int a = cfg.noise_amplitude;
    for (auto& v : img.data) v = static_cast<std::uint8_t>(std::clamp(int(v) + rng.range(-a, a), 0, 255));
  }

  out.image = std::move(img);
  out.masks = MaskPair::from_text(std::move(text));
  return out;
}

std::vector<Sample> generate_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t first_index) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(cfg, first_index + i));
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "masks", "boxes"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string name = file_name(i);
    save_png(dir / "images" / name, samples[i].image);
    save_mask(dir / "masks" / name, samples[i].masks.text);
    save_mask(dir / "boxes" / name, samples[i].masks.area);
    manifest << i << ' ' << samples[i].seed << ' ' << samples[i].glyph_count << '\n';
  }
  if (!manifest) throw IoError("failed writing " + (dir / "manifest.txt").string());
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot read dataset manifest " + (dir / "manifest.txt").string());
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::size_t index;
    Sample s;
    if (!(is >> index >> s.seed >> s.glyph_count)) {
      throw IoError((dir / "manifest.txt").string() + ":" + std::to_string(line_no) + ": malformed record");
    }
    const std::string name = file_name(index);
    s.image = load_png(dir / "images" / name);
    s.masks.text = load_mask(dir / "masks" / name);
    s.masks.area = load_mask(dir / "boxes" / name);
    if (s.masks.text.height != s.image.height || s.masks.text.width != s.image.width) {
      throw IoError("mask size differs from image for " + name);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace edgeseg
