#include "redstore/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "redstore/image.hpp"
#include "redstore/rng.hpp"

namespace redstore {

const std::vector<std::string>& default_categories() {
  static const std::vector<std::string> cats = {"sweater", "pants", "golf-bag"};
  return cats;
}

DatasetSpec default_dataset_spec() {
  DatasetSpec spec;
  spec.categories = default_categories();
  spec.per_category = 2000;
  return spec;
}

namespace {

struct Vec2 {
  double x, y;
};

double sdf_box(Vec2 p, Vec2 c, Vec2 h) {
  const double qx = std::abs(p.x - c.x) - h.x;
  const double qy = std::abs(p.y - c.y) - h.y;
  const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

double sdf_circle(Vec2 p, Vec2 c, double r) {
  const double dx = p.x - c.x, dy = p.y - c.y;
  return std::sqrt(dx * dx + dy * dy) - r;
}

double sdf_segment(Vec2 p, Vec2 a, Vec2 b, double w) {
  const double bax = b.x - a.x, bay = b.y - a.y;
  const double pax = p.x - a.x, pay = p.y - a.y;
  double t = (pax * bax + pay * bay) / (bax * bax + bay * bay);
  t = std::clamp(t, 0.0, 1.0);
  const double dx = pax - t * bax, dy = pay - t * bay;
  return std::sqrt(dx * dx + dy * dy) - w;
}

// main silhouette and a darker accent region, as signed distances
struct Silhouette {
  double body;
  double accent;
};

Silhouette sweater_sdf(Vec2 p) {
  const double torso = sdf_box(p, {0.50, 0.58}, {0.17, 0.24});
  const double arms = sdf_box(p, {0.50, 0.43}, {0.33, 0.075});
  const double collar = sdf_circle(p, {0.50, 0.33}, 0.055);
  double body = std::min(torso, arms);
  body = std::max(body, -collar);  // notch
  const double hem = sdf_box(p, {0.50, 0.80}, {0.17, 0.025});
  return {body, std::max(hem, body)};
}

Silhouette pants_sdf(Vec2 p) {
  const double waist = sdf_box(p, {0.50, 0.33}, {0.185, 0.055});
  const double left = sdf_box(p, {0.415, 0.60}, {0.085, 0.275});
  const double right = sdf_box(p, {0.585, 0.60}, {0.085, 0.275});
  const double body = std::min(waist, std::min(left, right));
  return {body, std::max(waist, body)};
}

Silhouette golf_bag_sdf(Vec2 p) {
  const double bag = sdf_box(p, {0.46, 0.60}, {0.105, 0.27});
  const double rim = sdf_circle(p, {0.46, 0.33}, 0.105);
  const double club = sdf_segment(p, {0.52, 0.36}, {0.67, 0.13}, 0.016);
  const double head = sdf_circle(p, {0.675, 0.12}, 0.038);
  const double body = std::min(std::min(bag, rim), std::min(club, head));
  const double pocket = sdf_box(p, {0.46, 0.72}, {0.105, 0.055});
  return {body, std::max(pocket, bag)};
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

std::size_t category_id(const std::string& category) {
  const auto& cats = default_categories();
  for (std::size_t i = 0; i < cats.size(); ++i)
    if (cats[i] == category) return i;
  throw DomainError("unknown category: " + category);
}

}  // namespace

Tensor generate_product_image(const std::string& category, std::uint64_t seed, std::size_t dim) {
  const std::size_t cat = category_id(category);
  if (dim < 64) throw DomainError("generate_product_image: dims must be at least 64x64");

  Rng rng(mix64(seed ^ mix64(cat + 0xC0FFEE)));
  const double scale = rng.uniform(0.8, 1.2);
  const double tx = rng.uniform(-0.10, 0.10);
  const double ty = rng.uniform(-0.10, 0.10);
  const double hue = rng.uniform();
  const double sat = rng.uniform(0.55, 0.95);
  const double val = rng.uniform(0.45, 0.95);
  const double bg_gray = rng.uniform(0.72, 0.92);
  const double noise_amp = rng.uniform(0.02, 0.07);

  double body_rgb[3], accent_rgb[3];
  hsv_to_rgb(hue, sat, val, body_rgb);
  for (int c = 0; c < 3; ++c) accent_rgb[c] = body_rgb[c] * 0.55;

  const double soft = 2.0 / 192.0;  // anti-alias width in normalized units
  Tensor image = Tensor::zeros({3, dim, dim});
  double* px = image.data.data();
  const std::size_t plane = dim * dim;

  for (std::size_t y = 0; y < dim; ++y)
    for (std::size_t x = 0; x < dim; ++x) {
      const Vec2 p{(static_cast<double>(x) + 0.5) / static_cast<double>(dim),
                   (static_cast<double>(y) + 0.5) / static_cast<double>(dim)};
      const Vec2 q{(p.x - 0.5 - tx) / scale + 0.5, (p.y - 0.5 - ty) / scale + 0.5};
      Silhouette s{1.0, 1.0};
      switch (cat) {
        case 0: s = sweater_sdf(q); break;
        case 1: s = pants_sdf(q); break;
        default: s = golf_bag_sdf(q); break;
      }
      const double cov = std::clamp(0.5 - s.body / soft, 0.0, 1.0);
      const double acc = std::clamp(0.5 - s.accent / soft, 0.0, 1.0);
      const std::size_t i = y * dim + x;
      for (std::size_t c = 0; c < 3; ++c) {
        const double bg = bg_gray + noise_amp * (2.0 * rng.uniform() - 1.0);
        const double shape = body_rgb[c] * (1.0 - acc) + accent_rgb[c] * acc;
        px[c * plane + i] = std::clamp(bg * (1.0 - cov) + shape * cov, 0.0, 1.0);
      }
    }
  return quantize_pixels(image);
}

DatasetSample dataset_sample(const DatasetSpec& spec, std::uint64_t seed, std::size_t index,
                             std::size_t dim) {
  if (spec.categories.empty()) throw DomainError("dataset: no categories");
  const std::size_t label = index % spec.categories.size();
  const std::uint64_t image_seed = derive_seed(seed, index);
  return {generate_product_image(spec.categories[label], image_seed, dim), label};
}

}  // namespace redstore
