#include "support/fixtures.hpp"

#include <unistd.h>

#include <cmath>

namespace fixture {

using namespace zsdgen;

SemanticTable random_table(std::size_t dim, std::size_t seen, std::size_t unseen, RandomStream& rs) {
  std::vector<ClassEntry> s, u;
  for (std::size_t i = 0; i < seen; ++i) {
    s.push_back({static_cast<int>(i + 1), "seen" + std::to_string(i + 1), sample_gaussian(rs, dim)});
  }
  for (std::size_t i = 0; i < unseen; ++i) {
    const int id = static_cast<int>(seen + i + 1);
    u.push_back({id, "unseen" + std::to_string(id), sample_gaussian(rs, dim)});
  }
  return SemanticTable(dim, std::move(s), std::move(u));
}

Box random_box(RandomStream& rs, double image, double min_side, double max_side) {
  const double w = rs.uniform(min_side, max_side);
  const double h = rs.uniform(min_side, max_side);
  const double x = rs.uniform(0.0, image - w);
  const double y = rs.uniform(0.0, image - h);
  return {x, y, x + w, y + h};
}

std::vector<Detection> random_detections(RandomStream& rs, std::size_t n, int image_id, std::vector<int> classes) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double score = 0.05 * static_cast<double>(1 + rs.index(20));
    out.push_back({image_id, random_box(rs), classes[rs.index(classes.size())], score});
  }
  return out;
}

std::vector<GroundTruth> random_ground_truths(RandomStream& rs, std::size_t n, int image_id,
                                              std::vector<int> classes) {
  std::vector<GroundTruth> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({image_id, random_box(rs), classes[rs.index(classes.size())]});
  return out;
}

Detection detection_near(const GroundTruth& gt, RandomStream& rs) {
  const double w = gt.box.width();
  const double h = gt.box.height();
  Box b{gt.box.x1 + rs.uniform(-0.3, 0.3) * w, gt.box.y1 + rs.uniform(-0.3, 0.3) * h,
        gt.box.x2 + rs.uniform(-0.3, 0.3) * w, gt.box.y2 + rs.uniform(-0.3, 0.3) * h};
  if (!b.valid()) b = gt.box;
  return {gt.image_id, b, gt.class_id, 0.05 * static_cast<double>(1 + rs.index(20))};
}

Vector random_vector(RandomStream& rs, std::size_t n, double scale) {
  Vector v = sample_gaussian(rs, n);
  for (double& x : v) x *= scale;
  return v;
}

std::filesystem::path temp_dir(const std::string& name) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("zsdgen_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
