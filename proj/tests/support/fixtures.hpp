#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zsdgen/detector.hpp"
#include "zsdgen/metrics.hpp"
#include "zsdgen/models.hpp"
#include "zsdgen/numerics.hpp"

namespace fixture {

// Ids 1..S seen, S+1..S+U unseen, Gaussian vectors.
zsdgen::SemanticTable random_table(std::size_t dim, std::size_t seen, std::size_t unseen,
                                   zsdgen::RandomStream& rs);

zsdgen::Box random_box(zsdgen::RandomStream& rs, double image = 60.0, double min_side = 4.0,
                       double max_side = 25.0);

// Scores on a coarse grid so that ties occur.
std::vector<zsdgen::Detection> random_detections(zsdgen::RandomStream& rs, std::size_t n, int image_id,
                                                 std::vector<int> classes);

std::vector<zsdgen::GroundTruth> random_ground_truths(zsdgen::RandomStream& rs, std::size_t n, int image_id,
                                                      std::vector<int> classes);

// Detection near a ground truth so matches are plentiful.
zsdgen::Detection detection_near(const zsdgen::GroundTruth& gt, zsdgen::RandomStream& rs);

zsdgen::Vector random_vector(zsdgen::RandomStream& rs, std::size_t n, double scale = 1.0);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace fixture
