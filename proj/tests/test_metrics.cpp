#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "zsdgen/errors.hpp"
#include "zsdgen/metrics.hpp"

using namespace zsdgen;
using doctest::Approx;

namespace {

std::vector<Detection> by_score(std::vector<Detection> dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return dets;
}

// Mix of near-miss detections around ground truths and random clutter.
struct Scene {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
};

Scene random_scene(RandomStream& rs, std::size_t max_boxes, std::vector<int> classes, int images = 1) {
  Scene s;
  const std::size_t n_gt = 1 + rs.index(max_boxes / 2);
  for (std::size_t i = 0; i < n_gt; ++i) {
    const int image = static_cast<int>(rs.index(static_cast<std::size_t>(images)));
    auto g = fixture::random_ground_truths(rs, 1, image, classes);
    s.gts.push_back(g.front());
  }
  const std::size_t n_det = rs.index(max_boxes - n_gt + 1);
  for (std::size_t i = 0; i < n_det; ++i) {
    if (rs.uniform() < 0.7) {
      Detection d = fixture::detection_near(s.gts[rs.index(s.gts.size())], rs);
      if (rs.uniform() < 0.2) d.class_id = classes[rs.index(classes.size())];
      s.dets.push_back(d);
    } else {
      const int image = static_cast<int>(rs.index(static_cast<std::size_t>(images)));
      s.dets.push_back(fixture::random_detections(rs, 1, image, classes).front());
    }
  }
  s.dets = by_score(s.dets);
  return s;
}

std::vector<RankedFlag> ranked_from(const std::vector<bool>& flags, RandomStream& rs) {
  // strictly decreasing scores keep the given order
  std::vector<RankedFlag> out;
  double score = 1.0;
  for (bool f : flags) {
    score -= 0.001 + 0.01 * rs.uniform();
    out.push_back({score, f});
  }
  return out;
}

SemanticTable table_with(std::size_t seen, std::size_t unseen) {
  RandomStream rs(7);
  return fixture::random_table(4, seen, unseen, rs);
}

}  // namespace

TEST_CASE("matching examples") {
  const GroundTruth g{0, {10, 10, 30, 30}, 1};
  const Detection d{0, {10, 10, 30, 30}, 1, 0.9};
  CHECK(match_detections(std::vector{d}, std::vector{g}) == std::vector<bool>{true});

  const Detection d2{0, {10, 10, 30, 30}, 1, 0.8};
  CHECK(match_detections(std::vector{d, d2}, std::vector{g}) == std::vector<bool>{true, false});

  SUBCASE("class and image must agree") {
    const Detection other_class{0, {10, 10, 30, 30}, 2, 0.9};
    const Detection other_image{1, {10, 10, 30, 30}, 1, 0.9};
    CHECK(match_detections(std::vector{other_class, other_image}, std::vector{g}) ==
          std::vector<bool>{false, false});
  }
  SUBCASE("threshold is inclusive") {
    // contained box of half the area: IoU exactly 0.5
    const Detection half{0, {10, 10, 20, 30}, 1, 0.9};
    CHECK(iou(half.box, g.box) == 0.5);
    CHECK(match_detections(std::vector{half}, std::vector{g}, 0.5) == std::vector<bool>{true});
    CHECK(match_detections(std::vector{half}, std::vector{g}, 0.5000001) == std::vector<bool>{false});
  }
  SUBCASE("takes the best overlap, not the first") {
    const GroundTruth far{0, {14, 10, 34, 30}, 1};
    const GroundTruth near{0, {11, 10, 31, 30}, 1};
    const Detection a{0, {11, 10, 31, 30}, 1, 0.9};
    const Detection b{0, {14, 10, 34, 30}, 1, 0.8};
    CHECK(match_detections(std::vector{a, b}, std::vector{far, near}) == std::vector<bool>{true, true});
  }
}

TEST_CASE("matching agrees with exhaustive enumeration") {
  RandomStream rs(101);
  int compared = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const Scene s = random_scene(rs, 20, {1, 2}, 2);
    const auto expected = oracle::match_by_enumeration(s.dets, s.gts, 0.5);
    if (expected.empty() && !s.dets.empty()) continue;  // tie: greedy rule not unique
    CHECK(match_detections(s.dets, s.gts) == expected);
    CHECK(match_detections(s.dets, s.gts) == oracle::match(s.dets, s.gts, 0.5));
    ++compared;
  }
  CHECK(compared > 300);
}

TEST_CASE("every ground truth is matched at most once") {
  RandomStream rs(102);
  for (int trial = 0; trial < 200; ++trial) {
    const Scene s = random_scene(rs, 30, {1, 2, 3});
    const auto flags = match_detections(s.dets, s.gts);
    for (int c : {1, 2, 3}) {
      const auto tp = std::count_if(s.dets.begin(), s.dets.end(), [&](const Detection& d) {
        return d.class_id == c && flags[static_cast<std::size_t>(&d - s.dets.data())];
      });
      const auto n = std::count_if(s.gts.begin(), s.gts.end(), [&](const GroundTruth& g) { return g.class_id == c; });
      CHECK(tp <= n);
    }
  }
}

TEST_CASE("average precision examples") {
  CHECK(average_precision(std::vector<RankedFlag>{{0.9, true}}, 1) == 1.0);
  CHECK(average_precision(std::vector<RankedFlag>{{0.9, false}, {0.8, true}}, 1) == 0.5);
  CHECK(average_precision(std::vector<RankedFlag>{}, 3) == 0.0);
  // input order does not matter, ranking does
  CHECK(average_precision(std::vector<RankedFlag>{{0.8, true}, {0.9, false}}, 1) == 0.5);
  CHECK_THROWS_AS(average_precision(std::vector<RankedFlag>{{0.9, true}}, 0), ContractError);

  SUBCASE("envelope lifts an early dip") {
    // P/R: (1, 1/2) (1/2, 1/2) (2/3, 1) -> envelope 1 then 2/3
    const std::vector<RankedFlag> r{{0.9, true}, {0.8, false}, {0.7, true}};
    CHECK(average_precision(r, 2) == Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)).epsilon(1e-15));
  }
  SUBCASE("eleven point") {
    CHECK(average_precision(std::vector<RankedFlag>{{0.9, true}}, 1, ApMode::ElevenPoint) == Approx(1.0));
    CHECK(average_precision(std::vector<RankedFlag>{{0.9, false}, {0.8, true}}, 1, ApMode::ElevenPoint) ==
          Approx(0.5));
    // recall reaches 0.5 only: points 0..0.5 get precision 1, the rest 0
    CHECK(average_precision(std::vector<RankedFlag>{{0.9, true}}, 2, ApMode::ElevenPoint) == Approx(6.0 / 11.0));
  }
}

TEST_CASE("average precision agrees with the reference") {
  RandomStream rs(103);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = rs.index(25);
    std::vector<bool> flags(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      flags[i] = rs.uniform() < 0.5;
      tp += flags[i] ? 1 : 0;
    }
    const std::size_t n_gt = std::max<std::size_t>(1, tp + rs.index(4));
    const double got = average_precision(ranked_from(flags, rs), n_gt);
    CHECK(got == Approx(oracle::average_precision(flags, n_gt)).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("average precision properties") {
  RandomStream rs(104);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rs.index(20);
    std::vector<RankedFlag> r;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool f = rs.uniform() < 0.5;
      tp += f ? 1 : 0;
      r.push_back({0.05 * static_cast<double>(1 + rs.index(19)), f});
    }
    const std::size_t n_gt = tp + 1 + rs.index(3);
    const double base = average_precision(r, n_gt);

    double lowest = 1.0;
    for (const auto& x : r) lowest = std::min(lowest, x.score);

    auto with_fp = r;
    with_fp.push_back({lowest - 0.01, false});
    CHECK(average_precision(with_fp, n_gt) <= base);

    // a duplicate keeps its score and comes right after its original; it can only be a false positive
    std::vector<RankedFlag> dup;
    for (const auto& x : r) {
      dup.push_back(x);
      dup.push_back({x.score, false});
    }
    CHECK(average_precision(dup, n_gt) <= base + 1e-15);

    auto with_tp = r;
    with_tp.insert(with_tp.begin(), {2.0, true});
    CHECK(average_precision(with_tp, n_gt) >= base - 1e-15);
  }
}

TEST_CASE("mean ap") {
  CHECK(mean_ap({{3, 0.42}}, std::vector{3}) == 0.42);
  CHECK(mean_ap({{1, 1.0}, {2, 0.0}}, std::vector{1, 2}) == 0.5);
  CHECK(mean_ap({{1, 1.0}, {2, 0.0}, {5, 0.3}}, std::vector{1}) == 1.0);
  CHECK_THROWS_AS(mean_ap({{1, 1.0}}, std::vector<int>{}), ContractError);
  CHECK_THROWS_AS(mean_ap({{1, 1.0}}, std::vector{1, 2}), ContractError);

  RandomStream rs(105);
  std::map<int, double> aps;
  std::vector<int> classes;
  double sum = 0.0;
  for (int c = 1; c <= 15; ++c) {
    aps[c] = rs.uniform();
    sum += aps[c];
    classes.push_back(c);
  }
  CHECK(std::abs(mean_ap(aps, classes) - sum / 15.0) < 1e-12);
}

TEST_CASE("recall at k") {
  const std::vector<GroundTruth> gts{{0, {0, 0, 10, 10}, 1}, {0, {20, 20, 40, 40}, 2}, {1, {5, 5, 25, 25}, 1}};
  std::vector<Detection> exact;
  for (const auto& g : gts) exact.push_back({g.image_id, g.box, g.class_id, 0.99});
  CHECK(recall_at_k(exact, gts, 100) == 1.0);
  CHECK(recall_at_k(std::vector<Detection>{}, gts, 100) == 0.0);
  CHECK_THROWS_AS(recall_at_k(exact, gts, 0), ContractError);
  CHECK_THROWS_AS(recall_at_k(exact, std::vector<GroundTruth>{}, 10), ContractError);

  SUBCASE("k applies per image across classes") {
    // image 0 has two exact hits; a higher-scoring miss pushes one out at k = 2
    auto dets = exact;
    dets.push_back({0, {40, 0, 50, 10}, 1, 0.999});
    CHECK(recall_at_k(dets, gts, 2) == Approx(2.0 / 3.0));
    CHECK(recall_at_k(dets, gts, 3) == 1.0);
  }
}

TEST_CASE("recall at k agrees with the reference") {
  RandomStream rs(106);
  for (int trial = 0; trial < 500; ++trial) {
    const Scene s = random_scene(rs, 30, {1, 2, 3}, 3);
    const std::size_t k = 1 + rs.index(12);
    CHECK(recall_at_k(s.dets, s.gts, k) == Approx(oracle::recall_at_k(s.dets, s.gts, k, 0.5)).epsilon(1e-12));
  }
}

TEST_CASE("harmonic mean") {
  CHECK(std::abs(harmonic_mean(34.07, 12.40) - 18.18) < 0.01);
  CHECK(std::abs(harmonic_mean(36.90, 19.0) - 25.08) < 0.01);
  CHECK(std::abs(harmonic_mean(57.70, 53.90) - 55.74) < 0.01);
  CHECK(harmonic_mean(0.3, 0.3) == Approx(0.3).epsilon(1e-15));
  CHECK(harmonic_mean(0.7, 0.0) == 0.0);
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(harmonic_mean(-0.1, 0.5), ContractError);

  RandomStream rs(107);
  for (int i = 0; i < 1000; ++i) {
    const double s = rs.uniform();
    const double u = rs.uniform();
    const double h = harmonic_mean(s, u);
    CHECK(std::min(s, u) <= h + 1e-15);
    CHECK(h <= 0.5 * (s + u) + 1e-15);
    CHECK(h <= 2.0 * std::min(s, u) + 1e-15);
  }
}

TEST_CASE("report on perfect detections") {
  const SemanticTable table = table_with(3, 2);
  std::vector<GroundTruth> gts;
  RandomStream rs(108);
  for (int c = 1; c <= 5; ++c) {
    for (int image = 0; image < 3; ++image) gts.push_back({image, fixture::random_box(rs), c});
  }
  std::vector<Detection> dets;
  for (const auto& g : gts) dets.push_back({g.image_id, g.box, g.class_id, 0.9});

  const EvalReport gz = build_report(dets, gts, table, DetectMode::Gzsd);
  CHECK(gz.map == 1.0);
  CHECK(gz.recall_at_k == 1.0);
  CHECK(gz.seen_map == 1.0);
  CHECK(gz.unseen_map == 1.0);
  CHECK(gz.harmonic_mean == 1.0);
  CHECK(gz.per_class_ap.size() == 5);

  const EvalReport z = build_report(dets, gts, table, DetectMode::Zsd);
  CHECK(z.per_class_ap.size() == 2);
  for (const auto& [c, ap] : z.per_class_ap) CHECK(table.is_unseen(c));
  CHECK_FALSE(z.seen_map.has_value());
  CHECK_FALSE(z.unseen_map.has_value());
  CHECK_FALSE(z.harmonic_mean.has_value());
  CHECK(z.recall_at_k == 1.0);
}

TEST_CASE("classes without ground truth are left out") {
  const SemanticTable table = table_with(2, 2);
  const std::vector<GroundTruth> gts{{0, {0, 0, 10, 10}, 1}, {0, {20, 20, 30, 30}, 3}};
  const std::vector<Detection> dets{{0, {0, 0, 10, 10}, 1, 0.9}, {0, {40, 40, 50, 50}, 4, 0.95}};
  const EvalReport r = build_report(dets, gts, table, DetectMode::Gzsd);
  CHECK(r.per_class_ap.size() == 2);
  CHECK(r.per_class_ap.at(1) == 1.0);
  CHECK(r.per_class_ap.at(3) == 0.0);
  CHECK(r.map == 0.5);
  CHECK(r.harmonic_mean == 0.0);
}

TEST_CASE("report agrees with the single-function evaluator") {
  const SemanticTable table = table_with(4, 3);
  std::vector<int> classes{1, 2, 3, 4, 5, 6, 7};
  RandomStream rs(109);
  for (int trial = 0; trial < 200; ++trial) {
    Scene s;
    for (int image = 0; image < 4; ++image) {
      const Scene part = random_scene(rs, 24, classes);
      for (auto g : part.gts) {
        g.image_id = image;
        s.gts.push_back(g);
      }
      for (auto d : part.dets) {
        d.image_id = image;
        s.dets.push_back(d);
      }
    }
    const std::size_t k = 1 + rs.index(10);
    for (bool gzsd : {false, true}) {
      const bool has_eval_gt = std::any_of(s.gts.begin(), s.gts.end(), [&](const GroundTruth& g) {
        return gzsd || table.is_unseen(g.class_id);
      });
      const DetectMode mode = gzsd ? DetectMode::Gzsd : DetectMode::Zsd;
      if (!has_eval_gt) {
        CHECK_THROWS_AS(build_report(s.dets, s.gts, table, mode, k), ContractError);
        continue;
      }
      const EvalReport got = build_report(s.dets, s.gts, table, mode, k);
      const oracle::Report want = oracle::evaluate(s.dets, s.gts, table, gzsd, k, 0.5);
      REQUIRE(got.per_class_ap.size() == want.per_class_ap.size());
      for (const auto& [c, ap] : want.per_class_ap) CHECK(std::abs(got.per_class_ap.at(c) - ap) < 1e-9);
      CHECK(std::abs(got.map - want.map) < 1e-9);
      CHECK(std::abs(got.recall_at_k - want.recall) < 1e-9);
      CHECK(got.seen_map.has_value() == want.seen_map.has_value());
      if (gzsd) {
        CHECK(std::abs(*got.seen_map - *want.seen_map) < 1e-9);
        CHECK(std::abs(*got.unseen_map - *want.unseen_map) < 1e-9);
        CHECK(std::abs(*got.harmonic_mean - *want.harmonic_mean) < 1e-9);
      }
    }
  }
}

TEST_CASE("report json") {
  const SemanticTable table = table_with(2, 1);
  const std::vector<GroundTruth> gts{{0, {0, 0, 10, 10}, 1}, {0, {20, 20, 30, 30}, 3}};
  const std::vector<Detection> dets{{0, {0, 0, 10, 10}, 1, 0.9}, {0, {20, 20, 30, 30}, 3, 0.8}};

  const std::string gz = report_to_json(build_report(dets, gts, table, DetectMode::Gzsd));
  std::size_t last = 0;
  for (const char* key : {"\"mode\"", "\"iou_threshold\"", "\"per_class_ap\"", "\"map\"", "\"recall_at_k\"",
                          "\"seen_map\"", "\"unseen_map\"", "\"harmonic_mean\""}) {
    const std::size_t at = gz.find(key);
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
  CHECK(gz.find("\"gzsd\"") != std::string::npos);
  CHECK(gz.back() == '\n');

  const std::string z = report_to_json(build_report(dets, gts, table, DetectMode::Zsd));
  CHECK(z.find("\"zsd\"") != std::string::npos);
  CHECK(z.find("\"seen_map\": null") != std::string::npos);
  CHECK(z.find("\"unseen_map\": null") != std::string::npos);
  CHECK(z.find("\"harmonic_mean\": null") != std::string::npos);
  CHECK(z.find("\"1\"") == std::string::npos);
}

TEST_CASE("report is deterministic") {
  const SemanticTable table = table_with(3, 2);
  RandomStream rs(110);
  const Scene s = random_scene(rs, 40, {1, 2, 3, 4, 5}, 2);
  const EvalReport a = build_report(s.dets, s.gts, table, DetectMode::Gzsd, 5);
  const EvalReport b = build_report(s.dets, s.gts, table, DetectMode::Gzsd, 5);
  CHECK(a == b);
  CHECK(report_to_json(a) == report_to_json(b));
}

TEST_CASE("eleven point report") {
  const SemanticTable table = table_with(3, 2);
  RandomStream rs(111);
  for (int trial = 0; trial < 100; ++trial) {
    const Scene s = random_scene(rs, 30, {1, 2, 3, 4, 5});
    const EvalReport r = build_report(s.dets, s.gts, table, DetectMode::Gzsd, 100, 0.5, ApMode::ElevenPoint);
    const EvalReport all = build_report(s.dets, s.gts, table, DetectMode::Gzsd, 100, 0.5);
    CHECK(r.per_class_ap.size() == all.per_class_ap.size());
    for (const auto& [c, ap] : r.per_class_ap) {
      CHECK(ap >= 0.0);
      CHECK(ap <= 1.0);
      if (all.per_class_ap.at(c) == 1.0) CHECK(ap == Approx(1.0));
      if (all.per_class_ap.at(c) == 0.0) CHECK(ap == 0.0);
    }
  }
}
