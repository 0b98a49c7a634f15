#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "rssiloc/experiment.hpp"
#include "rssiloc/synthetic.hpp"

using namespace rssiloc;

namespace {

FloorPlan square_plan() {
  return floorplan_from_json_text(R"({
    "name": "sq", "width_px": 100, "height_px": 100, "width_mm": 1000, "height_mm": 1000,
    "rooms": [{"name": "west", "polygon": [[0,0],[50,0],[50,100],[0,100]]},
              {"name": "east", "polygon": [[50,0],[100,0],[100,100],[50,100]]}],
    "anchors": []
  })");
}

LabelSample label(std::int64_t t, double x, double y, std::string session = "s1") {
  return {t, x, y, std::move(session)};
}

}  // namespace

TEST_CASE("kfold: partition, sizes, determinism") {
  for (std::size_t n : {10u, 11u, 37u, 100u}) {
    for (int k : {2, 3, 10}) {
      const auto folds = kfold_split(n, k, 42);
      REQUIRE(folds.size() == static_cast<std::size_t>(k));
      std::multiset<std::size_t> seen;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const std::size_t expect = n / k + (f < n % k ? 1 : 0);
        CHECK(folds[f].test.size() == expect);
        CHECK(folds[f].train.size() + folds[f].test.size() == n);
        std::set<std::size_t> train(folds[f].train.begin(), folds[f].train.end());
        for (auto i : folds[f].test) CHECK(!train.count(i));
        seen.insert(folds[f].test.begin(), folds[f].test.end());
      }
      CHECK(seen.size() == n);
      CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == n);
      CHECK(kfold_split(n, k, 42)[0].test == folds[0].test);
    }
  }
  CHECK(kfold_split(100, 10, 1)[0].test != kfold_split(100, 10, 2)[0].test);
  CHECK_ERRC(kfold_split(5, 10, 1), Errc::DatasetTooSmall);
  CHECK_ERRC(kfold_split(5, 1, 1), Errc::InvalidConfig);

  const auto blocks = block_split(10, 3);
  CHECK(blocks[0].test == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(blocks[2].test == std::vector<std::size_t>{7, 8, 9});
  CHECK(parse_split_mode("block") == SplitMode::Block);
  CHECK(parse_split_mode(split_mode_name(SplitMode::Sample)) == SplitMode::Sample);
}

TEST_CASE("regression metrics: worked examples") {
  // 1 px == 10 mm on both axes in the first case.
  const std::vector<PointPx> pred{{14, 0}, {0, 23}};
  const std::vector<PointPx> truth{{0, 0}, {0, 0}};
  const auto m = regression_metrics(pred, truth, 10, 10);
  CHECK(m.mae_x_m == doctest::Approx(0.07));
  CHECK(m.mae_y_m == doctest::Approx(0.115));
  CHECK(m.mae_m == doctest::Approx((0.07 + 0.115) / 2));

  const std::vector<PointPx> one{{14, 23}};
  const std::vector<PointPx> zero{{0, 0}};
  CHECK(regression_metrics(one, zero, 10, 10).mae_m == doctest::Approx(0.185));

  // Flat A scale: 5800 mm over 460 px.
  const std::vector<PointPx> off{{46, 0}};
  const auto a = regression_metrics(off, zero, 5800.0 / 460, 9500.0 / 753);
  CHECK(a.mae_x_m == doctest::Approx(0.580));
  CHECK(regression_metrics(pred, truth, 10, 10).count == 2);
  CHECK_ERRC(regression_metrics(std::span<const PointPx>{}, std::span<const PointPx>{}, 1, 1), Errc::EmptyTestSet);
  CHECK_ERRC(regression_metrics(one, truth, 1, 1), Errc::ShapeMismatch);
}

TEST_CASE("room metrics count, exclude and confuse") {
  const std::vector<std::optional<int>> pred{0, 1, 1, std::nullopt, 0};
  const std::vector<std::optional<int>> truth{0, 1, 0, 1, std::nullopt};
  const auto m = room_metrics(pred, truth, {"west", "east"});
  CHECK(m.total == 4);
  CHECK(m.excluded == 1);
  CHECK(m.correct == 2);
  CHECK(m.accuracy == 0.5);
  CHECK(m.predicted_none == 1);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[0][0] == 1);
  CHECK(m.confusion[1][1] == 1);
  const std::vector<std::optional<int>> none{std::nullopt};
  CHECK_ERRC(room_metrics(none, none, {"west"}), Errc::EmptyTestSet);
}

TEST_CASE("external estimates: parsing and scoring") {
  const auto est = parse_estimates_csv(
      "t_ms,x_px,y_px\n"
      "1000,10,10\n"
      "1500,,\n"
      "2000,nan,5\n"
      "2500,-,-\n"
      "3000,40,20\n"
      "9000,1,1\n"
      "500,0,0\n");
  REQUIRE(est.size() == 7);
  CHECK(est[0].t_ms == 500);  // sorted by time, read as milliseconds
  CHECK(est[1].position == PointPx{10, 10});
  CHECK(!est[2].position);
  CHECK(!est[3].position);
  CHECK(!est[4].position);
  CHECK_ERRC(parse_estimates_csv("t_ms,x_px,y_px\nabc,1,2\n"), Errc::MalformedRecord);

  const std::vector<LabelSample> labels{label(1000, 0, 0), label(3000, 20, 20)};
  const auto plan = square_plan();
  const auto s = score_external_estimates(est, labels, plan);
  CHECK(s.matched == 5);
  CHECK(s.outside_labels == 2);
  CHECK(s.lost == 3);
  CHECK(s.scored == 2);
  CHECK(s.lost_fraction == doctest::Approx(3.0 / 5.0));
  REQUIRE(s.metrics);
  // errors: (10,10) at t=1000 and (20,0) at t=3000, 10 mm/px.
  CHECK(s.metrics->mae_x_m == doctest::Approx((0.1 + 0.2) / 2));
  CHECK(s.metrics->mae_y_m == doctest::Approx((0.1 + 0.0) / 2));

  const std::vector<ExternalEstimate> late{{50'000, PointPx{1, 1}}};
  CHECK_ERRC(score_external_estimates(late, labels, plan), Errc::NoOverlap);

  const std::vector<ExternalEstimate> all_lost{{2000, std::nullopt}};
  const auto lost = score_external_estimates(all_lost, labels, plan);
  CHECK(!lost.metrics);
  CHECK(lost.lost_fraction == 1.0);
}

TEST_CASE("external scoring does not interpolate across sessions") {
  const std::vector<LabelSample> labels{label(1000, 0, 0, "a"), label(2000, 0, 0, "a"), label(3000, 50, 50, "b"),
                                        label(4000, 50, 50, "b")};
  const std::vector<ExternalEstimate> est{{2500, PointPx{0, 0}}, {3500, PointPx{50, 50}}};
  const auto s = score_external_estimates(est, labels, square_plan());
  CHECK(s.matched == 1);
  CHECK(s.metrics->mae_m == 0.0);
}

TEST_CASE("named matrices") {
  const auto def = named_matrix("default", Tech::Uwb, 7, 10);
  CHECK(def.size() == 4 * 5);
  for (const auto& c : def) CHECK(c.window.mode == WindowMode::PastAndFuture);
  CHECK(named_matrix("full", Tech::Uwb, 7, 10).size() == 40);
  CHECK(named_matrix("quick", Tech::Ble, 7, 5).size() == 8);
  const auto explicit_ = named_matrix("models=cnn,knn;windows=4,20;modes=only-past", Tech::Uwb, 7, 3);
  REQUIRE(explicit_.size() == 4);
  CHECK(explicit_[0].k_folds == 3);
  CHECK(explicit_[0].window.mode == WindowMode::OnlyPast);
  CHECK_ERRC(named_matrix("nonsense", Tech::Uwb, 7, 10), Errc::InvalidConfig);
  CHECK(default_sub_span_s(4) == 1.0);
  CHECK(default_sub_span_s(20) == 2.0);
  std::set<std::string> keys;
  for (const auto& c : def) keys.insert(c.key());
  CHECK(keys.size() == def.size());
}

TEST_CASE("run_matrix is deterministic and reports failures as rows") {
  SyntheticOptions o;
  o.sessions = 1;
  o.session_duration_s = 120;
  const auto flat = generate_synthetic(o);
  auto configs = named_matrix("models=cnn,knn,rf;windows=4;modes=past+future", Tech::Uwb, 3, 3);
  for (auto& c : configs) {
    c.model.reference_shapes = false;
    c.model.conv_kernels = {2};
    c.model.conv_filters = 4;
    c.model.mlp_widths = {8};
    c.model.rf.n_trees = 5;
  }
  auto broken = configs[1];
  broken.k_folds = 100000;
  configs.push_back(broken);
  MatrixOptions opts;
  opts.train.max_epochs = 2;
  opts.max_folds = 2;
  const auto a = run_matrix(flat.data, flat.plan, o.tag, configs, opts);
  const auto b = run_matrix(flat.data, flat.plan, o.tag, configs, opts);
  CHECK(a.to_csv() == b.to_csv());
  REQUIRE(a.rows.size() == 4);
  CHECK(a.rows[0].status == "ok");
  CHECK(a.rows[0].folds == 2);
  CHECK(a.rows[0].room_accuracy);
  CHECK(a.rows[0].mae_m == doctest::Approx((a.rows[0].mae_x_m + a.rows[0].mae_y_m) / 2));
  CHECK(a.rows[3].status.rfind("failed", 0) == 0);
  const auto csv = a.to_csv();
  CHECK(csv.rfind("flat,tech,windowing,model,head,window_s,n_steps,folds,pairs,", 0) == 0);
  CHECK(csv.find("wall_time_s") == std::string::npos);
  CHECK(a.to_csv(true).find("wall_time_s") != std::string::npos);

  testutil::TempDir dir;
  a.write_plot_data(dir.path());
  CHECK(std::filesystem::exists(dir.path() / "mae_vs_window.dat"));
  CHECK(std::filesystem::exists(dir.path() / "error_bars.dat"));
}
