#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "splitface/error.hpp"
#include "splitface/evaluation.hpp"
#include "splitface/rng.hpp"
#include "splitface/text.hpp"

using namespace splitface;
using namespace fixture;

namespace {

struct Scenario {
  ScoreMatrix scores;
  std::vector<std::vector<int>> labels;
  AttributeMask mask;
};

// Scores correlated with the labels, random visibility for the segments.
Scenario random_scenario(int n, int k, std::uint64_t seed) {
  Rng rng(seed);
  Scenario s;
  s.mask = AttributeMask::full(k);
  s.mask.attributes[4] = {0};
  s.scores.num_attributes = k;
  for (int r = 0; r < n; ++r) {
    s.scores.images.push_back("img" + std::to_string(r));
    std::vector<int> y(k);
    for (auto& v : y) v = rng.bernoulli(0.4);
    ImageScores row;
    for (int i = 0; i < kPredictorCount; ++i) {
      row.visible[i] = i == kFullPredictor || i == kGlobalPredictor || rng.bernoulli(0.8);
      row.scores[i].assign(k, std::nan(""));
      for (int a : s.mask.attributes[i])
        row.scores[i][a] = std::clamp(0.5 * rng.uniform() + (y[a] ? 0.35 : 0.1) + 0.02 * i, 0.0, 1.0);
    }
    s.scores.rows.push_back(row);
    s.labels.push_back(y);
  }
  return s;
}

}  // namespace

TEST_CASE("accuracy") {
  const auto r = accuracy({{1, 0}, {1, 1}, {0, 0}, {1, 0}}, {{1, 0}, {0, 1}, {0, 1}, {1, 1}});
  CHECK(r.per_attribute == std::vector<double>{0.75, 0.5});
  CHECK(r.mean == 0.625);
  CHECK_THROWS_AS(accuracy({}, {}), EmptyInput);
  CHECK_THROWS_AS(accuracy({{1, 0}}, {{1}}), ShapeMismatch);
}

TEST_CASE("prior baseline") {
  LabeledSet set;
  set.annotations.names = {"A", "B", "C"};
  // Train: A 3/4 positive, B 1/4, C exactly half (ties predict positive).
  const std::vector<std::vector<int>> train = {{1, 0, 1}, {1, 0, 0}, {1, 1, 1}, {0, 0, 0}};
  const std::vector<std::vector<int>> test = {{1, 1, 0}, {0, 0, 0}, {1, 0, 1}};
  for (const auto& y : train) {
    set.annotations.images.push_back("tr");
    set.annotations.labels.push_back(y);
    set.splits.push_back(Split::train);
  }
  for (const auto& y : test) {
    set.annotations.images.push_back("te");
    set.annotations.labels.push_back(y);
    set.splits.push_back(Split::test);
  }
  const auto r = prior_baseline(set);
  CHECK(r.per_attribute[0] == doctest::Approx(2.0 / 3));
  CHECK(r.per_attribute[1] == doctest::Approx(2.0 / 3));
  CHECK(r.per_attribute[2] == doctest::Approx(1.0 / 3));

  // Always at least one half on the training split itself.
  const auto d = load_dataset(small_dataset());
  LabeledSet self = d.labels();
  for (auto& s : self.splits) s = s == Split::train ? Split::train : Split::val;
  for (std::size_t n = 0; n < self.splits.size(); ++n)
    if (self.splits[n] == Split::train) self.splits.push_back(Split::test), self.annotations.images.push_back("x"),
                                       self.annotations.labels.push_back(self.annotations.labels[n]);
  for (double v : prior_baseline(self).per_attribute) CHECK(v >= 0.5);
}

TEST_CASE("report rows agree with direct computation") {
  const auto s = random_scenario(60, 5, 2);
  const std::vector<std::string> names = {"a0", "a1", "a2", "a3", "a4"};
  const auto t = calibrate_thresholds(s.scores, s.labels, s.mask);
  const auto ranking = rank_from_thresholds(t, s.mask);
  const AccuracyResult prior{{0.5, 0.6, 0.7, 0.8, 0.9}, 0.7};
  const auto rep = build_report("toy", ThresholdMode::optimal, names, s.scores, s.labels, t, ranking, prior);

  REQUIRE(rep.methods.size() == 20);
  CHECK(rep.methods[0].method == "FULL");
  CHECK(rep.methods[15].method == "GP");
  CHECK(rep.methods[16].method == "HRP");
  CHECK(rep.methods[19].method == "Prior");
  CHECK(build_report("toy", ThresholdMode::optimal, names, s.scores, s.labels, t, ranking, std::nullopt)
            .methods.size() == 19);

  for (int i = 0; i < kPredictorCount; ++i) {
    const auto& row = rep.methods[i];
    double sum = 0;
    int count = 0;
    for (int a = 0; a < 5; ++a) {
      CHECK(row.per_attribute[a].has_value() == s.mask.contains(i, a));
      if (!row.per_attribute[a]) continue;
      std::vector<double> sc;
      std::vector<int> y;
      for (std::size_t n = 0; n < s.labels.size(); ++n) {
        sc.push_back(s.scores.rows[n].scores[i][a]);
        y.push_back(s.labels[n][a]);
      }
      CHECK(*row.per_attribute[a] == doctest::Approx(threshold_accuracy(sc, y, t.at(i, a).threshold)));
      sum += *row.per_attribute[a];
      ++count;
    }
    CHECK(row.mean == doctest::Approx(sum / count));
  }

  const auto hrp = fuse(s.scores, ranking, t, FusionMethod::hrp);
  const auto direct = accuracy(hrp, s.labels);
  CHECK(rep.find("HRP")->mean == doctest::Approx(direct.mean));
  CHECK(rep.find("nope") == nullptr);

  SUBCASE("fixed thresholds") {
    const auto f = fixed_thresholds(s.mask, 5);
    CHECK(f.at(3, 2).threshold == 0.5);
    CHECK(!f.has(4, 3));
    const auto dec = predictor_decisions(s.scores, f, 4);
    CHECK(dec[0][3] == -1);
    CHECK(dec[0][0] == (s.scores.rows[0].scores[4][0] >= 0.5 ? 1 : 0));
  }
  SUBCASE("emitted files") {
    const auto dir = scratch("report");
    emit_report(rep, ReportFormat::csv, dir / "r.csv");
    emit_report(rep, ReportFormat::markdown, dir / "r.md");
    const auto back = read_report_csv(dir / "r.csv");
    CHECK(back.dataset == "toy");
    CHECK(back.attributes == names);
    REQUIRE(back.methods.size() == rep.methods.size());
    for (std::size_t m = 0; m < rep.methods.size(); ++m) {
      CHECK(back.methods[m].method == rep.methods[m].method);
      CHECK(back.methods[m].mean == doctest::Approx(rep.methods[m].mean).epsilon(1e-6));
      for (int a = 0; a < 5; ++a) {
        REQUIRE(back.methods[m].per_attribute[a].has_value() == rep.methods[m].per_attribute[a].has_value());
        if (rep.methods[m].per_attribute[a])
          CHECK(std::fabs(*back.methods[m].per_attribute[a] - *rep.methods[m].per_attribute[a]) <= 5e-7);
      }
    }
    emit_report(back, ReportFormat::csv, dir / "r2.csv");
    CHECK(slurp(dir / "r.csv") == slurp(dir / "r2.csv"));

    const auto md = text::read_lines(dir / "r.md");
    int table_rows = 0;
    for (const auto& l : md)
      if (l.rfind("| ", 0) == 0) ++table_rows;
    CHECK(table_rows == 1 + 5 + 1);  // header, attributes, Mean
    CHECK(md.back().rfind("| Mean |", 0) == 0);

    EvaluationReport empty;
    empty.dataset = "none";
    empty.attributes = names;
    emit_report(empty, ReportFormat::csv, dir / "empty.csv");
    CHECK(slurp(dir / "empty.csv") == "dataset,threshold_mode,method,a0,a1,a2,a3,a4,mean\n");
    CHECK_THROWS_AS(read_report_csv(dir / "missing.csv"), MissingInput);
  }
}

TEST_CASE("ranking grid") {
  PredictorRanking r;
  r.order = {{15, 0, 3, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14},
             {0, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1}};
  r.accuracy.resize(2);
  AttributeMask m;
  m.attributes[0] = {0, 1};
  m.attributes[15] = {0, 1};
  m.attributes[3] = {0};
  m.attributes[14] = {1};
  const auto g = build_ranking_table(r, m, {"x", "y"});
  CHECK(g.ranks[15][0] == 1);
  CHECK(g.ranks[0][1] == 1);
  CHECK(g.ranks[3][0] == 3);
  CHECK(!g.ranks[3][1].has_value());
  CHECK(g.ranks[14][1] == 3);
  CHECK(g.assigned[0] == 2);
  CHECK(g.assigned[3] == 1);
  CHECK(g.assigned[7] == 0);

  const auto dir = scratch("grid");
  write_ranking_grid(dir / "g.csv", g);
  const auto back = read_ranking_grid(dir / "g.csv");
  CHECK(back.attributes == g.attributes);
  CHECK(back.ranks == g.ranks);
  CHECK(back.assigned == g.assigned);
  write_ranking_grid(dir / "g.md", g, ReportFormat::markdown);
  CHECK(text::read_lines(dir / "g.md").size() == 2 + kPredictorCount);
}
