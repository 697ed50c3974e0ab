#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "fixtures.hpp"
#include "splitface/data.hpp"
#include "splitface/error.hpp"
#include "splitface/synthetic.hpp"
#include "splitface/text.hpp"

using namespace splitface;
namespace fs = std::filesystem;

using namespace fixture;

TEST_CASE("attribute file") {
  const auto dir = scratch("attr");
  const auto p = dir / "list_attr.txt";
  text::write_file(p, "2\nSmiling Bald\n000001.jpg -1  1\n000002.jpg 1 -1\n");
  const auto a = parse_attr_file(p);
  CHECK(a.num_attributes() == 2);
  CHECK(a.labels[0] == std::vector<int>{0, 1});
  CHECK(a.labels[1] == std::vector<int>{1, 0});
  CHECK(a.index_of("Bald") == 1);

  write_attr_file(dir / "out.txt", a);
  CHECK(parse_attr_file(dir / "out.txt") == a);
  write_attr_file(dir / "out2.txt", parse_attr_file(dir / "out.txt"));
  CHECK(slurp(dir / "out.txt") == slurp(dir / "out2.txt"));

  text::write_file(p, "3\nSmiling Bald\n000001.jpg -1 1\n000002.jpg 1 -1\n");
  CHECK_THROWS_AS(parse_attr_file(p), MalformedHeader);
  text::write_file(p, "2\nSmiling Bald\n000001.jpg -1 1\n000002.jpg 1\n");
  CHECK(error_of<RowArityMismatch>([&] { parse_attr_file(p); }).find(":4") != std::string::npos);
  text::write_file(p, "1\nSmiling\n000001.jpg 0\n");
  CHECK_THROWS_AS(parse_attr_file(p), MalformedRow);
  text::write_file(p, "x\nSmiling\n");
  CHECK_THROWS_AS(parse_attr_file(p), MalformedHeader);
}

TEST_CASE("split manifest") {
  const auto dir = scratch("split");
  const auto p = dir / "partition.txt";
  text::write_file(p, "img.jpg 0\nb.jpg 2\nc.jpg 1\n");
  const auto e = parse_split_manifest(p);
  REQUIRE(e.size() == 3);
  CHECK(e[0] == SplitEntry{"img.jpg", Split::train});
  CHECK(e[1].split == Split::test);
  write_split_manifest(dir / "out.txt", e);
  CHECK(slurp(dir / "out.txt") == slurp(p));

  text::write_file(p, "img.jpg 0\nb.jpg 7\n");
  CHECK(error_of<MalformedRow>([&] { parse_split_manifest(p); }).find(":2") != std::string::npos);

  AttributeAnnotations a{{"A"}, {"img.jpg", "zzz.jpg"}, {{1}, {0}}};
  const std::vector<SplitEntry> one = {{"img.jpg", Split::train}};
  CHECK_THROWS_AS(join_splits(a, one), MalformedRow);
}

TEST_CASE("landmark file") {
  const auto dir = scratch("landmarks");
  std::ostringstream row;
  row << "image";
  for (int k = 1; k <= 21; ++k) row << ",x" << k << ",y" << k << ",v" << k;
  row << ",xtl,ytl,xbr,ybr\nface.ppm";
  for (int k = 1; k <= 21; ++k) row << ',' << 10 + k << ',' << 20 + k << ',' << (k == 5 ? 0.25 : 1);
  row << ",5,6,95,96\n";
  const auto p = dir / "landmarks.csv";
  text::write_file(p, row.str());
  const auto recs = parse_landmark_file(p);
  REQUIRE(recs.size() == 1);
  CHECK(text::split(text::read_lines(p)[1], ',').size() == static_cast<std::size_t>(kLandmarkFields));
  CHECK(recs[0].image == "face.ppm");
  CHECK(recs[0].fiducials.p(21).x == 31);
  CHECK(recs[0].fiducials.v(5) == 0.25);
  CHECK(recs[0].fiducials.face_box == BoundingBox{5, 6, 95, 96});

  write_landmark_file(dir / "out.csv", recs);
  CHECK(parse_landmark_file(dir / "out.csv") == recs);
  CHECK(slurp(dir / "out.csv") == slurp(p));

  text::write_file(p, row.str() + "short,1,2\n");
  CHECK(error_of<MalformedRow>([&] { parse_landmark_file(p); }).find(":3") != std::string::npos);
  text::write_file(p, "image,x1\n");
  CHECK_THROWS_AS(parse_landmark_file(p), MalformedHeader);
}

TEST_CASE("bbox manifest") {
  const auto dir = scratch("bbox");
  const auto p = dir / "boxes.csv";
  text::write_file(p, "image,segment,x_min,y_min,x_max,y_max\na.ppm,U12,1,2,30,40.5\n");
  const auto r = parse_bbox_file(p);
  REQUIRE(r.size() == 1);
  CHECK(r[0].segment == SegmentId::U12);
  CHECK(r[0].box.y_max == 40.5);
  write_bbox_file(dir / "out.csv", r);
  CHECK(slurp(dir / "out.csv") == slurp(p));

  text::write_file(p, "image,segment,x_min,y_min,x_max,y_max\na.ppm,X99,1,2,3,4\n");
  CHECK(error_of<MalformedRow>([&] { parse_bbox_file(p); }).find(":2") != std::string::npos);

  text::write_file(p, "image,variant,x_min,y_min,x_max,y_max\na.ppm,P-L34,0,0,50,60\nb.ppm,P-U12,0,0,9,9\n");
  const auto c = convert_variant_bbox_file(p);
  REQUIRE(c.size() == 2);
  CHECK(c[0].segment == SegmentId::L34);
  CHECK(c[1].segment == SegmentId::U12);
  text::write_file(p, "image,variant,x_min,y_min,x_max,y_max\na.ppm,P-Q,0,0,50,60\n");
  CHECK_THROWS_AS(convert_variant_bbox_file(p), MalformedRow);
}

TEST_CASE("priors") {
  AttributeAnnotations a{{"A", "B"}, {"1", "2", "3", "4"}, {{1, 1}, {1, 0}, {0, 1}, {0, 1}}};
  const std::vector<int> all = {0, 1, 2, 3};
  const auto p = compute_priors(a, all);
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.75);
  const std::vector<int> some = {0, 2};
  CHECK_THROWS_AS(compute_priors(a, some), DegenerateAttribute);  // B is all positive there
  CHECK_THROWS_AS(compute_priors(a, std::vector<int>{}), EmptyInput);

  const auto set = join_splits(parse_attr_file(small_dataset() / Dataset::kAttributeFile),
                               parse_split_manifest(small_dataset() / Dataset::kPartitionFile));
  const auto train = set.indices(Split::train);
  const auto q = compute_priors(set);
  for (double v : q) {
    const double scaled = v * static_cast<double>(train.size());
    CHECK(std::fabs(scaled - std::round(scaled)) < 1e-9);
  }
}

TEST_CASE("synthetic dataset") {
  const Dataset d = load_dataset(small_dataset());
  CHECK(d.size() == 20);
  CHECK(d.annotations().num_attributes() == synthetic::kAttributeCount);
  CHECK(d.indices(Split::train).size() == 12);
  CHECK(d.indices(Split::val).size() == 4);
  CHECK(d.image(0).width == 128);
  const auto f = d.fiducials(0);
  CHECK(f.image_width == 128);
  for (int s = 0; s <= kSegmentCount; ++s) CHECK(segment_visible(f, segment_at(s)));

  // Same seed, same bytes.
  const auto again = scratch("small_synthetic_again");
  synthetic::Config c;
  c.train = 12, c.val = 4, c.test = 4, c.seed = 3;
  synthetic::generate(c, again);
  for (auto name : {"attributes.txt", "partition.txt", "landmarks.csv", "images/s000007.ppm"})
    CHECK(slurp(again / name) == slurp(small_dataset() / name));

  synthetic::Config bad;
  bad.train = 0;
  CHECK_THROWS_AS(synthetic::generate(bad, scratch("bad")), ConfigError);
}

TEST_CASE("partial datasets") {
  const Dataset d = load_dataset(small_dataset());
  const auto out = scratch("partial_a") / "P-U12";
  std::vector<std::string> log;
  const auto r = generate_partial_dataset(d, PartialVariant::PU12, out, kDefaultTau, &log);
  CHECK(r.written == d.size());
  CHECK(r.skipped.empty());
  CHECK(parse_bbox_file(out / "boxes.csv").size() == d.size());
  const Dataset p = load_dataset(out);
  CHECK(p.size() == d.size());
  const auto f = p.fiducials(0);
  CHECK(segment_visible(f, SegmentId::U12));
  CHECK(!segment_visible(f, SegmentId::U34));

  const auto out2 = scratch("partial_b") / "P-U12";
  generate_partial_dataset(d, PartialVariant::PU12, out2);
  for (auto name : {"boxes.csv", "landmarks.csv", "attributes.txt", "images/s000003.ppm"})
    CHECK(slurp(out / name) == slurp(out2 / name));

  // Hide a fiducial the retained segment needs on one face.
  const auto src = scratch("partial_hidden");
  fs::copy(small_dataset(), src, fs::copy_options::recursive);
  auto recs = parse_landmark_file(src / Dataset::kLandmarkFile);
  recs[2].fiducials.v(15) = 0.0;
  write_landmark_file(src / Dataset::kLandmarkFile, recs);
  std::vector<std::string> log2;
  const auto r2 = generate_partial_dataset(load_dataset(src), PartialVariant::PU12, src / "out", kDefaultTau, &log2);
  CHECK(r2.written == d.size() - 1);
  REQUIRE(r2.skipped.size() == 1);
  CHECK(r2.skipped[0] == recs[2].image);
  REQUIRE(log2.size() == 1);
  CHECK(log2[0].find(recs[2].image) != std::string::npos);
}

TEST_CASE("batches") {
  const Dataset d = load_dataset(small_dataset());
  const auto train = d.indices(Split::train);

  SUBCASE("no augmentation enumerates the seeded order") {
    BatchConfig cfg;
    cfg.batch_size = 5;
    cfg.flip_probability = 0;
    cfg.partial_mix = 0;
    BatchStream s(d, train, cfg, 1);
    CHECK(s.batch_count() == 3);
    std::multiset<int> seen;
    std::vector<int> delivered;
    while (auto b = s.next()) {
      for (std::size_t k = 0; k < b->items.size(); ++k) {
        CHECK(!b->flipped[k]);
        CHECK(!b->variants[k]);
        delivered.push_back(b->items[k]);
      }
      CHECK(b->input.face.dim(0) == static_cast<int>(b->items.size()));
      CHECK(b->labels.dim(1) == 6);
    }
    CHECK(delivered == s.order());
    CHECK(std::multiset<int>(delivered.begin(), delivered.end()) == std::multiset<int>(train.begin(), train.end()));
    BatchStream other(d, train, cfg, 2);
    CHECK(other.order() != s.order());
  }
  SUBCASE("mix 1 occludes every sample") {
    BatchConfig cfg;
    cfg.batch_size = 4;
    cfg.partial_mix = 1.0;
    BatchStream s(d, train, cfg, 1);
    while (auto b = s.next())
      for (const auto& v : b->variants) CHECK(v.has_value());
  }
  SUBCASE("mix fraction over 10,000 draws") {
    BatchConfig cfg;
    const auto plan = augment_plan(cfg, 3, 10000);
    int occluded = 0, flipped = 0;
    std::array<int, 6> per{};
    for (const auto& a : plan) {
      occluded += a.variant.has_value();
      flipped += a.flip;
      if (a.variant) ++per[static_cast<int>(*a.variant)];
    }
    CHECK(std::fabs(occluded / 10000.0 - 0.3) <= 0.02);
    CHECK(std::fabs(flipped / 10000.0 - 0.5) <= 0.02);
    for (int c : per) CHECK(std::fabs(c / double(occluded) - 1.0 / 6) <= 0.02);
  }
  SUBCASE("equal seeds give equal batches") {
    BatchConfig cfg;
    cfg.batch_size = 6;
    BatchStream a(d, train, cfg, 4), b(d, train, cfg, 4);
    const auto plan = augment_plan(cfg, 4, train.size());
    std::size_t pos = 0;
    while (auto x = a.next()) {
      auto y = b.next();
      REQUIRE(y);
      CHECK(x->input.face == y->input.face);
      for (int i = 0; i < kSegmentCount; ++i) CHECK(x->input.segments[i] == y->input.segments[i]);
      CHECK(x->input.visible == y->input.visible);
      for (std::size_t k = 0; k < x->items.size(); ++k, ++pos) {
        CHECK(x->flipped[k] == plan[pos].flip);
        CHECK(x->variants[k] == plan[pos].variant);
      }
      for (float v : x->input.face.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
  SUBCASE("occluded samples mark lost segments invisible with zero crops") {
    const std::vector<int> one = {train[0]};
    const std::vector<Augment> aug = {Augment{false, PartialVariant::PU12}};
    const auto b = assemble_batch(d, one, aug);
    CHECK(b.input.visible[0][index_of(SegmentId::U12)]);
    CHECK(!b.input.visible[0][index_of(SegmentId::U34)]);
    CHECK(b.input.visible[0][kFullPredictor]);
    CHECK(b.input.visible[0][kGlobalPredictor]);
    for (float v : b.input.segments[index_of(SegmentId::U34) - 1].values()) CHECK(v == 0.0f);
  }
  SUBCASE("a flipped sample carries the mirrored segment") {
    const std::vector<int> one = {train[1]};
    const std::vector<Augment> flip = {Augment{true, std::nullopt}};
    const auto plain = assemble_batch(d, one);
    const auto mirrored = assemble_batch(d, one, flip);
    const auto& a = plain.input.segments[index_of(SegmentId::U12) - 1];
    const auto& b = mirrored.input.segments[index_of(SegmentId::U12) - 1];
    // U12 maps to itself; its crop is the horizontal mirror of the original.
    double diff = 0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) diff = std::max(diff, double(std::fabs(a.at(0, c, y, x) - b.at(0, c, y, 63 - x))));
    CHECK(diff < 0.02);
  }
  SUBCASE("missing image") {
    const auto dir = scratch("missing_image");
    fs::copy(small_dataset(), dir, fs::copy_options::recursive);
    fs::remove(dir / "images" / "s000001.ppm");
    const Dataset broken = load_dataset(dir);
    CHECK_THROWS_AS(broken.image(0), MissingImage);
  }
}
