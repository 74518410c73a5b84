#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dafc/data.hpp"
#include "dafc/metrics.hpp"
#include "oracles.hpp"

using namespace dafc;
using namespace dafc::data;

namespace {

std::filesystem::path fixture_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "dafc_unit_idx";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                           static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("IDX fixture round-trips") {
  const auto dir = fixture_dir();
  const std::vector<std::uint8_t> pixels{0, 255, 128, 7, 1, 2, 3, 4, 250, 100, 50, 25};  // 2 images of 2×3
  const std::vector<std::uint8_t> labels{3, 9};
  write_idx_images(dir / "img", pixels, 2, 2, 3);
  write_idx_labels(dir / "lab", labels);

  // Hand-built header bytes.
  const auto raw = read_bytes(dir / "img");
  const std::vector<unsigned char> header{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3};
  CHECK(std::vector<unsigned char>(raw.begin(), raw.begin() + 16) == header);
  CHECK(raw.size() == 16 + pixels.size());

  const Dataset ds = load_idx(dir / "img", dir / "lab");
  CHECK(ds.images.shape() == Shape{2, 1, 2, 3});
  for (std::size_t i = 0; i < pixels.size(); ++i) CHECK(ds.images[i] == pixels[i] / 255.0);
  REQUIRE(ds.truth_labels);
  CHECK(*ds.truth_labels == std::vector<int>{3, 9});
  CHECK_NOTHROW(ds.validate());

  // Writing what was read gives the same bytes.
  std::vector<std::uint8_t> back;
  for (double v : ds.images.data()) back.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  write_idx_images(dir / "img2", back, 2, 2, 3);
  CHECK(read_bytes(dir / "img2") == raw);

  CHECK_FALSE(load_idx(dir / "img").truth_labels.has_value());
}

TEST_CASE("IDX errors") {
  const auto dir = fixture_dir();
  write_bytes(dir / "zero_magic", {0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 5});
  CHECK_THROWS_WITH(load_idx(dir / "zero_magic"), doctest::Contains("magic"));
  write_bytes(dir / "short_header", {0, 0, 8, 3, 0, 0});
  CHECK_THROWS(load_idx(dir / "short_header"));
  write_bytes(dir / "short_payload", {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3});
  CHECK_THROWS_WITH(load_idx(dir / "short_payload"), doctest::Contains("trunc"));
  const std::vector<std::uint8_t> px(8, 9);
  write_idx_images(dir / "two", px, 2, 2, 2);
  write_idx_labels(dir / "three", std::vector<std::uint8_t>{1, 2, 3});
  CHECK_THROWS(load_idx(dir / "two", dir / "three"));
  write_bytes(dir / "labels_bad_magic", {0, 0, 8, 3, 0, 0, 0, 2, 1, 1});
  CHECK_THROWS(load_idx(dir / "two", dir / "labels_bad_magic"));
  CHECK_THROWS(load_idx(dir / "does_not_exist"));
}

TEST_CASE("class selection relabels in listed order") {
  Dataset ds;
  ds.images = Tensor({5, 1, 1, 1}, {0.0, 0.1, 0.2, 0.3, 0.4});
  ds.truth_labels = std::vector<int>{7, 3, 7, 5, 3};
  const std::vector<int> classes{7, 3};
  const Dataset s = select_classes(ds, classes);
  CHECK(s.images.vec() == std::vector<double>{0.0, 0.1, 0.2, 0.4});
  CHECK(*s.truth_labels == std::vector<int>{0, 1, 0, 1});
  CHECK(select_classes(ds, classes, 2).size() == 2);
  CHECK_FALSE(without_labels(ds).truth_labels.has_value());
}

TEST_CASE("synthetic blobs") {
  const BlobSpec spec{4, 50, 16, 1.0, 10.0, 3};
  const Dataset a = synth_blobs(spec), b = synth_blobs(spec);
  CHECK(a.images == b.images);
  CHECK(*a.truth_labels == *b.truth_labels);
  CHECK(a.images.shape() == Shape{200, 1, 1, 16});
  for (double v : a.images.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_NOTHROW(a.validate());

  SUBCASE("spread vanishes with sigma") {
    const Dataset tight = synth_blobs({3, 20, 4, 1e-9, 10.0, 1});
    for (std::size_t i = 0; i < tight.size(); ++i) {
      const std::size_t ref = static_cast<std::size_t>((*tight.truth_labels)[i]);
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(tight.images[i * 4 + c] - tight.images[ref * 4 + c]) < 1e-9);
    }
  }
  SUBCASE("k-means oracle separates the reference configuration") {
    const Dataset ds = synth_blobs({4, 500, 16, 1.0, 10.0, 0});
    const auto labels = oracle::kmeans(ds.images.vec(), ds.size(), 16, 4, 5, 1);
    CHECK(metrics::accuracy(metrics::LabelPair::make(labels, *ds.truth_labels)) >= 0.99);
  }
  SUBCASE("invalid parameters") {
    CHECK_THROWS(synth_blobs({1, 10, 4, 1.0, 10.0, 0}));
    CHECK_THROWS(synth_blobs({2, 10, 4, 0.0, 10.0, 0}));
    CHECK_THROWS(synth_blobs({5, 10, 4, 1.0, 10.0, 0}));
    CHECK_THROWS(synth_blobs({2, 0, 4, 1.0, 10.0, 0}));
  }
}

TEST_CASE("augmentation") {
  Tensor hot({1, 5, 5});
  hot[2 * 5 + 2] = 1.0;
  SUBCASE("shift examples") {
    CHECK(shift_image(hot, 0, 0, false) == hot);
    const Tensor r = shift_image(hot, 1, 0, false);
    for (std::size_t i = 0; i < 25; ++i) CHECK(r[i] == (i == 2 * 5 + 3 ? 1.0 : 0.0));
    const Tensor d = shift_image(hot, 0, -2, false);
    CHECK(d[0 * 5 + 2] == 1.0);
    const Tensor f = shift_image(hot, 1, 0, true);
    CHECK(f[2 * 5 + 1] == 1.0);
    CHECK(shift_image(hot, 3, 0, false) == Tensor({1, 5, 5}));
  }
  SUBCASE("policies") {
    Rng rng(1);
    Tensor batch({6, 1, 5, 5});
    for (std::size_t i = 0; i < 6; ++i) batch[i * 25 + 12] = 1.0;
    const auto none = augment(batch, AugmentPolicy::none, rng);
    CHECK(none.transformed == batch);
    CHECK(none.combined.dim(0) == 12);
    for (auto policy : {AugmentPolicy::shift, AugmentPolicy::shift_flip}) {
      const auto aug = augment(batch, policy, rng);
      CHECK(aug.transformed.shape() == batch.shape());
      CHECK(aug.original == batch);
      CHECK(aug.combined == concat_rows(batch, aug.transformed));
      // Interior pixel mass survives every shift of at most two.
      for (std::size_t i = 0; i < 6; ++i) {
        double mass = 0;
        for (std::size_t p = 0; p < 25; ++p) mass += aug.transformed[i * 25 + p];
        CHECK(mass == 1.0);
      }
    }
    CHECK(parse_policy("shift+flip") == AugmentPolicy::shift_flip);
    CHECK(parse_policy("shift") == AugmentPolicy::shift);
    CHECK(to_string(AugmentPolicy::shift_flip) == "shift+flip");
    CHECK_THROWS(parse_policy("rotate"));
  }
  SUBCASE("shift draws cover the whole range") {
    Rng rng(2);
    std::set<std::size_t> seen;
    Tensor batch({200, 1, 5, 5});
    for (std::size_t i = 0; i < 200; ++i) batch[i * 25 + 12] = 1.0;
    const auto aug = augment(batch, AugmentPolicy::shift, rng);
    for (std::size_t i = 0; i < 200; ++i)
      for (std::size_t p = 0; p < 25; ++p)
        if (aug.transformed[i * 25 + p] == 1.0) seen.insert(p);
    CHECK(seen.size() == 25);
  }
}

TEST_CASE("normalization") {
  Rng rng(3);
  Dataset ds;
  ds.images = Tensor({10, 2, 3, 3});
  for (auto& v : ds.images.data()) v = rng.uniform();
  const Dataset same = normalize(ds, {0.0, 0.0}, {1.0, 1.0});
  CHECK(same.images == ds.images);
  CHECK(same.normalized());

  const ChannelStats st = channel_stats(ds.images);
  const Dataset n = normalize(ds, st.means, st.stds);
  const ChannelStats after = channel_stats(n.images);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::abs(after.means[c]) < 1e-6);
    CHECK(after.stds[c] == doctest::Approx(1.0).epsilon(1e-9));
  }
  Dataset flat;
  flat.images = Tensor({3, 1, 2, 2}, 0.4);
  const Dataset z = normalize(flat, {0.4}, {2.0});
  for (double v : z.images.data()) CHECK(v == 0.0);
  CHECK_THROWS(normalize(flat, {0.4}, {0.0}));
  CHECK_THROWS(normalize(flat, {0.4, 0.1}, {1.0, 1.0}));
}

TEST_CASE("batching") {
  SUBCASE("one batch of everything is a permutation") {
    const auto b = batches(17, {17, 1, 0, false});
    REQUIRE(b.size() == 1);
    std::vector<std::size_t> s = b[0];
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < 17; ++i) CHECK(s[i] == i);
  }
  SUBCASE("every epoch partitions the indices") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.index(100), B = 1 + rng.index(n);
      const auto b = batches(n, {B, rng.next(), rng.index(10), false});
      std::vector<int> seen(n, 0);
      for (const auto& batch : b) {
        CHECK(batch.size() <= B);
        for (auto i : batch) ++seen[i];
      }
      for (int c : seen) CHECK(c == 1);
      CHECK(b.size() == (n + B - 1) / B);
    }
  }
  SUBCASE("seeded order") {
    CHECK(batches(50, {8, 3, 2, false}) == batches(50, {8, 3, 2, false}));
    CHECK(batches(50, {8, 3, 2, false}) != batches(50, {8, 3, 3, false}));
    const auto d = batches(50, {8, 3, 2, true});
    CHECK(d.size() == 6);
    for (const auto& batch : d) CHECK(batch.size() == 8);
  }
  SUBCASE("errors") {
    CHECK_THROWS(batches(5, {6, 0, 0, false}));
    CHECK_THROWS(batches(5, {0, 0, 0, false}));
  }
}

TEST_CASE("dataset validation") {
  Dataset ds;
  ds.images = Tensor({2, 1, 1, 2}, {0.0, 0.5, 1.0, 1.5});
  CHECK_THROWS(ds.validate());
  ds.images[3] = 1.0;
  ds.truth_labels = std::vector<int>{0};
  CHECK_THROWS(ds.validate());
  ds.truth_labels = std::vector<int>{0, 1};
  CHECK_NOTHROW(ds.validate());
  ds.images = Tensor({2, 2});
  CHECK_THROWS(ds.validate());
}
