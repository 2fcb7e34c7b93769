#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "sfd/dataset.hpp"
#include "sfd/error.hpp"
#include "sfd/rng.hpp"

using sfd::LabeledDataset;
using sfd::PartitionMode;
using sfd::PartitionSpec;
using sfd::RngStream;

namespace {

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::string write_idx_images(const std::string& path, std::uint32_t n,
                             std::uint32_t rows, std::uint32_t cols,
                             const std::vector<unsigned char>& pixels,
                             std::uint32_t magic = 2051) {
  std::ofstream out(path, std::ios::binary);
  write_be32(out, magic);
  write_be32(out, n);
  write_be32(out, rows);
  write_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  return path;
}

std::string write_idx_labels(const std::string& path,
                             const std::vector<unsigned char>& labels,
                             std::uint32_t magic = 2049) {
  std::ofstream out(path, std::ios::binary);
  write_be32(out, magic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  return path;
}

LabeledDataset tiny_dataset() {
  // 6 rows, labels 0,0,0,1,1,1; feature = row index.
  LabeledDataset d;
  d.features = sfd::Matrix(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    d.features.at(i, 0) = static_cast<double>(i);
    d.features.at(i, 1) = 10.0 + static_cast<double>(i);
  }
  d.labels = {0, 0, 0, 1, 1, 1};
  d.num_classes = 2;
  return d;
}

// Collects all origin indices of a partition and checks global disjointness.
std::set<std::size_t> all_origins(const sfd::FederationData& fed,
                                  std::size_t expected_total) {
  std::vector<std::size_t> flat;
  for (const auto& v : fed.train_origin) flat.insert(flat.end(), v.begin(), v.end());
  for (const auto& v : fed.validation_origin)
    flat.insert(flat.end(), v.begin(), v.end());
  flat.insert(flat.end(), fed.proxy_origin.begin(), fed.proxy_origin.end());
  std::set<std::size_t> uniq(flat.begin(), flat.end());
  REQUIRE(uniq.size() == flat.size());  // pairwise disjoint
  REQUIRE(uniq.size() == expected_total);
  return uniq;
}

}  // namespace

TEST_CASE("synth_gaussians: shape, class layout, determinism") {
  const auto d = sfd::synth_gaussians(4, 3, 50, 6.0, 0.8, RngStream(9));
  REQUIRE(d.size() == 200);
  REQUIRE(d.dim() == 3);
  CHECK(d.num_classes == 4);
  for (std::size_t i = 0; i < 200; ++i) CHECK(d.labels[i] == static_cast<int>(i / 50));

  const auto d2 = sfd::synth_gaussians(4, 3, 50, 6.0, 0.8, RngStream(9));
  CHECK(d.features.data == d2.features.data);
  const auto d3 = sfd::synth_gaussians(4, 3, 50, 6.0, 0.8, RngStream(10));
  CHECK(d.features.data != d3.features.data);
}

TEST_CASE("synth_gaussians: class means sit on the stated circle") {
  const int C = 5;
  const std::size_t n = 400;
  const auto d = sfd::synth_gaussians(C, 2, n, 6.0, 0.8, RngStream(2));
  for (int c = 0; c < C; ++c) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = c * n; i < (c + 1) * n; ++i) {
      mx += d.features.at(i, 0);
      my += d.features.at(i, 1);
    }
    mx /= n;
    my /= n;
    const double angle = 2.0 * 3.14159265358979323846 * c / C;
    CHECK(std::abs(mx - 6.0 * std::cos(angle)) < 0.2);
    CHECK(std::abs(my - 6.0 * std::sin(angle)) < 0.2);
  }
}

TEST_CASE("synth_gaussians: classes are nearest-centroid separable") {
  const auto d = sfd::synth_gaussians(4, 2, 250, 6.0, 0.8, RngStream(3));
  // Known centers; count rows closer to their own center than any other.
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double best = 1e300;
    int best_c = -1;
    for (int c = 0; c < 4; ++c) {
      const double angle = 2.0 * 3.14159265358979323846 * c / 4;
      const double dx = d.features.at(i, 0) - 6.0 * std::cos(angle);
      const double dy = d.features.at(i, 1) - 6.0 * std::sin(angle);
      if (dx * dx + dy * dy < best) {
        best = dx * dx + dy * dy;
        best_c = c;
      }
    }
    if (best_c == d.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / d.size() >= 0.99);
}

TEST_CASE("synth_gaussians: parameter validation") {
  CHECK_THROWS_AS(sfd::synth_gaussians(1, 2, 10, 6.0, 0.8, RngStream(1)),
                  sfd::ParameterError);
  CHECK_THROWS_AS(sfd::synth_gaussians(4, 1, 10, 6.0, 0.8, RngStream(1)),
                  sfd::ParameterError);
  CHECK_THROWS_AS(sfd::synth_gaussians(4, 2, 10, -1.0, 0.8, RngStream(1)),
                  sfd::ParameterError);
}

TEST_CASE("load_idx: round-trips a hand-built file pair") {
  const std::vector<unsigned char> pixels = {0,   255, 51,  102,   // image 0
                                             255, 0,   255, 0,     // image 1
                                             10,  20,  30,  40};   // image 2
  const auto img = write_idx_images("/tmp/sfd_test_images.idx", 3, 2, 2, pixels);
  const auto lab = write_idx_labels("/tmp/sfd_test_labels.idx", {0, 2, 1});
  const auto d = sfd::load_idx(img, lab);
  REQUIRE(d.size() == 3);
  REQUIRE(d.dim() == 4);
  CHECK(d.num_classes == 3);
  CHECK(d.labels == std::vector<int>{0, 2, 1});
  CHECK(d.features.at(0, 0) == 0.0);
  CHECK(d.features.at(0, 1) == 1.0);
  CHECK(d.features.at(0, 2) == doctest::Approx(51.0 / 255));
  CHECK(d.features.at(1, 0) == 1.0);
  CHECK(d.features.at(2, 3) == doctest::Approx(40.0 / 255));
}

TEST_CASE("load_idx: malformed files are named in errors") {
  const std::vector<unsigned char> pixels(12, 7);
  const auto img = write_idx_images("/tmp/sfd_bad_images.idx", 3, 2, 2, pixels);
  const auto lab = write_idx_labels("/tmp/sfd_bad_labels.idx", {0, 1, 2});

  SUBCASE("wrong image magic") {
    write_idx_images("/tmp/sfd_bad_images.idx", 3, 2, 2, pixels, 1234);
    CHECK_THROWS_AS(sfd::load_idx("/tmp/sfd_bad_images.idx", lab),
                    sfd::FormatError);
    const auto msg = message_of(
        [&] { sfd::load_idx("/tmp/sfd_bad_images.idx", lab); });
    CHECK(msg.find("magic") != std::string::npos);
    CHECK(msg.find("1234") != std::string::npos);
  }
  SUBCASE("wrong label magic") {
    write_idx_labels("/tmp/sfd_bad_labels.idx", {0, 1, 2}, 9);
    CHECK_THROWS_AS(sfd::load_idx(img, "/tmp/sfd_bad_labels.idx"),
                    sfd::FormatError);
  }
  SUBCASE("count mismatch") {
    write_idx_labels("/tmp/sfd_bad_labels.idx", {0, 1});
    const auto msg = message_of(
        [&] { sfd::load_idx(img, "/tmp/sfd_bad_labels.idx"); });
    CHECK(msg.find("mismatch") != std::string::npos);
  }
  SUBCASE("truncated pixel data") {
    write_idx_images("/tmp/sfd_bad_images.idx", 3, 2, 2,
                     std::vector<unsigned char>(5, 7));
    CHECK_THROWS_AS(sfd::load_idx("/tmp/sfd_bad_images.idx", lab), sfd::IoError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(sfd::load_idx("/tmp/does_not_exist.idx", lab), sfd::IoError);
  }
}

TEST_CASE("take_per_class keeps the first rows of each class in order") {
  const auto d = tiny_dataset();
  const auto t = sfd::take_per_class(d, 2);
  REQUIRE(t.size() == 4);
  CHECK(t.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(t.features.at(0, 0) == 0.0);
  CHECK(t.features.at(1, 0) == 1.0);
  CHECK(t.features.at(2, 0) == 3.0);
  CHECK(t.features.at(3, 0) == 4.0);
  // Limit above class size keeps everything.
  CHECK(sfd::take_per_class(d, 100).size() == 6);
}

TEST_CASE("subset picks rows by origin index in the given order") {
  const auto d = tiny_dataset();
  const auto s = sfd::subset(d, {4, 0});
  REQUIRE(s.size() == 2);
  CHECK(s.features.at(0, 0) == 4.0);
  CHECK(s.features.at(1, 0) == 0.0);
  CHECK(s.labels == std::vector<int>{1, 0});
  CHECK(s.num_classes == 2);
}

TEST_CASE("dirichlet_sample: simplex membership and K=1") {
  RngStream rng(21);
  auto one = sfd::dirichlet_sample(0.5, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 1.0);

  for (int i = 0; i < 100; ++i) {
    const auto p = sfd::dirichlet_sample(0.5, 5, rng);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(sfd::dirichlet_sample(0.0, 3, rng), sfd::ParameterError);
}

TEST_CASE("dirichlet_sample: huge beta concentrates, tiny beta is sparse") {
  RngStream rng(22);
  for (int i = 0; i < 50; ++i) {
    const auto p = sfd::dirichlet_sample(1e6, 4, rng);
    for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(0.05));
  }
  int sparse = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = sfd::dirichlet_sample(1e-3, 4, rng);
    double mx = 0.0;
    for (double v : p) mx = std::max(mx, v);
    if (mx > 0.95) ++sparse;
  }
  CHECK(sparse >= 990);
}

TEST_CASE("partition: strong non-IID gives one class per client") {
  const auto d = sfd::synth_gaussians(4, 2, 100, 6.0, 0.8, RngStream(5));
  PartitionSpec spec;
  spec.mode = PartitionMode::StrongNonIID;
  spec.num_clients = 4;
  spec.proxy_fraction_per_class = 0.15;
  spec.validation_fraction = 0.2;
  spec.seed = 77;
  const auto fed = sfd::partition(d, spec);

  REQUIRE(fed.client_train.size() == 4);
  for (int k = 0; k < 4; ++k) {
    std::set<int> labels(fed.client_train[k].labels.begin(),
                         fed.client_train[k].labels.end());
    CHECK(labels == std::set<int>{k});
    std::set<int> vlabels(fed.client_validation[k].labels.begin(),
                          fed.client_validation[k].labels.end());
    CHECK(vlabels == std::set<int>{k});
    CHECK(fed.client_train[k].size() > 0);
    CHECK(fed.client_validation[k].size() > 0);
  }
  // 15% of each 100-row class moves to the proxy pool.
  CHECK(fed.proxy_origin.size() == 60);
  CHECK(fed.proxy_truth.size() == 60);
  CHECK(fed.proxy_features.rows == 60);
  all_origins(fed, 400);

  // Proxy truth matches the source labels at the recorded origins.
  for (std::size_t i = 0; i < fed.proxy_origin.size(); ++i) {
    CHECK(fed.proxy_truth[i] == d.labels[fed.proxy_origin[i]]);
  }
}

TEST_CASE("partition: weak non-IID gives two adjacent classes per client") {
  const auto d = sfd::synth_gaussians(4, 2, 100, 6.0, 0.8, RngStream(6));
  PartitionSpec spec;
  spec.mode = PartitionMode::WeakNonIID;
  spec.num_clients = 4;
  spec.seed = 78;
  const auto fed = sfd::partition(d, spec);
  for (int k = 0; k < 4; ++k) {
    std::set<int> labels(fed.client_train[k].labels.begin(),
                         fed.client_train[k].labels.end());
    CHECK(labels == std::set<int>{k % 4, (k + 1) % 4});
  }
  all_origins(fed, 400);
}

TEST_CASE("partition: weak non-IID splits a class equally across receivers") {
  const auto d = sfd::synth_gaussians(4, 2, 100, 6.0, 0.8, RngStream(6));
  PartitionSpec spec;
  spec.mode = PartitionMode::WeakNonIID;
  spec.num_clients = 4;
  spec.seed = 79;
  const auto fed = sfd::partition(d, spec);
  // Class c lands on clients c and (c-1 mod 4); each gets half of the
  // 85 post-proxy rows (within one row), split before validation carving.
  for (int c = 0; c < 4; ++c) {
    std::size_t counts[4] = {0, 0, 0, 0};
    for (int k = 0; k < 4; ++k) {
      for (int lab : fed.client_train[k].labels)
        if (lab == c) ++counts[k];
      for (int lab : fed.client_validation[k].labels)
        if (lab == c) ++counts[k];
    }
    const int holder_a = c;
    const int holder_b = (c + 3) % 4;
    CHECK(counts[holder_a] + counts[holder_b] == 85);
    CHECK(std::abs(static_cast<int>(counts[holder_a]) -
                   static_cast<int>(counts[holder_b])) <= 1);
  }
}

TEST_CASE("partition: IID and Dirichlet cover every index exactly once") {
  const auto d = sfd::synth_gaussians(3, 2, 90, 6.0, 0.8, RngStream(7));
  for (auto mode : {PartitionMode::IID, PartitionMode::Dirichlet}) {
    PartitionSpec spec;
    spec.mode = mode;
    spec.num_clients = 3;
    spec.beta = 100.0;  // keep all clients populated for the Dirichlet case
    spec.seed = 80;
    const auto fed = sfd::partition(d, spec);
    all_origins(fed, 270);
  }
}

TEST_CASE("partition: Dirichlet with huge beta splits every class evenly") {
  const auto d = sfd::synth_gaussians(4, 2, 1000, 6.0, 0.8, RngStream(8));
  PartitionSpec spec;
  spec.mode = PartitionMode::Dirichlet;
  spec.beta = 1e6;
  spec.num_clients = 4;
  spec.seed = 81;
  const auto fed = sfd::partition(d, spec);
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < 4; ++k) {
      std::size_t count = 0;
      for (int lab : fed.client_train[k].labels)
        if (lab == c) ++count;
      for (int lab : fed.client_validation[k].labels)
        if (lab == c) ++count;
      const double share = static_cast<double>(count) / 850.0;
      CHECK(share == doctest::Approx(0.25).epsilon(0.2));
      CHECK(share > 0.20);
      CHECK(share < 0.30);
    }
  }
}

TEST_CASE("partition: Dirichlet with one client takes everything") {
  const auto d = sfd::synth_gaussians(3, 2, 40, 6.0, 0.8, RngStream(9));
  PartitionSpec spec;
  spec.mode = PartitionMode::Dirichlet;
  spec.num_clients = 1;
  spec.seed = 82;
  const auto fed = sfd::partition(d, spec);
  const std::size_t proxy = fed.proxy_origin.size();
  CHECK(fed.client_train[0].size() + fed.client_validation[0].size() ==
        120 - proxy);
}

TEST_CASE("partition: determinism and seed sensitivity") {
  const auto d = sfd::synth_gaussians(4, 2, 50, 6.0, 0.8, RngStream(10));
  PartitionSpec spec;
  spec.mode = PartitionMode::IID;
  spec.num_clients = 3;
  spec.seed = 83;
  const auto a = sfd::partition(d, spec);
  const auto b = sfd::partition(d, spec);
  CHECK(a.train_origin == b.train_origin);
  CHECK(a.validation_origin == b.validation_origin);
  CHECK(a.proxy_origin == b.proxy_origin);
  spec.seed = 84;
  const auto c = sfd::partition(d, spec);
  CHECK(a.proxy_origin != c.proxy_origin);
}

TEST_CASE("partition: error cases") {
  const auto d = sfd::synth_gaussians(3, 2, 30, 6.0, 0.8, RngStream(11));
  PartitionSpec spec;
  spec.mode = PartitionMode::StrongNonIID;
  spec.num_clients = 5;  // more clients than classes
  CHECK_THROWS_AS(sfd::partition(d, spec), sfd::ParameterError);

  spec.num_clients = 3;
  spec.proxy_fraction_per_class = 0.0;
  CHECK_THROWS_AS(sfd::partition(d, spec), sfd::ParameterError);
  spec.proxy_fraction_per_class = 0.15;
  spec.validation_fraction = 1.0;
  CHECK_THROWS_AS(sfd::partition(d, spec), sfd::ParameterError);

  // A class so small a client ends up without validation rows.
  LabeledDataset tiny;
  tiny.features = sfd::Matrix(4, 2);
  tiny.labels = {0, 0, 1, 1};
  tiny.num_classes = 2;
  PartitionSpec tspec;
  tspec.mode = PartitionMode::StrongNonIID;
  tspec.num_clients = 2;
  tspec.proxy_fraction_per_class = 0.25;
  tspec.validation_fraction = 0.2;
  CHECK_THROWS_AS(sfd::partition(tiny, tspec), sfd::PartitionError);
}
