#include "doctest.h"

#include "urfb/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace urfb;
namespace fs = std::filesystem;

namespace {

// fresh scratch directory per test case under the ctest working dir
fs::path scratch(const std::string& name) {
    fs::path dir = fs::path("data_test_tmp") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("cifar10 files round-trip bit-exactly through write and load") {
    Rng rng(31);
    SynthImages img = make_synth_images(rng, 12, 10, 3, 32, 32, 24.0);
    fs::path dir = scratch("c10");
    write_cifar10((dir / "data_batch_1.bin").string(), img.labels, img.pixels);

    Dataset d = load_cifar10_file((dir / "data_batch_1.bin").string());
    REQUIRE(d.size() == 12);
    CHECK(d.classes == 10);
    CHECK(d.shape == FeatShape::image(3, 32, 32));
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(d.labels[i] == int(img.labels[i]));
        for (std::size_t j = 0; j < 3072; ++j)
            REQUIRE(d.X.at(i, j) == double(img.pixels[i * 3072 + j]) / 255.0);
    }
}

TEST_CASE("cifar10 directories prefer data_batch files and concatenate in order") {
    Rng rng(32);
    SynthImages a = make_synth_images(rng, 3, 10, 3, 32, 32, 24.0);
    SynthImages b = make_synth_images(rng, 2, 10, 3, 32, 32, 24.0);
    fs::path dir = scratch("c10dir");
    write_cifar10((dir / "data_batch_1.bin").string(), a.labels, a.pixels);
    write_cifar10((dir / "data_batch_2.bin").string(), b.labels, b.pixels);
    // a non-batch .bin must be ignored when data_batch_* files are present
    write_cifar10((dir / "test_batch.bin").string(), b.labels, b.pixels);
    std::ofstream(dir / "readme.txt") << "not a dataset\n";

    Dataset d = load_cifar10(dir.string());
    REQUIRE(d.size() == 5);
    CHECK(d.labels[0] == int(a.labels[0]));
    CHECK(d.labels[3] == int(b.labels[0]));
    CHECK(d.X.at(4, 100) == double(b.pixels[1 * 3072 + 100]) / 255.0);

    // without data_batch files, any .bin is read
    fs::path dir2 = scratch("c10any");
    write_cifar10((dir2 / "mybatch.bin").string(), b.labels, b.pixels);
    CHECK(load_cifar10(dir2.string()).size() == 2);

    CHECK_THROWS_WITH_AS(load_cifar10((dir2 / "missing").string()),
                         doctest::Contains("does not exist"), std::runtime_error);
    CHECK_THROWS_WITH_AS(load_cifar10(scratch("c10empty").string()),
                         doctest::Contains("no .bin files"), std::runtime_error);
}

TEST_CASE("cifar100 records carry coarse and fine labels; the fine one is used") {
    Rng rng(33);
    SynthImages img = make_synth_images(rng, 4, 100, 3, 32, 32, 24.0);
    std::vector<std::uint8_t> coarse = {1, 2, 3, 4};
    fs::path dir = scratch("c100");
    write_cifar100((dir / "train.bin").string(), coarse, img.labels, img.pixels);

    Dataset d = load_cifar100(dir.string());
    REQUIRE(d.size() == 4);
    CHECK(d.classes == 100);
    for (std::size_t i = 0; i < 4; ++i) CHECK(d.labels[i] == int(img.labels[i]));
    REQUIRE(d.X.at(2, 77) == double(img.pixels[2 * 3072 + 77]) / 255.0);

    std::vector<std::uint8_t> bad_coarse = {1};
    CHECK_THROWS_AS(
        write_cifar100((dir / "x.bin").string(), bad_coarse, img.labels, img.pixels),
        std::invalid_argument);
}

TEST_CASE("idx image/label pairs round-trip, including non-square sizes") {
    Rng rng(34);
    SynthImages img = make_synth_images(rng, 7, 10, 1, 5, 4, 10.0);
    fs::path dir = scratch("idx");
    write_idx_images((dir / "train-images-idx3-ubyte").string(), img.pixels, 7, 5, 4);
    write_idx_labels((dir / "train-labels-idx1-ubyte").string(), img.labels);

    Dataset d = load_mnist(dir.string());
    REQUIRE(d.size() == 7);
    CHECK(d.shape == FeatShape::image(1, 5, 4));
    CHECK(d.classes == 10);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(d.labels[i] == int(img.labels[i]));
        for (std::size_t j = 0; j < 20; ++j)
            REQUIRE(d.X.at(i, j) == double(img.pixels[i * 20 + j]) / 255.0);
    }
}

TEST_CASE("malformed dataset files are rejected with a reason") {
    fs::path dir = scratch("bad");

    // truncated cifar record
    std::ofstream(dir / "data_batch_1.bin", std::ios::binary) << "short";
    CHECK_THROWS_WITH_AS(load_cifar10_file((dir / "data_batch_1.bin").string()),
                         doctest::Contains("truncated"), std::runtime_error);

    // wrong idx magic
    std::vector<std::uint8_t> px(20, 0);
    std::vector<std::uint8_t> lb = {0};
    write_idx_images((dir / "img").string(), px, 1, 5, 4);
    write_idx_labels((dir / "lab").string(), lb);
    CHECK_THROWS_WITH_AS(load_idx_pair((dir / "img").string(), (dir / "img").string()),
                         doctest::Contains("magic"), std::runtime_error);

    // image/label count mismatch
    std::vector<std::uint8_t> lb2 = {0, 1};
    write_idx_labels((dir / "lab2").string(), lb2);
    CHECK_THROWS_WITH_AS(load_idx_pair((dir / "img").string(), (dir / "lab2").string()),
                         doctest::Contains("count"), std::runtime_error);

    // empty files are valid and empty
    std::ofstream(dir / "empty.bin", std::ios::binary).flush();
    CHECK(load_cifar10_file((dir / "empty.bin").string()).size() == 0);
}

TEST_CASE("toy blobs are seeded, separated, and labeled by their center") {
    Rng rng(35);
    Dataset d = toy_blobs(rng, 25, 4, 7, 10.0);
    REQUIRE(d.size() == 100);
    CHECK(d.classes == 4);
    CHECK(d.shape == FeatShape::flat(7));

    // per-class means recover the centers; every sample sits nearest its own
    std::vector<std::vector<double>> centers(4, std::vector<double>(7, 0.0));
    std::vector<int> counts(4, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        counts[d.labels[i]]++;
        for (std::size_t j = 0; j < 7; ++j) centers[d.labels[i]][j] += d.X.at(i, j);
    }
    for (int c = 0; c < 4; ++c) {
        CHECK(counts[c] == 25);
        for (auto& v : centers[c]) v /= 25.0;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < 4; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                const double diff = d.X.at(i, j) - centers[c][j];
                dist += diff * diff;
            }
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        REQUIRE(best == d.labels[i]);
    }

    // determinism: same seed, same draw
    Rng rng2(35);
    Dataset d2 = toy_blobs(rng2, 25, 4, 7, 10.0);
    for (std::size_t e = 0; e < d.X.size(); ++e) REQUIRE(d.X[e] == d2.X[e]);
    Rng rng3(36);
    Dataset d3 = toy_blobs(rng3, 25, 4, 7, 10.0);
    CHECK(d.X[0] != d3.X[0]);
}

TEST_CASE("synthetic image corpus has image geometry and is seed-stable") {
    Rng rng(37);
    Dataset d = synth_dataset(rng, 20, 24.0);
    REQUIRE(d.size() == 20);
    CHECK(d.classes == 10);
    CHECK(d.shape == FeatShape::image(3, 32, 32));
    for (std::size_t e = 0; e < d.X.size(); ++e) {
        REQUIRE(d.X[e] >= 0.0);
        REQUIRE(d.X[e] <= 1.0);
        // quantized to byte planes before scaling
        REQUIRE(d.X[e] * 255.0 == std::round(d.X[e] * 255.0));
    }
    Rng rng2(37);
    Dataset d2 = synth_dataset(rng2, 20, 24.0);
    for (std::size_t e = 0; e < d.X.size(); ++e) REQUIRE(d.X[e] == d2.X[e]);
    // labels cover several classes in 20 draws
    std::vector<int> seen(10, 0);
    for (int y : d.labels) seen[y]++;
    int distinct = 0;
    for (int c : seen) distinct += c > 0;
    CHECK(distinct >= 3);
}

TEST_CASE("gather helpers select rows by shuffled index") {
    Tensor X({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31});
    std::vector<int> labels = {0, 1, 2, 3};
    std::vector<int> order = {2, 0, 3, 1};
    Tensor rows = gather_rows(X, order, 1, 3);
    CHECK(rows.dim(0) == 2);
    CHECK(rows.at(0, 0) == 0.0);
    CHECK(rows.at(1, 0) == 30.0);
    auto labs = gather_labels(labels, order, 1, 3);
    CHECK(labs == std::vector<int>{0, 3});
}
