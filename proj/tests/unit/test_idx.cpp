#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <zlib.h>

#include "resdiff/idx.hpp"

using namespace resdiff;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<unsigned char>& b, unsigned v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

std::vector<unsigned char> image_file(unsigned magic, unsigned n, unsigned r, unsigned c, int pixels) {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, n);
    put_be32(b, r);
    put_be32(b, c);
    for (int i = 0; i < pixels; ++i) b.push_back(static_cast<unsigned char>(i % 256));
    return b;
}

std::vector<unsigned char> label_file(unsigned n, int labels) {
    std::vector<unsigned char> b;
    put_be32(b, kIdxLabelMagic);
    put_be32(b, n);
    for (int i = 0; i < labels; ++i) b.push_back(static_cast<unsigned char>(i % 10));
    return b;
}

class IdxTest : public ::testing::Test {
protected:
    fs::path dir;
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("resdiff_idx_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string write(const std::string& name, const std::vector<unsigned char>& b) {
        const fs::path p = dir / name;
        std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                                  static_cast<std::streamsize>(b.size()));
        return p.string();
    }
};

}  // namespace

TEST_F(IdxTest, ReadsImagesAndScales) {
    auto b = image_file(kIdxImageMagic, 2, 2, 2, 8);
    b[16 + 7] = 255;
    int r = 0, c = 0;
    const Eigen::MatrixXd m = read_idx_images(write("img", b), &r, &c);
    EXPECT_EQ(r, 2);
    EXPECT_EQ(c, 2);
    ASSERT_EQ(m.rows(), 2);
    EXPECT_DOUBLE_EQ(m(1, 3), 1.0);
    EXPECT_DOUBLE_EQ(m(0, 1), 1.0 / 255);
    EXPECT_DOUBLE_EQ(m(1, 0), 4.0 / 255);
}

TEST_F(IdxTest, ZeroImages) {
    EXPECT_EQ(read_idx_images(write("img", image_file(kIdxImageMagic, 0, 28, 28, 0))).rows(), 0);
}

TEST_F(IdxTest, BadMagicAndTruncation) {
    EXPECT_THROW(read_idx_images(write("a", image_file(0x804, 1, 2, 2, 4))), IdxError);
    EXPECT_THROW(read_idx_images(write("b", image_file(kIdxImageMagic, 2, 2, 2, 5))), IdxError);
    EXPECT_THROW(read_idx_labels(write("c", label_file(5, 4))), IdxError);
    EXPECT_THROW(read_idx_labels(write("d", image_file(kIdxImageMagic, 1, 1, 1, 1))), IdxError);
    EXPECT_THROW(read_idx_images((dir / "missing").string()), IdxError);
}

TEST_F(IdxTest, LimitAndCountMismatch) {
    const std::string img = write("img", image_file(kIdxImageMagic, 3, 1, 2, 6));
    EXPECT_EQ(read_idx_images(img, nullptr, nullptr, 2).rows(), 2);
    EXPECT_EQ(read_idx_labels(write("lab", label_file(3, 3)), 1), std::vector<int>{0});
    const std::string bad = write("lab2", label_file(2, 2));
    EXPECT_THROW(load_idx(img, bad), IdxError);
    const IdxDataset d = load_idx(img, (dir / "lab").string());
    EXPECT_EQ(d.size(), 3);
    EXPECT_EQ(d.labels[2], 2);
}

TEST_F(IdxTest, ReadsGzipFallback) {
    const auto b = label_file(4, 4);
    const std::string p = (dir / "lab").string();
    gzFile f = gzopen((p + ".gz").c_str(), "wb");
    gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
    gzclose(f);
    EXPECT_EQ(read_idx_labels(p), (std::vector<int>{0, 1, 2, 3}));
}

TEST(Mnist, LoadsWhenAvailable) {
    IdxDataset d;
    try {
        d = load_mnist(default_data_dir(), "t10k", 100);
    } catch (const IdxError&) {
        GTEST_SKIP() << "MNIST files not found under " << default_data_dir();
    }
    EXPECT_EQ(d.size(), 100);
    EXPECT_EQ(d.images.cols(), 784);
    EXPECT_GE(d.images.minCoeff(), 0.0);
    EXPECT_LE(d.images.maxCoeff(), 1.0);
    EXPECT_EQ(d.labels[0], 7);  // first test digit
}
