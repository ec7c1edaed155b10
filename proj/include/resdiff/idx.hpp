#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace resdiff {

class IdxError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct IdxDataset {
    int rows = 0, cols = 0;
    Eigen::MatrixXd images;  // N x rows*cols, row-major pixels scaled by 1/255
    std::vector<int> labels;
    Eigen::Index size() const { return images.rows(); }
};

constexpr unsigned kIdxImageMagic = 0x00000803;  // 2051
constexpr unsigned kIdxLabelMagic = 0x00000801;  // 2049

// Reads plain or gzip-compressed IDX files. `limit` >= 0 keeps the first
// `limit` records. Falls back to `path.gz` when `path` does not exist.
Eigen::MatrixXd read_idx_images(const std::string& path, int* rows = nullptr, int* cols = nullptr,
                                long limit = -1);
std::vector<int> read_idx_labels(const std::string& path, long limit = -1);
IdxDataset load_idx(const std::string& images, const std::string& labels, long limit = -1);

// Standard MNIST file names under `dir`; split is "train" or "t10k".
IdxDataset load_mnist(const std::string& dir, const std::string& split, long limit = -1);

// Data directory: $RESDIFF_DATA_DIR, else the build-time default.
std::string default_data_dir();

}  // namespace resdiff
