#include "resdiff/idx.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>

#include <zlib.h>

namespace resdiff {

namespace {

struct GzCloser {
    void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzPtr = std::unique_ptr<gzFile_s, GzCloser>;

std::string resolve(const std::string& path) {
    if (std::filesystem::exists(path)) return path;
    if (std::filesystem::exists(path + ".gz")) return path + ".gz";
    throw IdxError("IDX file not found: " + path);
}

GzPtr open(const std::string& path) {
    gzFile f = gzopen(resolve(path).c_str(), "rb");
    if (!f) throw IdxError("cannot open " + path);
    return GzPtr(f);
}

void read_exact(gzFile f, void* buf, std::size_t n, const std::string& path) {
    std::size_t done = 0;
    auto* p = static_cast<unsigned char*>(buf);
    while (done < n) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
        const int got = gzread(f, p + done, chunk);
        if (got <= 0) throw IdxError("truncated IDX file: " + path);
        done += static_cast<std::size_t>(got);
    }
}

std::uint32_t read_be32(gzFile f, const std::string& path) {
    unsigned char b[4];
    read_exact(f, b, 4, path);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

Eigen::MatrixXd read_idx_images(const std::string& path, int* rows, int* cols, long limit) {
    GzPtr f = open(path);
    const std::uint32_t magic = read_be32(f.get(), path);
    if (magic != kIdxImageMagic) throw IdxError("bad image magic in " + path + " (expected 2051)");
    const long n = read_be32(f.get(), path);
    const int r = static_cast<int>(read_be32(f.get(), path));
    const int c = static_cast<int>(read_be32(f.get(), path));
    if (rows) *rows = r;
    if (cols) *cols = c;
    const long keep = limit >= 0 ? std::min(limit, n) : n;
    const std::size_t px = static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    std::vector<unsigned char> buf(static_cast<std::size_t>(keep) * px);
    if (!buf.empty()) read_exact(f.get(), buf.data(), buf.size(), path);
    if (keep == n && gzgetc(f.get()) != -1) throw IdxError("trailing bytes in " + path);
    Eigen::MatrixXd out(keep, static_cast<Eigen::Index>(px));
    for (long i = 0; i < keep; ++i)
        for (std::size_t j = 0; j < px; ++j)
            out(i, static_cast<Eigen::Index>(j)) = buf[static_cast<std::size_t>(i) * px + j] / 255.0;
    return out;
}

std::vector<int> read_idx_labels(const std::string& path, long limit) {
    GzPtr f = open(path);
    const std::uint32_t magic = read_be32(f.get(), path);
    if (magic != kIdxLabelMagic) throw IdxError("bad label magic in " + path + " (expected 2049)");
    const long n = read_be32(f.get(), path);
    const long keep = limit >= 0 ? std::min(limit, n) : n;
    std::vector<unsigned char> buf(static_cast<std::size_t>(keep));
    if (!buf.empty()) read_exact(f.get(), buf.data(), buf.size(), path);
    if (keep == n && gzgetc(f.get()) != -1) throw IdxError("trailing bytes in " + path);
    return std::vector<int>(buf.begin(), buf.end());
}

IdxDataset load_idx(const std::string& images, const std::string& labels, long limit) {
    IdxDataset d;
    d.images = read_idx_images(images, &d.rows, &d.cols, limit);
    d.labels = read_idx_labels(labels, limit);
    if (static_cast<Eigen::Index>(d.labels.size()) != d.images.rows())
        throw IdxError("image and label counts differ");
    return d;
}

IdxDataset load_mnist(const std::string& dir, const std::string& split, long limit) {
    if (split != "train" && split != "t10k") throw std::invalid_argument("load_mnist: split must be train or t10k");
    const std::filesystem::path p(dir);
    return load_idx((p / (split + "-images-idx3-ubyte")).string(), (p / (split + "-labels-idx1-ubyte")).string(),
                    limit);
}

std::string default_data_dir() {
    if (const char* e = std::getenv("RESDIFF_DATA_DIR"); e && *e) return e;
#ifdef RESDIFF_DEFAULT_DATA_DIR
    return RESDIFF_DEFAULT_DATA_DIR;
#else
    return "data/mnist";
#endif
}

}  // namespace resdiff
