#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace resdiff {

// Minimal CSV writer: header row, then numeric rows printed with 17
// significant digits so outputs round-trip and are byte-reproducible.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);

    void row(const std::vector<double>& values);
    // cells written verbatim (labels, flags)
    void text_row(const std::vector<std::string>& cells);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::size_t width_;
    std::ofstream out_;
};

std::string format_number(double v);

// Header plus numeric body; NaN cells read as "nan".
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};
CsvTable read_csv(const std::string& path);

}  // namespace resdiff
