#pragma once

#include <optional>
#include <string>

#include "climfp/pipeline.hpp"
#include "climfp/types.hpp"

namespace climfp {

// Matrix CSV: one row per line, comma-separated finite decimals, optional
// header detected by non-numeric first line. "NA" marks missing cells in
// masked (gridded) files; plain matrix readers reject it.
MatrixXd read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const MatrixXd& matrix);

// Columnar binary matrix format: 8-byte magic "DACCMAT1", u32 rows, u32 cols
// (little endian), then row-major f64 payload.
MatrixXd read_matrix_binary(const std::string& path);
void write_matrix_binary(const std::string& path, const MatrixXd& matrix);

// Dispatch on extension: .csv -> CSV, anything else -> binary.
MatrixXd read_matrix(const std::string& path);
void write_matrix(const std::string& path, const MatrixXd& matrix);

GriddedSeries read_gridded_csv(const std::string& path, TimeResolution resolution);
void write_gridded_csv(const std::string& path, const GriddedSeries& series);

// JSON metadata next to a matrix payload.
void write_covariance(const std::string& matrix_path, const std::string& meta_path,
                      const CovarianceEstimate& estimate);

std::string sha256_file(const std::string& path);

}  // namespace climfp
