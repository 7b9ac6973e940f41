#include "climfp/io.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace climfp {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'C', 'C', 'M', 'A', 'T', '1'};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    char* end = nullptr;
    out = std::strtod(text.c_str(), &end);
    return end == text.c_str() + text.size() && std::isfinite(out);
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::invalid_input, "cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.empty()) throw Error(errc::invalid_input, "empty CSV file " + path);
    return rows;
}

bool looks_like_header(const std::vector<std::string>& row) {
    for (const auto& field : row) {
        double v;
        if (!parse_double(field, v) && field != "NA") return true;
    }
    return false;
}

}  // namespace

MatrixXd read_matrix_csv(const std::string& path) {
    auto rows = read_csv_rows(path);
    std::size_t start = looks_like_header(rows[0]) ? 1 : 0;
    if (start >= rows.size()) throw Error(errc::invalid_input, "CSV has only a header");
    const std::size_t cols = rows[start].size();
    MatrixXd m(static_cast<int>(rows.size() - start), static_cast<int>(cols));
    for (std::size_t r = start; r < rows.size(); ++r) {
        if (rows[r].size() != cols)
            throw Error(errc::invalid_input, "ragged CSV row in " + path);
        for (std::size_t c = 0; c < cols; ++c) {
            double v;
            if (!parse_double(rows[r][c], v))
                throw Error(errc::invalid_input, "non-numeric CSV cell in " + path);
            m(static_cast<int>(r - start), static_cast<int>(c)) = v;
        }
    }
    return m;
}

void write_matrix_csv(const std::string& path, const MatrixXd& matrix) {
    std::ofstream out(path);
    if (!out) throw Error(errc::invalid_input, "cannot write " + path);
    out << std::setprecision(17);
    for (int r = 0; r < matrix.rows(); ++r) {
        for (int c = 0; c < matrix.cols(); ++c) {
            if (c) out << ',';
            out << matrix(r, c);
        }
        out << '\n';
    }
}

MatrixXd read_matrix_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::invalid_input, "cannot open " + path);
    char magic[8];
    std::uint32_t rows = 0, cols = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw Error(errc::invalid_input, "bad matrix header in " + path);
    MatrixXd m(static_cast<int>(rows), static_cast<int>(cols));
    std::vector<double> buffer(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(double)));
    if (!in) throw Error(errc::invalid_input, "truncated matrix payload in " + path);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = buffer[r * cols + c];
    return m;
}

void write_matrix_binary(const std::string& path, const MatrixXd& matrix) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::invalid_input, "cannot write " + path);
    auto rows = static_cast<std::uint32_t>(matrix.rows());
    auto cols = static_cast<std::uint32_t>(matrix.cols());
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    for (int r = 0; r < matrix.rows(); ++r)
        for (int c = 0; c < matrix.cols(); ++c) {
            double v = matrix(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
}

MatrixXd read_matrix(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        return read_matrix_csv(path);
    return read_matrix_binary(path);
}

void write_matrix(const std::string& path, const MatrixXd& matrix) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        write_matrix_csv(path, matrix);
    else
        write_matrix_binary(path, matrix);
}

GriddedSeries read_gridded_csv(const std::string& path, TimeResolution resolution) {
    auto rows = read_csv_rows(path);
    std::size_t start = looks_like_header(rows[0]) ? 1 : 0;
    if (start >= rows.size()) throw Error(errc::invalid_input, "CSV has only a header");
    const std::size_t cols = rows[start].size();
    GriddedSeries series;
    series.resolution = resolution;
    series.values = MatrixXd::Zero(static_cast<int>(rows.size() - start), static_cast<int>(cols));
    series.mask.setConstant(static_cast<int>(rows.size() - start), static_cast<int>(cols), false);
    for (std::size_t r = start; r < rows.size(); ++r) {
        if (rows[r].size() != cols)
            throw Error(errc::invalid_input, "ragged CSV row in " + path);
        for (std::size_t c = 0; c < cols; ++c) {
            if (rows[r][c] == "NA") continue;
            double v;
            if (!parse_double(rows[r][c], v))
                throw Error(errc::invalid_input, "non-numeric CSV cell in " + path);
            series.values(static_cast<int>(r - start), static_cast<int>(c)) = v;
            series.mask(static_cast<int>(r - start), static_cast<int>(c)) = true;
        }
    }
    return series;
}

void write_gridded_csv(const std::string& path, const GriddedSeries& series) {
    std::ofstream out(path);
    if (!out) throw Error(errc::invalid_input, "cannot write " + path);
    out << std::setprecision(17);
    for (int r = 0; r < series.steps(); ++r) {
        for (int c = 0; c < series.boxes(); ++c) {
            if (c) out << ',';
            if (series.mask(r, c))
                out << series.values(r, c);
            else
                out << "NA";
        }
        out << '\n';
    }
}

void write_covariance(const std::string& matrix_path, const std::string& meta_path,
                      const CovarianceEstimate& estimate) {
    write_matrix(matrix_path, estimate.matrix);
    nlohmann::json meta;
    meta["method"] = cov_method_name(estimate.method);
    meta["dimension"] = estimate.dim();
    meta["c_ratio"] = estimate.c_ratio;
    meta["null_count"] = estimate.decomposition.null_count;
    if (estimate.gamma) meta["gamma"] = *estimate.gamma;
    if (estimate.pooled) {
        meta["pooled"] = {{"spatial_boxes", estimate.pooled->spatial_boxes},
                          {"time_steps", estimate.pooled->time_steps},
                          {"layout", estimate.pooled->layout == GridLayout::box_major
                                         ? "box_major"
                                         : "time_major"}};
    }
    meta["matrix_file"] = matrix_path;
    std::ofstream out(meta_path);
    if (!out) throw Error(errc::invalid_input, "cannot write " + meta_path);
    out << meta.dump(2) << '\n';
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::invalid_input, "cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buffer[65536];
    while (in) {
        in.read(buffer, sizeof(buffer));
        std::streamsize got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    EVP_DigestFinal_ex(ctx, digest, &length);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    hex << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < length; ++i)
        hex << std::setw(2) << static_cast<int>(digest[i]);
    return hex.str();
}

}  // namespace climfp
