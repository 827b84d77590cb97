#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "soir/image.hpp"

namespace soir {

static_assert(std::endian::native == std::endian::little,
              "binary container assumes a little-endian host");

/// Binary matrix container: 16-byte header (magic "SOIR", u32 version,
/// u32 nx = columns, u32 ny = rows), then ny*nx f64 values row-major,
/// little-endian throughout.
inline void write_soir_matrix(const std::string& path, const MatrixXd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_soir_matrix: cannot open " + path);
    const char magic[4] = {'S', 'O', 'I', 'R'};
    const std::uint32_t version = 1;
    const std::uint32_t nx = static_cast<std::uint32_t>(m.cols());
    const std::uint32_t ny = static_cast<std::uint32_t>(m.rows());
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&nx), 4);
    out.write(reinterpret_cast<const char*>(&ny), 4);
    std::vector<double> row(nx);
    for (std::uint32_t r = 0; r < ny; ++r) {
        for (std::uint32_t c = 0; c < nx; ++c) row[c] = m(r, c);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(sizeof(double) * nx));
    }
    if (!out) throw std::runtime_error("write_soir_matrix: write failed for " + path);
}

inline MatrixXd read_soir_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_soir_matrix: cannot open " + path);
    char magic[4];
    std::uint32_t version = 0, nx = 0, ny = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&nx), 4);
    in.read(reinterpret_cast<char*>(&ny), 4);
    if (!in || std::memcmp(magic, "SOIR", 4) != 0)
        throw std::runtime_error("read_soir_matrix: bad header in " + path);
    if (version != 1)
        throw std::runtime_error("read_soir_matrix: unsupported container version");
    MatrixXd m(ny, nx);
    std::vector<double> row(nx);
    for (std::uint32_t r = 0; r < ny; ++r) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(sizeof(double) * nx));
        if (!in) throw std::runtime_error("read_soir_matrix: truncated file " + path);
        for (std::uint32_t c = 0; c < nx; ++c) m(r, c) = row[c];
    }
    return m;
}

inline void write_soir_image(const std::string& path, const Image2D& img) {
    write_soir_matrix(path, img.as_matrix());
}

inline Image2D read_soir_image(const std::string& path) {
    return Image2D::from_matrix(read_soir_matrix(path));
}

/// Shortest decimal form that round-trips a double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[40];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

/// CSV image format: ny rows of nx comma-separated values.
inline void write_csv_image(const std::string& path, const Image2D& img) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv_image: cannot open " + path);
    for (int iy = 0; iy < img.ny(); ++iy) {
        for (int ix = 0; ix < img.nx(); ++ix) {
            if (ix) out << ',';
            out << format_double(img(ix, iy));
        }
        out << '\n';
    }
}

inline Image2D read_csv_image(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv_image: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("read_csv_image: non-numeric cell in " + path);
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("read_csv_image: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("read_csv_image: empty file " + path);
    const int ny = static_cast<int>(rows.size());
    const int nx = static_cast<int>(rows.front().size());
    VectorXd values(static_cast<Eigen::Index>(nx) * ny);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) values[static_cast<Eigen::Index>(iy) * nx + ix] = rows[iy][ix];
    return Image2D(nx, ny, values); // constructor rejects non-finite cells
}

inline MatrixXd read_csv_matrix(const std::string& path) {
    const Image2D img = read_csv_image(path);
    return img.as_matrix();
}

} // namespace soir
