// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/npy.hpp"

#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "htmoe/errors.hpp"

namespace htmoe {

namespace {

constexpr char kMagic[] = "\x93NUMPY";

struct NpyHeader {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::int64_t> shape;
};

NpyHeader parse_header_dict(const std::string& header, const std::string& path) {
    NpyHeader out;

    std::smatch m;
    if (!std::regex_search(header, m, std::regex(R"('descr':\s*'([^']+)')"))) {
        throw IngestError(path + ": npy header missing 'descr'");
    }
    out.descr = m[1];

    if (!std::regex_search(header, m, std::regex(R"('fortran_order':\s*(True|False))"))) {
        throw IngestError(path + ": npy header missing 'fortran_order'");
    }
    out.fortran_order = (m[1] == "True");

    if (!std::regex_search(header, m, std::regex(R"('shape':\s*\(([^)]*)\))"))) {
        throw IngestError(path + ": npy header missing 'shape'");
    }
    std::string dims = m[1];
    std::stringstream ss(dims);
    std::string dim;
    while (std::getline(ss, dim, ',')) {
        // Trailing comma of 1-tuples yields an empty token.
        size_t begin = dim.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        size_t end = dim.find_last_not_of(" \t");
        out.shape.push_back(std::stoll(dim.substr(begin, end - begin + 1)));
    }
    return out;
}

// Converts a flat Fortran-order (column-major) buffer to row-major.
std::vector<double> fortran_to_c(const std::vector<double>& src,
                                 const std::vector<std::int64_t>& shape) {
    const size_t rank = shape.size();
    if (rank <= 1) return src;
    std::vector<double> dst(src.size());
    std::vector<std::int64_t> idx(rank, 0);
    for (size_t flat_c = 0; flat_c < src.size(); ++flat_c) {
        std::int64_t flat_f = 0;
        std::int64_t stride = 1;
        for (size_t d = 0; d < rank; ++d) {
            flat_f += idx[d] * stride;
            stride *= shape[d];
        }
        dst[flat_c] = src[static_cast<size_t>(flat_f)];
        // row-major increment: last dimension fastest
        for (size_t d = rank; d-- > 0;) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return dst;
}

}  // namespace

TensorRecord read_npy(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IngestError(path.string() + ": cannot open file");

    char magic[6];
    file.read(magic, 6);
    if (!file || std::memcmp(magic, kMagic, 6) != 0) {
        throw IngestError(path.string() + ": bad npy magic");
    }

    unsigned char version[2];
    file.read(reinterpret_cast<char*>(version), 2);
    if (!file || version[0] != 1 || version[1] != 0) {
        throw IngestError(path.string() + ": unsupported npy version " +
                          std::to_string(int(version[0])) + "." + std::to_string(int(version[1])));
    }

    unsigned char len_bytes[2];
    file.read(reinterpret_cast<char*>(len_bytes), 2);
    if (!file) throw IngestError(path.string() + ": truncated npy header length");
    const size_t header_len = size_t(len_bytes[0]) | (size_t(len_bytes[1]) << 8);

    std::string header(header_len, '\0');
    file.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!file) throw IngestError(path.string() + ": truncated npy header");

    const NpyHeader h = parse_header_dict(header, path.string());

    size_t elem_size = 0;
    if (h.descr == "<f8") {
        elem_size = 8;
    } else if (h.descr == "<f4") {
        elem_size = 4;
    } else {
        throw IngestError(path.string() + ": unsupported npy descr '" + h.descr + "'");
    }

    std::int64_t count = 1;
    for (std::int64_t d : h.shape) {
        if (d < 0) throw IngestError(path.string() + ": negative dimension in npy shape");
        count *= d;
    }

    std::vector<char> raw(static_cast<size_t>(count) * elem_size);
    file.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!file) throw IngestError(path.string() + ": truncated npy payload");

    std::vector<double> values(static_cast<size_t>(count));
    if (elem_size == 8) {
        std::memcpy(values.data(), raw.data(), raw.size());
    } else {
        for (size_t i = 0; i < values.size(); ++i) {
            float f;
            std::memcpy(&f, raw.data() + i * 4, 4);
            values[i] = static_cast<double>(f);
        }
    }
    if (h.fortran_order) values = fortran_to_c(values, h.shape);

    TensorRecord record;
    record.name = path.stem().string();
    record.shape = h.shape;
    record.values = std::move(values);
    return record;
}

void write_npy(const std::filesystem::path& path, const TensorRecord& record) {
    std::ostringstream dict;
    dict << "{'descr': '<f8', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < record.shape.size(); ++i) {
        dict << record.shape[i];
        if (record.shape.size() == 1 || i + 1 < record.shape.size()) dict << ",";
        if (i + 1 < record.shape.size()) dict << " ";
    }
    dict << "), }";

    std::string header = dict.str();
    // Pad so that magic + version + length + header is a multiple of 64,
    // with a terminating newline.
    const size_t preamble = 6 + 2 + 2;
    size_t total = preamble + header.size() + 1;
    const size_t padded = (total + 63) / 64 * 64;
    header.append(padded - total, ' ');
    header.push_back('\n');

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IngestError(path.string() + ": cannot open file for writing");
    file.write(kMagic, 6);
    const unsigned char version[2] = {1, 0};
    file.write(reinterpret_cast<const char*>(version), 2);
    const size_t len = header.size();
    const unsigned char len_bytes[2] = {static_cast<unsigned char>(len & 0xff),
                                        static_cast<unsigned char>((len >> 8) & 0xff)};
    file.write(reinterpret_cast<const char*>(len_bytes), 2);
    file.write(header.data(), static_cast<std::streamsize>(header.size()));
    file.write(reinterpret_cast<const char*>(record.values.data()),
               static_cast<std::streamsize>(record.values.size() * sizeof(double)));
    if (!file) throw IngestError(path.string() + ": write failed");
}

}  // namespace htmoe
