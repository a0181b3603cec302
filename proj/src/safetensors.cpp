// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/safetensors.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "htmoe/errors.hpp"

namespace htmoe {

namespace {

using nlohmann::json;

// Widens one IEEE 754 half-precision value.
double half_to_double(std::uint16_t h) {
    const std::uint32_t sign = (h >> 15) & 0x1;
    const std::uint32_t exp = (h >> 10) & 0x1f;
    const std::uint32_t mant = h & 0x3ff;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign << 31;
        } else {
            // subnormal: renormalize
            std::uint32_t e = 0;
            std::uint32_t m = mant;
            while (!(m & 0x400)) {
                m <<= 1;
                ++e;
            }
            m &= 0x3ff;
            bits = (sign << 31) | ((127 - 15 - e + 1) << 23) | (m << 13);
        }
    } else if (exp == 0x1f) {
        bits = (sign << 31) | (0xff << 23) | (mant << 13);
    } else {
        bits = (sign << 31) | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

double bf16_to_double(std::uint16_t h) {
    const std::uint32_t bits = static_cast<std::uint32_t>(h) << 16;
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

size_t dtype_size(const std::string& dtype) {
    if (dtype == "F16" || dtype == "BF16") return 2;
    if (dtype == "F32") return 4;
    if (dtype == "F64") return 8;
    return 0;
}

}  // namespace

std::vector<TensorRecord> read_safetensors(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IngestError(path.string() + ": cannot open file");

    unsigned char len_bytes[8];
    file.read(reinterpret_cast<char*>(len_bytes), 8);
    if (!file) throw IngestError(path.string() + ": truncated header length");
    std::uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];

    std::string header(header_len, '\0');
    file.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!file) throw IngestError(path.string() + ": truncated JSON header");

    json meta;
    try {
        meta = json::parse(header);
    } catch (const json::exception& e) {
        throw IngestError(path.string() + ": malformed JSON header: " + e.what());
    }
    if (!meta.is_object()) throw IngestError(path.string() + ": JSON header is not an object");

    file.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(file.tellg());
    const std::uint64_t data_base = 8 + header_len;
    const std::uint64_t data_size = file_size - data_base;

    // Collect entries sorted by offset so the read is sequential, then
    // restore name order for the caller (header order is not guaranteed
    // meaningful, so we sort by name for determinism).
    struct Entry {
        std::string name;
        std::string dtype;
        std::vector<std::int64_t> shape;
        std::uint64_t begin, end;
    };
    std::vector<Entry> entries;
    for (auto it = meta.begin(); it != meta.end(); ++it) {
        if (it.key() == "__metadata__") continue;
        const json& info = it.value();
        if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
            !info.contains("data_offsets")) {
            throw IngestError(path.string() + ": tensor '" + it.key() +
                              "' has an incomplete header entry");
        }
        Entry e;
        e.name = it.key();
        e.dtype = info["dtype"].get<std::string>();
        e.shape = info["shape"].get<std::vector<std::int64_t>>();
        const auto offsets = info["data_offsets"].get<std::vector<std::uint64_t>>();
        if (offsets.size() != 2) {
            throw IngestError(path.string() + ": tensor '" + e.name + "' has malformed offsets");
        }
        e.begin = offsets[0];
        e.end = offsets[1];
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.name < b.name; });

    std::vector<TensorRecord> records;
    records.reserve(entries.size());
    for (const Entry& e : entries) {
        const size_t elem = dtype_size(e.dtype);
        if (elem == 0) {
            throw IngestError(path.string() + ": tensor '" + e.name + "' at byte " +
                              std::to_string(data_base + e.begin) + " has unsupported dtype '" +
                              e.dtype + "'");
        }
        std::int64_t count = 1;
        for (std::int64_t d : e.shape) {
            if (d < 0) throw IngestError(path.string() + ": tensor '" + e.name +
                                         "' has a negative dimension");
            count *= d;
        }
        if (e.end < e.begin || e.end > data_size ||
            e.end - e.begin != static_cast<std::uint64_t>(count) * elem) {
            throw IngestError(path.string() + ": tensor '" + e.name + "' at byte " +
                              std::to_string(data_base + e.begin) +
                              " has offsets inconsistent with its shape and dtype");
        }

        std::vector<char> raw(static_cast<size_t>(count) * elem);
        file.seekg(static_cast<std::streamoff>(data_base + e.begin));
        file.read(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (!file) {
            throw IngestError(path.string() + ": tensor '" + e.name + "' payload is truncated");
        }

        TensorRecord record;
        record.name = e.name;
        record.shape = e.shape;
        record.values.resize(static_cast<size_t>(count));
        if (e.dtype == "F64") {
            std::memcpy(record.values.data(), raw.data(), raw.size());
        } else if (e.dtype == "F32") {
            for (size_t i = 0; i < record.values.size(); ++i) {
                float f;
                std::memcpy(&f, raw.data() + i * 4, 4);
                record.values[i] = static_cast<double>(f);
            }
        } else if (e.dtype == "F16") {
            for (size_t i = 0; i < record.values.size(); ++i) {
                std::uint16_t h;
                std::memcpy(&h, raw.data() + i * 2, 2);
                record.values[i] = half_to_double(h);
            }
        } else {  // BF16
            for (size_t i = 0; i < record.values.size(); ++i) {
                std::uint16_t h;
                std::memcpy(&h, raw.data() + i * 2, 2);
                record.values[i] = bf16_to_double(h);
            }
        }
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<TensorRecord> read_safetensors_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> shards;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".safetensors") {
            shards.push_back(entry.path());
        }
    }
    std::sort(shards.begin(), shards.end());

    std::vector<TensorRecord> merged;
    std::set<std::string> seen;
    for (const auto& shard : shards) {
        for (auto& record : read_safetensors(shard)) {
            if (!seen.insert(record.name).second) {
                throw IngestError(dir.string() + ": tensor '" + record.name +
                                  "' appears in more than one shard");
            }
            merged.push_back(std::move(record));
        }
    }
    return merged;
}

std::vector<TensorRecord> read_checkpoint(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return read_safetensors_dir(path);
    if (!std::filesystem::exists(path)) throw IngestError(path.string() + ": no such file");
    return read_safetensors(path);
}

void write_safetensors(const std::filesystem::path& path,
                       const std::vector<TensorRecord>& records, const std::string& dtype) {
    const size_t elem = dtype_size(dtype);
    if (elem == 0 || dtype == "F16" || dtype == "BF16") {
        throw std::invalid_argument("write_safetensors: unsupported dtype " + dtype);
    }

    json header = json::object();
    std::uint64_t offset = 0;
    std::vector<std::vector<char>> payloads;
    for (const TensorRecord& r : records) {
        const std::uint64_t bytes = r.values.size() * elem;
        header[r.name] = {{"dtype", dtype},
                          {"shape", r.shape},
                          {"data_offsets", {offset, offset + bytes}}};
        std::vector<char> raw(bytes);
        if (dtype == "F64") {
            std::memcpy(raw.data(), r.values.data(), bytes);
        } else {  // F32
            for (size_t i = 0; i < r.values.size(); ++i) {
                const float f = static_cast<float>(r.values[i]);
                std::memcpy(raw.data() + i * 4, &f, 4);
            }
        }
        payloads.push_back(std::move(raw));
        offset += bytes;
    }

    const std::string header_str = header.dump();
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IngestError(path.string() + ": cannot open file for writing");
    const std::uint64_t len = header_str.size();
    unsigned char len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    file.write(reinterpret_cast<const char*>(len_bytes), 8);
    file.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& raw : payloads) {
        file.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    }
    if (!file) throw IngestError(path.string() + ": write failed");
}

}  // namespace htmoe
