#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dendron/streams.hpp"

namespace dendron {

namespace {

struct IdxHeader {
    std::vector<std::size_t> dims;
    std::size_t data_offset = 0;
    std::size_t element_count = 1;
};

IdxHeader parse_idx_header(const std::string& path, const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4)
        throw FormatError(path + ": truncated IDX magic (file has " +
                              std::to_string(bytes.size()) + " bytes) at byte 0",
                          0);
    if (bytes[0] != 0 || bytes[1] != 0)
        throw FormatError(path + ": bad IDX magic at byte 0", 0);
    if (bytes[2] != 0x08)
        throw FormatError(path + ": unsupported IDX type 0x" + std::to_string(bytes[2]) +
                              " (only unsigned byte 0x08) at byte 2",
                          2);
    const std::size_t ndims = bytes[3];
    if (ndims == 0) throw FormatError(path + ": zero-dimension IDX header at byte 3", 3);

    IdxHeader h;
    std::size_t off = 4;
    for (std::size_t i = 0; i < ndims; ++i, off += 4) {
        if (off + 4 > bytes.size())
            throw FormatError(path + ": truncated dimension field at byte " + std::to_string(off),
                              static_cast<long long>(off));
        const std::size_t dim = (static_cast<std::size_t>(bytes[off]) << 24) |
                                (static_cast<std::size_t>(bytes[off + 1]) << 16) |
                                (static_cast<std::size_t>(bytes[off + 2]) << 8) |
                                static_cast<std::size_t>(bytes[off + 3]);
        if (dim == 0)
            throw FormatError(path + ": zero dimension size at byte " + std::to_string(off),
                              static_cast<long long>(off));
        h.dims.push_back(dim);
        h.element_count *= dim;
    }
    h.data_offset = off;
    if (bytes.size() - off < h.element_count)
        throw FormatError(path + ": expected " + std::to_string(h.element_count) +
                              " data bytes, found " + std::to_string(bytes.size() - off) +
                              " at byte " + std::to_string(off),
                          static_cast<long long>(off));
    return h;
}

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace

Tensor load_idx(const std::string& path) {
    const auto bytes = read_all(path);
    const IdxHeader h = parse_idx_header(path, bytes);
    std::vector<double> data(h.element_count);
    for (std::size_t i = 0; i < h.element_count; ++i)
        data[i] = static_cast<double>(bytes[h.data_offset + i]) / 255.0;
    return Tensor(h.dims, std::move(data));
}

std::vector<std::int32_t> load_idx_labels(const std::string& path) {
    const auto bytes = read_all(path);
    const IdxHeader h = parse_idx_header(path, bytes);
    std::vector<std::int32_t> labels(h.element_count);
    for (std::size_t i = 0; i < h.element_count; ++i)
        labels[i] = static_cast<std::int32_t>(bytes[h.data_offset + i]);
    return labels;
}

void write_idx(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open file for writing");
    const auto& shape = t.shape();
    if (shape.size() > 255) throw ValidationError("IDX supports at most 255 dimensions");
    unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(shape.size())};
    out.write(reinterpret_cast<const char*>(magic), 4);
    for (std::size_t dim : shape) {
        unsigned char be[4] = {static_cast<unsigned char>((dim >> 24) & 0xff),
                               static_cast<unsigned char>((dim >> 16) & 0xff),
                               static_cast<unsigned char>((dim >> 8) & 0xff),
                               static_cast<unsigned char>(dim & 0xff)};
        out.write(reinterpret_cast<const char*>(be), 4);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const long v = std::lround(t[i] * 255.0);
        if (v < 0 || v > 255)
            throw ValidationError("IDX writer expects values in [0, 1], got " +
                                  std::to_string(t[i]));
        const unsigned char b = static_cast<unsigned char>(v);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw FormatError(path + ": write failed");
}

TaskPair load_idx_pair(const std::string& dir) {
    auto flatten = [](Tensor t) {
        const auto& s = t.shape();
        if (s.size() < 2) throw FormatError("IDX image tensor must have rank >= 2");
        std::size_t per = 1;
        for (std::size_t i = 1; i < s.size(); ++i) per *= s[i];
        return Tensor({s[0], per}, std::move(t.values()));
    };
    auto load_split = [&](const std::string& images, const std::string& labels, Split split) {
        TaskDataset d;
        d.features = flatten(load_idx(dir + "/" + images));
        d.labels = load_idx_labels(dir + "/" + labels);
        if (d.features.rows() != d.labels.size())
            throw FormatError(dir + ": " + images + " has " + std::to_string(d.features.rows()) +
                              " images but " + labels + " has " + std::to_string(d.labels.size()) +
                              " labels");
        std::int32_t max_label = 0;
        for (std::int32_t l : d.labels) max_label = std::max(max_label, l);
        d.class_count = max_label + 1;
        d.split = split;
        return d;
    };
    TaskPair pair;
    pair.train = load_split("train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::kTrain);
    pair.test = load_split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::kTest);
    // the two splits must agree on the label space
    pair.train.class_count = pair.test.class_count =
        std::max(pair.train.class_count, pair.test.class_count);
    return pair;
}

} // namespace dendron
