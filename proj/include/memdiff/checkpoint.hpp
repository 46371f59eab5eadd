#pragma once

// Checkpoint container, all integers and floats little-endian:
//
//   "MEMDCKPT"                       8 bytes
//   u32 format version               (= 1)
//   u32 data_dim, u32 fourier_frequencies, u32 hidden_width,
//   u32 hidden_layers, u32 activation
//   u32 normalizer dim, f64[dim] mean, f64 scale
//   u64 parameter count, f64[count] parameters

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "memdiff/denoiser_net.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/sample_set.hpp"

namespace memdiff {

struct Checkpoint {
    static constexpr std::string_view kMagic = "MEMDCKPT";
    static constexpr std::uint32_t kVersion = 1;

    DenoiserNet net;
    Normalizer normalizer;
};

namespace detail {

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    bool exhausted() const noexcept { return pos_ == in_.size(); }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw DomainError("checkpoint is truncated");
    }
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const DenoiserNet& net, const Normalizer& norm) {
    detail::ByteWriter w;
    w.bytes(Checkpoint::kMagic);
    w.u32(Checkpoint::kVersion);
    const auto& a = net.architecture();
    w.u32(a.data_dim);
    w.u32(a.fourier_frequencies);
    w.u32(a.hidden_width);
    w.u32(a.hidden_layers);
    w.u32(a.activation);
    w.u32(static_cast<std::uint32_t>(norm.mean.size()));
    for (Eigen::Index i = 0; i < norm.mean.size(); ++i) w.f64(norm.mean[i]);
    w.f64(norm.scale);
    w.u64(net.parameter_count());
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) w.f64(net.parameters()[i]);
    return w.take();
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(Checkpoint::kMagic.size()) != Checkpoint::kMagic) {
        throw DomainError("not a checkpoint (bad magic)");
    }
    const auto version = r.u32();
    if (version != Checkpoint::kVersion) {
        throw DomainError("unsupported checkpoint version " + std::to_string(version));
    }
    NetArchitecture a;
    a.data_dim = r.u32();
    a.fourier_frequencies = r.u32();
    a.hidden_width = r.u32();
    a.hidden_layers = r.u32();
    a.activation = r.u32();
    Normalizer norm;
    const auto dim = r.u32();
    if (dim != a.data_dim) throw DomainError("normalizer dimension mismatch");
    norm.mean.resize(dim);
    for (Eigen::Index i = 0; i < norm.mean.size(); ++i) norm.mean[i] = r.f64();
    norm.scale = r.f64();
    const auto count = r.u64();
    if (count != a.parameter_count()) throw DomainError("checkpoint parameter count mismatch");
    if (count > r.remaining() / 8) throw DomainError("checkpoint is truncated");
    Eigen::VectorXd params(static_cast<Eigen::Index>(count));
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = r.f64();
    if (!r.exhausted()) throw DomainError("trailing bytes after checkpoint");
    return {DenoiserNet(a, std::move(params)), std::move(norm)};
}

inline void write_checkpoint(const std::string& path, const DenoiserNet& net, const Normalizer& norm) {
    const auto bytes = encode_checkpoint(net, norm);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open checkpoint for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path, "write failed");
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open checkpoint");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_checkpoint(bytes);
    } catch (const DomainError& e) {
        throw IoError(path, e.what());
    }
}

}  // namespace memdiff
