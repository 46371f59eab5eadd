#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "memdiff/checkpoint.hpp"

using namespace memdiff;

namespace {

Checkpoint sample_checkpoint() {
    NetArchitecture a;
    a.hidden_width = 8;
    DenoiserNet net(a, 5);
    Normalizer n;
    n.mean = Vector(2);
    n.mean << 0.25, -1.5;
    n.scale = 1.75;
    return {net, n};
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("memdiff_test_" + name)).string();
}

}  // namespace

TEST(Checkpoint, BitExactRoundTrip) {
    const auto c = sample_checkpoint();
    const auto bytes = encode_checkpoint(c.net, c.normalizer);
    // magic + version + 5 arch fields + dim + mean + scale + count + params
    EXPECT_EQ(bytes.size(), 8u + 4 + 5 * 4 + 4 + 2 * 8 + 8 + 8 + 8 * c.net.parameter_count());
    EXPECT_EQ(std::memcmp(bytes.data(), "MEMDCKPT", 8), 0);
    const auto d = decode_checkpoint(bytes);
    EXPECT_TRUE(d.net.architecture() == c.net.architecture());
    EXPECT_EQ(std::memcmp(d.net.parameters().data(), c.net.parameters().data(), 8 * c.net.parameter_count()), 0);
    EXPECT_TRUE(d.normalizer.mean == c.normalizer.mean);
    EXPECT_EQ(d.normalizer.scale, c.normalizer.scale);
    EXPECT_EQ(encode_checkpoint(d.net, d.normalizer), bytes);
}

TEST(Checkpoint, LittleEndianLayout) {
    const auto c = sample_checkpoint();
    const auto bytes = encode_checkpoint(c.net, c.normalizer);
    EXPECT_EQ(bytes[8], 1);  // version 1, low byte first
    EXPECT_EQ(bytes[9], 0);
    EXPECT_EQ(bytes[12], 2);  // data_dim
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[36 + i]) << (8 * i);
    EXPECT_EQ(std::bit_cast<double>(bits), 0.25);
}

TEST(Checkpoint, RejectsMalformedInput) {
    const auto c = sample_checkpoint();
    auto bytes = encode_checkpoint(c.net, c.normalizer);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad), DomainError);
    bad = bytes;
    bad[8] = 2;
    EXPECT_THROW(decode_checkpoint(bad), DomainError);
    bad = bytes;
    bad.pop_back();
    EXPECT_THROW(decode_checkpoint(bad), DomainError);
    bad = bytes;
    bad.push_back(0);
    EXPECT_THROW(decode_checkpoint(bad), DomainError);
    bad = bytes;
    bad[32] = 0xff;  // normalizer dimension
    EXPECT_THROW(decode_checkpoint(bad), DomainError);
    EXPECT_THROW(decode_checkpoint({}), DomainError);
}

TEST(Checkpoint, FilesAreReproducible) {
    const auto c = sample_checkpoint();
    const auto p1 = temp_path("a.ckpt"), p2 = temp_path("b.ckpt");
    write_checkpoint(p1, c.net, c.normalizer);
    write_checkpoint(p2, sample_checkpoint().net, c.normalizer);
    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb);
    EXPECT_TRUE(read_checkpoint(p1).net.parameters() == c.net.parameters());
    EXPECT_THROW(read_checkpoint(temp_path("missing.ckpt")), IoError);
    EXPECT_THROW(write_checkpoint("/nonexistent-dir/x.ckpt", c.net, c.normalizer), IoError);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}
