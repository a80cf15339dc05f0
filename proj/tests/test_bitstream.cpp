// Copyright 2026 The vfpga Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>
#include <zlib.h>

#include "oracles.hpp"
#include "vfpga/bitstream.hpp"
#include "vfpga/crc32.hpp"

using namespace vfpga;

namespace
{

KernelDescriptor random_descriptor(std::mt19937_64& rng)
{
  KernelDescriptor d;
  d.kind = static_cast<KernelKind>(1 + rng() % 4);
  d.static_cycles_per_item = static_cast<std::uint32_t>(rng());
  auto n = rng() % (kArgSlots + 1);
  for (std::size_t i = 0; i < n; ++i)
    {
      ParamSlot p;
      auto len = rng() % 12;
      for (std::size_t c = 0; c < len; ++c)
        p.name.push_back(static_cast<char>('a' + rng() % 26));
      p.width = static_cast<std::uint8_t>(rng() % 65);
      d.param_schema.push_back(p);
    }
  return d;
}

std::uint32_t zlib_crc(ByteView data)
{
  return static_cast<std::uint32_t>(
    ::crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

} // namespace

TEST(Crc32, KnownVector)
{
  std::string s = "123456789";
  Bytes b(s.begin(), s.end());
  EXPECT_EQ(vfpga::crc32(b), 0xCBF43926u);
}

TEST(Crc32, MatchesZlibAndBitwiseReference)
{
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i)
    {
      auto data = oracle::random_bytes(rng, rng() % 2048);
      auto ours = vfpga::crc32(data);
      EXPECT_EQ(ours, zlib_crc(data));
      EXPECT_EQ(ours, oracle::crc32_bitwise(data));
    }
}

TEST(Crc32, Incremental)
{
  std::mt19937_64 rng(8);
  auto data = oracle::random_bytes(rng, 1000);
  ByteView v(data);
  EXPECT_EQ(vfpga::crc32(v.subspan(400), vfpga::crc32(v.first(400))), vfpga::crc32(v));
}

TEST(KernelKinds, NamesRoundTrip)
{
  for (auto k : {KernelKind::VecAdd, KernelKind::Matmul, KernelKind::Sobel, KernelKind::RogueWriter})
    EXPECT_EQ(parse_kernel_kind(kernel_kind_name(k)), k);
  EXPECT_FALSE(parse_kernel_kind("fft"));
  EXPECT_EQ(default_descriptor(KernelKind::Sobel).static_cycles_per_item, 9u);
  EXPECT_EQ(default_descriptor(KernelKind::VecAdd).static_cycles_per_item, 1u);
  EXPECT_EQ(default_descriptor(KernelKind::Matmul).static_cycles_per_item, 1u);
}

TEST(Bitfile, HeaderLayout)
{
  auto bytes = encode_bitfile(default_descriptor(KernelKind::VecAdd), 0x11223344, 0x55667788, 3);
  ASSERT_GE(bytes.size(), kBitfileHeaderSize);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VFPB");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 0x44);
  EXPECT_EQ(bytes[9], 0x11);
  EXPECT_EQ(bytes[14], 3);
  std::uint32_t len = bytes[15] | bytes[16] << 8 | bytes[17] << 16 | std::uint32_t(bytes[18]) << 24;
  EXPECT_EQ(len, bytes.size() - kBitfileHeaderSize);
  std::uint32_t crc = bytes[19] | bytes[20] << 8 | bytes[21] << 16 | std::uint32_t(bytes[22]) << 24;
  EXPECT_EQ(crc, zlib_crc(ByteView(bytes).subspan(kBitfileHeaderSize)));
}

TEST(Bitfile, DefaultRoundTrip)
{
  auto d = default_descriptor(KernelKind::Matmul);
  auto pb = decode_bitfile(encode_bitfile(d, 1, 7, 2, 4096));
  EXPECT_EQ(pb.kernel, d);
  EXPECT_EQ(pb.header.device_id, 1u);
  EXPECT_EQ(pb.header.shell_id, 7u);
  EXPECT_EQ(pb.header.prr_id, 2);
  EXPECT_EQ(pb.frame_bytes, 4096u);
}

TEST(Bitfile, FrameBytesSetSize)
{
  auto d = default_descriptor(KernelKind::VecAdd);
  auto small = encode_bitfile(d, 1, 7, 0, 0);
  auto big = encode_bitfile(d, 1, 7, 0, 1 << 20);
  EXPECT_EQ(big.size() - small.size(), 1u << 20);
}

TEST(Bitfile, RandomDescriptorsRoundTrip)
{
  std::mt19937_64 rng(99);
  for (int i = 0; i < 300; ++i)
    {
      auto d = random_descriptor(rng);
      auto dev = static_cast<std::uint32_t>(rng());
      auto shell = static_cast<std::uint32_t>(rng());
      unsigned prr = rng() % 256;
      auto pb = decode_bitfile(encode_bitfile(d, dev, shell, prr, rng() % 300));
      ASSERT_EQ(pb.kernel, d);
      ASSERT_EQ(pb.header.device_id, dev);
      ASSERT_EQ(pb.header.shell_id, shell);
      ASSERT_EQ(pb.header.prr_id, prr);
    }
}

TEST(Bitfile, EncodingErrors)
{
  auto d = default_descriptor(KernelKind::VecAdd);
  EXPECT_THROW(encode_bitfile(d, 1, 7, 256), Error);
  d.param_schema.resize(kArgSlots + 1);
  try
    {
      encode_bitfile(d, 1, 7, 0);
      FAIL();
    }
  catch (const Error& e)
    {
      EXPECT_EQ(e.code(), Errc::EncodingError);
    }
  KernelDescriptor bad;
  bad.kind = static_cast<KernelKind>(9);
  EXPECT_THROW(encode_bitfile(bad, 1, 7, 0), Error);
}

TEST(Bitfile, TruncationIsFormatError)
{
  auto bytes = encode_bitfile(default_descriptor(KernelKind::Sobel), 1, 7, 0, 100);
  for (std::size_t cut : {std::size_t(0), std::size_t(3), kBitfileHeaderSize - 1,
                          kBitfileHeaderSize, bytes.size() - 1})
    {
      try
        {
          decode_bitfile(ByteView(bytes).first(cut));
          FAIL() << "cut " << cut;
        }
      catch (const Error& e)
        {
          EXPECT_EQ(e.code(), Errc::FormatError) << "cut " << cut;
        }
    }
}

TEST(Bitfile, BadMagicAndVersion)
{
  auto bytes = encode_bitfile(default_descriptor(KernelKind::Sobel), 1, 7, 0);
  auto m = bytes;
  m[0] = 'X';
  EXPECT_THROW(decode_bitfile(m), Error);
  auto v = bytes;
  v[4] = 2;
  try
    {
      decode_bitfile(v);
      FAIL();
    }
  catch (const Error& e)
    {
      EXPECT_EQ(e.code(), Errc::FormatError);
    }
}

TEST(Bitfile, PayloadBitFlipIsCrcError)
{
  std::mt19937_64 rng(5);
  auto bytes = encode_bitfile(default_descriptor(KernelKind::VecAdd), 1, 7, 1, 512);
  for (int i = 0; i < 200; ++i)
    {
      auto c = bytes;
      auto bit = kBitfileHeaderSize * 8 + rng() % ((c.size() - kBitfileHeaderSize) * 8);
      c[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      try
        {
          decode_bitfile(c);
          FAIL();
        }
      catch (const Error& e)
        {
          ASSERT_EQ(e.code(), Errc::CrcError);
        }
    }
}

TEST(Bitfile, CompatibilityIgnoresRegion)
{
  auto d = default_descriptor(KernelKind::VecAdd);
  for (unsigned prr = 0; prr < 256; ++prr)
    {
      auto pb = decode_bitfile(encode_bitfile(d, 1, 7, prr));
      EXPECT_TRUE(cb_compatibility_check(pb, 1, 7));
      EXPECT_FALSE(cb_compatibility_check(pb, 2, 7));
      EXPECT_FALSE(cb_compatibility_check(pb, 1, 8));
    }
}
