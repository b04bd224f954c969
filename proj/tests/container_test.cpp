#include "fc2mfn/container.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fc2mfn/rng.hpp"

using namespace fc2mfn;

namespace {

std::string temp_path(const std::string& name) {
  std::filesystem::create_directories("container_test_tmp");
  return "container_test_tmp/" + name;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

TensorContainer random_container(SplitMix64& g) {
  TensorContainer c;
  const int n = 1 + static_cast<int>(g.below(5));
  for (int i = 0; i < n; ++i) {
    Shape shape;
    const int rank = static_cast<int>(g.below(4));  // rank 0 = scalar
    for (int r = 0; r < rank; ++r) shape.push_back(1 + g.below(5));
    const std::string name = "entry_" + std::to_string(i);
    if (g.below(2) == 0) {
      RTensor t(shape);
      for (double& v : t.data) v = g.uniform(-10, 10);
      c.put(name, std::move(t));
    } else {
      CTensor t(shape);
      for (double& v : t.re) v = g.uniform(-10, 10);
      for (double& v : t.im) v = g.uniform(-10, 10);
      c.put(name, std::move(t));
    }
  }
  return c;
}

}  // namespace

TEST(Container, RoundTripBitIdentical) {
  SplitMix64 g(100);
  for (int trial = 0; trial < 20; ++trial) {
    TensorContainer c = random_container(g);
    const std::string path = temp_path("roundtrip.cxt");
    write_container(path, c);
    TensorContainer back = read_container(path);
    ASSERT_EQ(back.entries.size(), c.entries.size());
    for (std::size_t i = 0; i < c.entries.size(); ++i) {
      EXPECT_EQ(back.entries[i].first, c.entries[i].first);
      EXPECT_EQ(back.entries[i].second.index(), c.entries[i].second.index());
    }
    // second write must produce identical bytes
    const std::string bytes1 = read_bytes(path);
    write_container(path, back);
    EXPECT_EQ(read_bytes(path), bytes1);
  }
}

TEST(Container, ScalarPayloadHexdump) {
  TensorContainer c;
  RTensor one(Shape{});
  one.data[0] = 1.0;
  c.put("x", std::move(one));
  const std::string buf = serialize_container(c);
  // magic(4) + count(4) + name_len(2) + "x"(1) + kind(1) + rank(1) = 13 bytes header
  ASSERT_EQ(buf.size(), 13u + 8u);
  EXPECT_EQ(buf.substr(0, 4), "CXT1");
  const unsigned char expected[8] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F};
  for (int i = 0; i < 8; ++i)
    EXPECT_EQ(static_cast<unsigned char>(buf[13 + i]), expected[i]) << "byte " << i;
}

TEST(Container, BadMagic) {
  const std::string path = temp_path("bad_magic.cxt");
  std::ofstream(path, std::ios::binary) << "XXXX\0\0\0\0";
  try {
    read_container(path);
    FAIL() << "expected ContainerError";
  } catch (const ContainerError& e) {
    EXPECT_EQ(e.code, ContainerErrc::bad_magic);
  }
}

TEST(Container, UnsupportedVersion) {
  const std::string path = temp_path("bad_version.cxt");
  std::ofstream(path, std::ios::binary) << "CXT2\0\0\0\0";
  try {
    read_container(path);
    FAIL() << "expected ContainerError";
  } catch (const ContainerError& e) {
    EXPECT_EQ(e.code, ContainerErrc::unsupported_version);
  }
}

TEST(Container, TruncatedPayload) {
  TensorContainer c;
  RTensor t(Shape{4});
  c.put("x", std::move(t));
  const std::string path = temp_path("truncated.cxt");
  write_container(path, c);
  std::string bytes = read_bytes(path);
  std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  try {
    read_container(path);
    FAIL() << "expected ContainerError";
  } catch (const ContainerError& e) {
    EXPECT_EQ(e.code, ContainerErrc::truncated);
  }
}

TEST(Container, MissingFileIsIoError) {
  try {
    read_container(temp_path("does_not_exist.cxt"));
    FAIL() << "expected ContainerError";
  } catch (const ContainerError& e) {
    EXPECT_EQ(e.code, ContainerErrc::io);
  }
}

TEST(Container, PutReplacesByName) {
  TensorContainer c;
  RTensor a(Shape{2});
  a.data = {1, 2};
  c.put("x", a);
  RTensor b(Shape{3});
  b.data = {4, 5, 6};
  c.put("x", b);
  ASSERT_EQ(c.entries.size(), 1u);
  EXPECT_EQ(c.real_at("x").data.size(), 3u);
}

TEST(Container, TextEntriesRoundTrip) {
  const std::string text = "epochs = 12\nseed = 7\n";
  TensorContainer c;
  c.put("meta/config", text_tensor(text));
  const std::string path = temp_path("text.cxt");
  write_container(path, c);
  EXPECT_EQ(tensor_text(read_container(path).real_at("meta/config")), text);
}
