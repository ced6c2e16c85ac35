#include <gtest/gtest.h>

#include "kpat/binary_io.hpp"
#include "kpat/checkpoint.hpp"
#include "test_util.hpp"

namespace kpat::nn {
namespace {

std::vector<NamedTensor> sample() {
  Rng rng(1);
  return {{"encoder.embedding", kpat::testing::random_matrix<float>(5, 3, rng)},
          {"output.bias", Tensor<float>({4}, {1, 2, 3, 4})},
          {"cube", Tensor<float>({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7})}};
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto tensors = sample();
  const auto back = decode_checkpoint(encode_checkpoint(tensors));
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].tensor.shape(), tensors[i].tensor.shape());
    EXPECT_EQ(back[i].tensor.storage(), tensors[i].tensor.storage());
  }
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint(sample());
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PATW");
  EXPECT_EQ(bytes[4], kCheckpointVersion);
  EXPECT_EQ(bytes[8], 3);  // tensor count, little-endian
}

TEST(Checkpoint, BadMagicIsFormatError) {
  auto bytes = encode_checkpoint(sample());
  bytes[0] = 'X';
  EXPECT_KPAT_ERROR(decode_checkpoint(bytes), ErrorKind::kFormat);
}

TEST(Checkpoint, TruncationIsFormatError) {
  auto bytes = encode_checkpoint(sample());
  bytes.resize(bytes.size() - 3);
  EXPECT_KPAT_ERROR(decode_checkpoint(bytes), ErrorKind::kFormat);
}

TEST(Checkpoint, FileRoundTrip) {
  kpat::testing::TempDir dir;
  save_checkpoint(dir.file("m.patw"), sample());
  EXPECT_EQ(load_checkpoint(dir.file("m.patw")).size(), 3u);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace kpat::nn
