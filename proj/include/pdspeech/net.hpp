#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdspeech/autodiff.hpp"

namespace pdspeech {

inline constexpr std::size_t kConv1Channels = 48;
inline constexpr std::size_t kConv2Channels = 96;
inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kClasses = 2;

struct PdNet {
  std::size_t chunk_len = 0;
  std::uint64_t init_seed = 0;
  ad::ConvParams conv1;  // 1 -> 48
  ad::BnParams bn1;
  ad::ConvParams conv2;  // 48 -> 96
  ad::BnParams bn2;
  ad::AffineParams fc;  // 96*chunk_len -> 2

  void set_mode(ad::BnMode mode) {
    bn1.mode = mode;
    bn2.mode = mode;
  }
  std::vector<ad::TensorPtr> trainable();
};

struct NetForward {
  std::vector<ad::TensorPtr> logits;    // per sample, shape (2)
  std::vector<ad::TensorPtr> a_last;    // per sample, shape (96, chunk_len), after final ReLU
  std::vector<ad::TensorPtr> pre_relu1;  // BN outputs feeding the first ReLU
  std::vector<ad::TensorPtr> pre_relu2;  // BN outputs feeding the final ReLU
};

PdNet init_net(std::size_t chunk_len, std::uint64_t seed);

// Every input must be shape (1, chunk_len).
NetForward net_forward(ad::Tape& tape, PdNet& net, const std::vector<ad::TensorPtr>& batch,
                       ad::BnMode mode);

// Serialized value count (parameters plus BN running stats).
std::size_t net_param_count(std::size_t chunk_len);

void save_net(const PdNet& net, const std::string& path);
PdNet load_net(const std::string& path);

std::uint32_t crc32_bytes(const unsigned char* data, std::size_t n);

}  // namespace pdspeech
