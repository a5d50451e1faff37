#include "metapomdp/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace metapomdp::net {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kTensorCount = 7;

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint '" + path + "'");
  return v;
}

}  // namespace

void save_checkpoint(const AgentParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, kTensorCount);
  params.visit([&](const char* name, const auto& t) {
    const auto len = static_cast<std::uint32_t>(std::strlen(name));
    put_u32(out, len);
    out.write(name, len);
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        const double v = t(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  });
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

AgentParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IoError("'" + path + "' is not a checkpoint");
  }
  if (get_u32(in, path) != kVersion) throw IoError("unsupported checkpoint version in '" + path + "'");
  if (get_u32(in, path) != kTensorCount) throw IoError("unexpected tensor count in '" + path + "'");

  AgentParams p;
  p.visit([&](const char* name, auto& t) {
    const std::uint32_t len = get_u32(in, path);
    std::string stored(len, '\0');
    if (!in.read(stored.data(), len) || stored != name) {
      throw IoError("checkpoint '" + path + "': expected tensor " + name);
    }
    const std::uint32_t rows = get_u32(in, path);
    const std::uint32_t cols = get_u32(in, path);
    using T = std::decay_t<decltype(t)>;
    if constexpr (T::ColsAtCompileTime == 1) {
      if (cols != 1) throw IoError("checkpoint '" + path + "': tensor " + stored + " must be a column");
      t.resize(rows);
    } else {
      t.resize(rows, cols);
    }
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) {
        double v = 0.0;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint '" + path + "'");
        t(i, j) = v;
      }
    }
  });
  const NetShape s = p.shape();
  if (p.lstm_wx.rows() != 4 * s.hidden || p.lstm_b.size() != 4 * s.hidden || p.policy_b.size() != s.action_count ||
      p.value_w.rows() != 1 || p.value_w.cols() != s.hidden || p.value_b.size() != 1 ||
      p.policy_w.cols() != s.hidden) {
    throw IoError("checkpoint '" + path + "' has inconsistent tensor shapes");
  }
  return p;
}

}  // namespace metapomdp::net
