#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "cdgan/error.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/optim.hpp"
#include "cdgan/tensor.hpp"
#include "cdgan/trainer.hpp"

namespace cdgan {

// Layout, all integers little-endian:
//   "CDGANCKP" | u32 version | u64 payload_size | payload | u64 fnv1a64(payload)
// payload:
//   arch (6 x i32, f64 leaky_slope) | u8 mode
//   u32 tensor_count, then per tensor: str name | u8 kind | 4 x i32 shape | f32 data
//   u8 has_optimizer, then per group: i64 steps | 4 x f64 config | u32 count | m tensors | v tensors
//   u8 has_progress, then i64 step | str sampler_state
// str = u32 length + bytes. Optimizer moment tensors are shape + data.
inline constexpr char kCheckpointMagic[8] = {'C', 'D', 'G', 'A', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Progress {
  std::int64_t step = 0;
  std::string sampler_state;

  friend bool operator==(const Progress&, const Progress&) = default;
};

struct Checkpoint {
  ModelBundle<float> bundle;
  std::optional<OptimizerState<float>> optimizer;
  std::optional<Progress> progress;
  std::uint64_t checksum = 0;
};

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void i32(std::int32_t v) { little(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { little(static_cast<std::uint64_t>(v)); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void tensor(const Tensor<float>& t) {
    const Shape s = t.shape();
    i32(s.n);
    i32(s.c);
    i32(s.h);
    i32(s.w);
    buf_.reserve(buf_.size() + t.size() * 4);
    for (std::size_t i = 0; i < t.size(); ++i) little(std::bit_cast<std::uint32_t>(t[i]));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  template <typename U>
  void little(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t n) : p_(data), end_(data + n) {}

  std::uint8_t u8() {
    need(1);
    return *p_++;
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(little<std::uint32_t>()); }
  std::int64_t i64() { return static_cast<std::int64_t>(little<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  Tensor<float> tensor() {
    Shape s{i32(), i32(), i32(), i32()};
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw CheckpointError("checkpoint: negative tensor extent");
    need(s.size() * 4);
    Tensor<float> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(little<std::uint32_t>());
    return t;
  }
  [[nodiscard]] bool done() const noexcept { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CheckpointError("checkpoint: truncated payload");
  }
  template <typename U>
  U little() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p_[i]) << (8 * i));
    p_ += sizeof(U);
    return v;
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelBundle<float>& b,
                                                      const OptimizerState<float>* optimizer,
                                                      const Progress* progress) {
  detail::Writer w;
  const ArchConfig& a = b.arch;
  for (int v : {a.image_size, a.image_channels, a.base_width, a.di_channels, a.di_spatial, a.ds_dim}) w.i32(v);
  w.f64(a.leaky_slope);
  w.u8(static_cast<std::uint8_t>(b.mode));

  std::uint32_t count = 0;
  visit_tensors(b, [&](const std::string&, const Tensor<float>&, Group, TensorKind) { ++count; });
  w.u32(count);
  visit_tensors(b, [&](const std::string& name, const Tensor<float>& t, Group, TensorKind kind) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(kind));
    w.tensor(t);
  });

  w.u8(optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    for (const Adam<float>& adam : optimizer->adam) {
      w.i64(adam.steps());
      const AdamConfig& c = adam.config();
      w.f64(c.learning_rate);
      w.f64(c.beta1);
      w.f64(c.beta2);
      w.f64(c.eps);
      w.u32(static_cast<std::uint32_t>(adam.first_moments().size()));
      for (const auto& m : adam.first_moments()) w.tensor(m);
      for (const auto& v : adam.second_moments()) w.tensor(v);
    }
  }
  w.u8(progress != nullptr ? 1 : 0);
  if (progress != nullptr) {
    w.i64(progress->step);
    w.str(progress->sampler_state);
  }

  const std::vector<std::uint8_t>& payload = w.buffer();
  detail::Writer out;
  out.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  out.u32(kCheckpointVersion);
  out.u64(payload.size());
  out.bytes(payload.data(), payload.size());
  out.u64(fnv1a64(payload.data(), payload.size()));
  return std::move(out.buffer());
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = sizeof kCheckpointMagic + 4 + 8;
  if (bytes.size() < kHeader + 8 || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("not a cd-GAN checkpoint (bad magic or too short)");
  }
  detail::Reader head(bytes.data() + sizeof kCheckpointMagic, 12);
  const std::uint32_t version = head.u32();
  const std::uint64_t size = head.u64();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (size != bytes.size() - kHeader - 8) {
    throw CheckpointError("checkpoint size mismatch (file truncated or padded)");
  }
  const std::uint8_t* payload = bytes.data() + kHeader;
  detail::Reader trailer(payload + size, 8);
  Checkpoint ck;
  ck.checksum = trailer.u64();
  if (fnv1a64(payload, size) != ck.checksum) {
    throw CheckpointError("checkpoint checksum mismatch (file corrupt)");
  }

  detail::Reader r(payload, size);
  ArchConfig a;
  a.image_size = r.i32();
  a.image_channels = r.i32();
  a.base_width = r.i32();
  a.di_channels = r.i32();
  a.di_spatial = r.i32();
  a.ds_dim = r.i32();
  a.leaky_slope = r.f64();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw CheckpointError("checkpoint: unknown mode tag");
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  ck.bundle = build_bundle<float>(a, 0, static_cast<Mode>(mode));

  std::uint32_t expected = 0;
  visit_tensors(ck.bundle, [&](const std::string&, Tensor<float>&, Group, TensorKind) { ++expected; });
  if (r.u32() != expected) throw CheckpointError("checkpoint: tensor count does not match architecture");
  visit_tensors(ck.bundle, [&](const std::string& name, Tensor<float>& t, Group, TensorKind kind) {
    if (r.str() != name) throw CheckpointError("checkpoint: expected tensor " + name);
    if (r.u8() != static_cast<std::uint8_t>(kind)) throw CheckpointError("checkpoint: wrong kind for " + name);
    Tensor<float> loaded = r.tensor();
    if (loaded.shape() != t.shape()) {
      throw CheckpointError("checkpoint: shape of " + name + " is " + to_string(loaded.shape()) + ", expected " +
                            to_string(t.shape()));
    }
    t = std::move(loaded);
  });

  if (r.u8() != 0) {
    OptimizerState<float> opt;
    for (std::size_t gi = 0; gi < opt.adam.size(); ++gi) {
      const std::int64_t steps = r.i64();
      AdamConfig c;
      c.learning_rate = r.f64();
      c.beta1 = r.f64();
      c.beta2 = r.f64();
      c.eps = r.f64();
      const std::uint32_t n = r.u32();
      const auto params = group_parameters(ck.bundle, static_cast<Group>(gi));
      if (n != 0 && n != params.size()) throw CheckpointError("checkpoint: optimizer moment count mismatch");
      std::vector<Tensor<float>> m;
      std::vector<Tensor<float>> v;
      for (std::uint32_t i = 0; i < n; ++i) m.push_back(r.tensor());
      for (std::uint32_t i = 0; i < n; ++i) v.push_back(r.tensor());
      for (std::uint32_t i = 0; i < n; ++i) {
        if (m[i].shape() != params[i]->shape() || v[i].shape() != params[i]->shape()) {
          throw CheckpointError("checkpoint: optimizer moment shape mismatch");
        }
      }
      opt.adam[gi].restore(c, steps, std::move(m), std::move(v));
    }
    ck.optimizer = std::move(opt);
  }
  if (r.u8() != 0) {
    Progress p;
    p.step = r.i64();
    p.sampler_state = r.str();
    ck.progress = std::move(p);
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes in payload");
  return ck;
}

// Writes to a sibling temporary file and renames it into place, so an
// interrupted write never replaces a valid checkpoint.
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelBundle<float>& b,
                            const OptimizerState<float>* optimizer = nullptr, const Progress* progress = nullptr) {
  write_file_atomic(path, serialize_checkpoint(b, optimizer, progress));
}

inline void save_training_state(const std::filesystem::path& path, const TrainingState& s) {
  const Progress p{s.step, s.sampler.state()};
  save_checkpoint(path, s.bundle, &s.optimizer, &p);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

inline TrainingState training_state_from(Checkpoint ck) {
  if (!ck.optimizer || !ck.progress) {
    throw CheckpointError("checkpoint has no optimizer or progress state; cannot resume training from it");
  }
  TrainingState s;
  s.bundle = std::move(ck.bundle);
  s.optimizer = std::move(*ck.optimizer);
  s.sampler = PairSampler::from_state(ck.progress->sampler_state);
  s.step = ck.progress->step;
  return s;
}

}  // namespace cdgan
