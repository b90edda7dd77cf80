#include "puray/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace puray {

namespace {

constexpr char kMagic[8] = {'P', 'U', 'R', 'A', 'Y', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg) {
  throw std::runtime_error(path.string() + ": " + msg);
}

struct Writer {
  std::ofstream out;
  const std::filesystem::path& path;

  void raw(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) fail(path, "write failed");
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(const std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream in;
  const std::filesystem::path& path;

  void raw(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) fail(path, "unexpected end of checkpoint");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  void f64s(std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
  std::string str() {
    std::string s(u32(), '\0');
    raw(s.data(), s.size());
    return s;
  }
};

}  // namespace

Checkpoint make_checkpoint(const NetConfig& net, const ad::ParamStore& params,
                           std::uint64_t seed, int epoch, const ad::AdamState* adam) {
  Checkpoint c;
  c.net = net;
  c.params = params;
  c.seed = seed;
  c.epoch = epoch;
  if (adam) {
    OptimizerBlob b;
    b.lr = adam->lr();
    b.step_count = adam->step_count();
    b.config = adam->config();
    b.m.reserve(adam->moment_count());
    b.v.reserve(adam->moment_count());
    for (std::size_t i = 0; i < adam->moment_count(); ++i) {
      b.m.push_back(adam->first_moment(i));
      b.v.push_back(adam->second_moment(i));
    }
    c.optimizer = std::move(b);
  }
  return c;
}

void restore_adam(const OptimizerBlob& blob, ad::AdamState& adam) {
  if (blob.m.size() != adam.moment_count() || blob.v.size() != adam.moment_count())
    throw std::invalid_argument("restore_adam: moment count mismatch");
  adam.set_lr(blob.lr);
  adam.set_step_count(blob.step_count);
  for (std::size_t i = 0; i < blob.m.size(); ++i) {
    if (blob.m[i].size() != adam.first_moment(i).size())
      throw std::invalid_argument("restore_adam: moment size mismatch");
    adam.first_moment(i) = blob.m[i];
    adam.second_moment(i) = blob.v[i];
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  Writer w{std::move(out), path};

  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.i32(ckpt.net.k);
  w.i32(ckpt.net.c);
  w.i32(ckpt.net.M);
  w.i32(ckpt.net.hidden);
  w.i32(ckpt.net.depth);
  w.f64(ckpt.net.max_depth);
  w.u64(ckpt.seed);
  w.i32(ckpt.epoch);

  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const ad::Tensor& t = ckpt.params.tensor(i);
    w.str(ckpt.params.name(i));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.i32(d);
    w.f64s(t.data);
  }

  if (ckpt.optimizer) {
    const OptimizerBlob& b = *ckpt.optimizer;
    w.u32(1);
    w.f64(b.lr);
    w.u64(b.step_count);
    w.f64(b.config.lr0);
    w.f64(b.config.decay);
    w.f64(b.config.beta1);
    w.f64(b.config.beta2);
    w.f64(b.config.eps);
    for (std::size_t i = 0; i < b.m.size(); ++i) {
      w.f64s(b.m[i]);
      w.f64s(b.v[i]);
    }
  } else {
    w.u32(0);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  Reader r{std::move(in), path};

  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) fail(path, "not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    fail(path, "unsupported checkpoint version " + std::to_string(version));

  Checkpoint c;
  c.net.k = r.i32();
  c.net.c = r.i32();
  c.net.M = r.i32();
  c.net.hidden = r.i32();
  c.net.depth = r.i32();
  c.net.max_depth = r.f64();
  c.seed = r.u64();
  c.epoch = r.i32();

  const std::uint32_t np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 3) fail(path, "parameter '" + name + "' has rank > 3");
    std::vector<int> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = r.i32();
    ad::Tensor& t = c.params.add(name, std::move(shape));
    r.f64s(t.data);
  }

  if (r.u32() != 0) {
    OptimizerBlob b;
    b.lr = r.f64();
    b.step_count = r.u64();
    b.config.lr0 = r.f64();
    b.config.decay = r.f64();
    b.config.beta1 = r.f64();
    b.config.beta2 = r.f64();
    b.config.eps = r.f64();
    b.m.resize(c.params.size());
    b.v.resize(c.params.size());
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      b.m[i].resize(c.params.tensor(i).count());
      b.v[i].resize(c.params.tensor(i).count());
      r.f64s(b.m[i]);
      r.f64s(b.v[i]);
    }
    c.optimizer = std::move(b);
  }
  return c;
}

}  // namespace puray
