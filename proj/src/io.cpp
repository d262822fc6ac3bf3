#include "dire/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dire::io {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::string context) : bytes_(b), ctx_(std::move(context)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(ctx_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
  std::string ctx_;
};

constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::vector<std::uint8_t> encode_tensor(const ImageTensor& t) {
  Writer w;
  w.raw("DTF1");
  w.u32(3);
  w.u32(static_cast<std::uint32_t>(t.channels()));
  w.u32(static_cast<std::uint32_t>(t.height()));
  w.u32(static_cast<std::uint32_t>(t.width()));
  for (float v : t.values()) w.f32(v);
  return std::move(w.bytes);
}

ImageTensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  Reader r(bytes, context);
  if (r.raw(4) != "DTF1") r.fail("bad tensor magic");
  const std::uint32_t rank = r.u32();
  if (rank != 3) r.fail("expected rank-3 image tensor, got rank " + std::to_string(rank));
  Shape s;
  s.channels = static_cast<int>(r.u32());
  s.height = static_cast<int>(r.u32());
  s.width = static_cast<int>(r.u32());
  if (s.channels <= 0 || s.height <= 0 || s.width <= 0) r.fail("non-positive tensor dims");
  std::vector<float> values(s.numel());
  for (float& v : values) v = r.f32();
  if (!r.done()) r.fail("trailing bytes after tensor payload");
  return ImageTensor(s, std::move(values));
}

void write_tensor(const fs::path& path, const ImageTensor& t) { write_file_atomic(path, encode_tensor(t)); }

ImageTensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

void write_checkpoint(const fs::path& path, const std::string& magic, const nlohmann::json& config,
                      const NoiseSchedule* schedule, const nn::ParamSet& params) {
  if (magic.size() != 4) throw std::invalid_argument("checkpoint magic must be 4 bytes");
  Writer w;
  w.raw(magic);
  w.u32(kCheckpointVersion);
  const std::string cfg = config.dump();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.raw(cfg);
  if (schedule != nullptr) {
    w.u32(static_cast<std::uint32_t>(schedule->steps()));
    for (double a : schedule->alpha_bar()) w.f64(a);
  } else {
    w.u32(0);
  }
  w.u32(static_cast<std::uint32_t>(params.all().size()));
  for (const nn::Param& p : params.all()) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.raw(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.value) w.f32(v);
  }
  write_file_atomic(path, w.bytes);
}

Checkpoint read_checkpoint(const fs::path& path, const std::string& magic) {
  const auto bytes = read_file(path);
  Reader r(bytes, path.string());
  const std::string got = r.raw(4);
  if (got != magic) r.fail("expected magic " + magic + ", found " + got);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::uint32_t cfg_len = r.u32();
  try {
    ck.config = nlohmann::json::parse(r.raw(cfg_len));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("config block: ") + e.what());
  }
  const std::uint32_t steps = r.u32();
  if (steps > 0) {
    std::vector<double> ab(steps + 1);
    for (double& a : ab) a = r.f64();
    ck.schedule.emplace(std::move(ab));
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.raw(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) r.fail("parameter " + name + " has implausible rank");
    std::vector<int> shape(rank);
    for (int& d : shape) d = static_cast<int>(r.u32());
    nn::Param& p = ck.params.add(name, shape);
    for (float& v : p.value) v = r.f32();
  }
  if (!r.done()) r.fail("trailing bytes after parameters");
  return ck;
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::string read_text(const fs::path& path) {
  const auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

std::string content_hash(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_pgm(const fs::path& path, const ImageTensor& img, int channel, float lo, float hi) {
  if (channel < 0 || channel >= img.channels()) throw std::invalid_argument("write_pgm: bad channel");
  std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const float span = hi - lo;
  for (float v : img.plane(channel)) {
    const float u = std::clamp((v - lo) / span, 0.0f, 1.0f);
    bytes.push_back(static_cast<std::uint8_t>(std::lround(u * 255.0f)));
  }
  write_file_atomic(path, bytes);
}

}  // namespace dire::io
