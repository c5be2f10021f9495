#include "rosa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "rosa/errors.hpp"

namespace rosa {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'A', '1'};

enum class Kind : std::uint8_t { Full = 0, Lora = 1, Rosa = 2, Ia3 = 3 };

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void tensor(std::string_view name, const Matrix& m) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) u64(std::bit_cast<std::uint64_t>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == in_.size(); }

  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint reading ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  Matrix tensor(std::string_view expected_name) {
    const std::size_t start = pos_;
    const std::uint32_t len = u32("tensor name length");
    need(len, "tensor name");
    std::string name(reinterpret_cast<const char*>(in_.data() + pos_), len);
    pos_ += len;
    if (name != expected_name) {
      throw FormatError("expected tensor '" + std::string(expected_name) + "', found '" + name + "'", start);
    }
    const std::uint32_t rows = u32("tensor rows");
    const std::uint32_t cols = u32("tensor cols");
    if (rows == 0 || cols == 0) throw FormatError("tensor '" + name + "' has a zero dimension", pos_ - 8);
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    if (count > (in_.size() - pos_) / 8) throw FormatError("truncated checkpoint reading tensor '" + name + "' data", pos_);
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(u64("tensor data"));
    return Matrix(rows, cols, std::move(data));
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name, std::size_t offset) {
  if (m.rows() != rows || m.cols() != cols) {
    throw FormatError(std::string("tensor '") + name + "' has shape " + m.shape_string() + ", expected " +
                          std::to_string(rows) + "x" + std::to_string(cols),
                      offset);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Mlp& net) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.num_layers()));
  for (const auto& layer : net.layers()) {
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          Kind kind = Kind::Full;
          std::uint32_t rank = 0;
          std::uint64_t steps = 0;
          std::uint8_t scheme = 0;
          std::uint32_t tensors = 3;
          if constexpr (std::is_same_v<T, LoraAdapter>) {
            kind = Kind::Lora;
            rank = static_cast<std::uint32_t>(a.rank);
            tensors = 4;
          } else if constexpr (std::is_same_v<T, RosaAdapter>) {
            kind = Kind::Rosa;
            rank = static_cast<std::uint32_t>(a.rank);
            steps = a.steps_since_factorize;
            scheme = static_cast<std::uint8_t>(a.scheme);
            tensors = 5;
          } else if constexpr (std::is_same_v<T, Ia3Adapter>) {
            kind = Kind::Ia3;
          }
          w.u8(static_cast<std::uint8_t>(kind));
          w.u8(static_cast<std::uint8_t>(layer.activation));
          w.u8(scheme);
          w.u8(0);
          w.u32(rank);
          w.u64(steps);
          w.u32(tensors);
          if constexpr (std::is_same_v<T, FullWeight>) {
            w.tensor("weight", a.weight);
            w.tensor("original", a.original);
          } else if constexpr (std::is_same_v<T, LoraAdapter>) {
            w.tensor("w_frozen", a.w_frozen);
            w.tensor("a", a.a);
            w.tensor("b", a.b);
          } else if constexpr (std::is_same_v<T, RosaAdapter>) {
            w.tensor("w_fixed", a.w_fixed);
            w.tensor("a", a.a);
            w.tensor("b", a.b);
            w.tensor("w_original", a.w_original);
          } else {
            w.tensor("w_frozen", a.w_frozen);
            w.tensor("scale", a.scale);
          }
        },
        layer.adapter);
    w.tensor("bias", layer.bias);
  }
  return w.take();
}

Mlp decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, not an RSA1 checkpoint", 0);
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint32_t layer_count = r.u32("layer count");

  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const std::size_t header_at = r.offset();
    const std::uint8_t kind = r.u8("layer kind");
    const std::uint8_t activation = r.u8("activation");
    const std::uint8_t scheme = r.u8("scheme");
    r.u8("reserved");
    const std::uint32_t rank = r.u32("rank");
    const std::uint64_t steps = r.u64("steps_since_factorize");
    const std::uint32_t tensors = r.u32("tensor count");
    if (kind > 3) throw FormatError("unknown layer kind " + std::to_string(kind), header_at);
    if (activation > 1) throw FormatError("unknown activation " + std::to_string(activation), header_at + 1);
    if (scheme > 2) throw FormatError("unknown sampling scheme " + std::to_string(scheme), header_at + 2);
    static constexpr std::uint32_t kTensorCounts[] = {3, 4, 5, 3};
    if (tensors != kTensorCounts[kind]) {
      throw FormatError("layer kind " + std::to_string(kind) + " needs " + std::to_string(kTensorCounts[kind]) +
                            " tensors, header says " + std::to_string(tensors),
                        header_at + 16);
    }

    DenseLayer layer;
    layer.activation = static_cast<Activation>(activation);
    const std::size_t body_at = r.offset();
    switch (static_cast<Kind>(kind)) {
      case Kind::Full: {
        FullWeight a;
        a.weight = r.tensor("weight");
        a.original = r.tensor("original");
        expect_shape(a.original, a.weight.rows(), a.weight.cols(), "original", body_at);
        layer.adapter = std::move(a);
        break;
      }
      case Kind::Lora: {
        LoraAdapter a;
        a.rank = rank;
        a.w_frozen = r.tensor("w_frozen");
        a.a = r.tensor("a");
        a.b = r.tensor("b");
        expect_shape(a.a, a.w_frozen.rows(), rank, "a", body_at);
        expect_shape(a.b, rank, a.w_frozen.cols(), "b", body_at);
        layer.adapter = std::move(a);
        break;
      }
      case Kind::Rosa: {
        RosaAdapter a;
        a.rank = rank;
        a.scheme = static_cast<SamplingScheme>(scheme);
        a.steps_since_factorize = steps;
        a.w_fixed = r.tensor("w_fixed");
        a.a = r.tensor("a");
        a.b = r.tensor("b");
        a.w_original = r.tensor("w_original");
        expect_shape(a.a, a.w_fixed.rows(), rank, "a", body_at);
        expect_shape(a.b, rank, a.w_fixed.cols(), "b", body_at);
        expect_shape(a.w_original, a.w_fixed.rows(), a.w_fixed.cols(), "w_original", body_at);
        layer.adapter = std::move(a);
        break;
      }
      case Kind::Ia3: {
        Ia3Adapter a;
        a.w_frozen = r.tensor("w_frozen");
        a.scale = r.tensor("scale");
        expect_shape(a.scale, a.w_frozen.rows(), 1, "scale", body_at);
        layer.adapter = std::move(a);
        break;
      }
    }
    const std::size_t bias_at = r.offset();
    layer.bias = r.tensor("bias");
    expect_shape(layer.bias, layer.out_dim(), 1, "bias", bias_at);
    layers.push_back(std::move(layer));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last layer", r.offset());
  try {
    return Mlp(std::move(layers));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent layer widths: ") + e.what(), r.offset());
  }
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace rosa
