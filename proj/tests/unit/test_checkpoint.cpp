#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "rosa/checkpoint.hpp"
#include "rosa/errors.hpp"

using namespace rosa;

namespace {

Mlp mixed_net(SeededRng& rng) {
  Mlp base = make_mlp({6, 5, 4, 4, 3}, Activation::Relu, rng);
  std::vector<DenseLayer> layers = base.layers();
  const Matrix w1 = layers[1].effective_weight();
  LoraAdapter lora = lora_init(w1, 2, rng);
  lora.b = Matrix::gaussian(2, 5, 1.0, rng);
  layers[1].adapter = lora;
  RosaAdapter ros = rosa_init(layers[2].effective_weight(), 3, SamplingScheme::Bottom, rng);
  ros.steps_since_factorize = 12345;
  ros.a(0, 0) = -0.0;
  layers[2].adapter = ros;
  layers[3].adapter = ia3_init(layers[3].effective_weight());
  layers[0].bias = Matrix::gaussian(5, 1, 1.0, rng);
  return Mlp(std::move(layers));
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("round trip is bit exact for every adapter kind") {
  SeededRng rng(1);
  Mlp net = mixed_net(rng);
  std::vector<std::uint8_t> bytes = encode_checkpoint(net);
  CHECK(std::memcmp(bytes.data(), "RSA1", 4) == 0);
  Mlp back = decode_checkpoint(bytes);
  REQUIRE(back.num_layers() == net.num_layers());
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    CHECK(back.layer(i).adapter.index() == net.layer(i).adapter.index());
    CHECK(back.layer(i).activation == net.layer(i).activation);
    CHECK(bit_equal(back.layer(i).bias, net.layer(i).bias));
    CHECK(bit_equal(back.layer(i).effective_weight(), net.layer(i).effective_weight()));
  }
  const auto& r0 = std::get<RosaAdapter>(net.layer(2).adapter);
  const auto& r1 = std::get<RosaAdapter>(back.layer(2).adapter);
  CHECK(r1.rank == 3);
  CHECK(r1.scheme == SamplingScheme::Bottom);
  CHECK(r1.steps_since_factorize == 12345);
  CHECK(bit_equal(r1.w_original, r0.w_original));
  CHECK(std::signbit(r1.a(0, 0)));
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("malformed input reports a byte offset") {
  SeededRng rng(2);
  std::vector<std::uint8_t> bytes = encode_checkpoint(mixed_net(rng));

  SUBCASE("truncated") {
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{11}, bytes.size() / 2, bytes.size() - 1}) {
      std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(decode_checkpoint(part), FormatError);
    }
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    try {
      (void)decode_checkpoint(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
  }
  SUBCASE("unknown version") {
    bytes[4] = 99;
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("unknown layer kind") {
    bytes[12] = 9;
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
}

TEST_CASE("files") {
  SeededRng rng(3);
  Mlp net = mixed_net(rng);
  const auto dir = std::filesystem::temp_directory_path() / "rosa_checkpoint_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.rsa1";
  save_checkpoint(net, path);
  Mlp back = load_checkpoint(path);
  CHECK(encode_checkpoint(back) == encode_checkpoint(net));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.rsa1"), IoError);
  CHECK_THROWS_AS(save_checkpoint(net, dir / "no_such_dir" / "x.rsa1"), IoError);
  std::filesystem::remove_all(dir);
}
