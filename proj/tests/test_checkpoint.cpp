#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "layoutgraph/checkpoint.hpp"
#include "layoutgraph/graph.hpp"
#include "layoutgraph/stage1.hpp"
#include "tempdir.hpp"

namespace lg = layoutgraph;
namespace ckpt = layoutgraph::ckpt;
namespace ad = layoutgraph::ad;
using ad::Matrix;

namespace {

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ckpt::Checkpoint sample_checkpoint() {
  ckpt::Checkpoint c;
  c.metadata["stage"] = 1;
  c.metadata["seed"] = 42;
  c.metadata["loss_history"] = {1.5, 0.75, 0.5};
  Matrix a(2, 3);
  a << 1.0, -2.5, 3.25, M_PI, -0.0, 1e-300;
  c.add("param.w", a);
  c.add("param.b", Matrix::Zero(1, 3));
  c.add("empty", Matrix(0, 4));
  return c;
}

lg::DocumentGraph tiny_graph() {
  std::vector<lg::BBox> boxes = {{10, 10, 100, 40}, {120, 12, 260, 44}, {10, 60, 100, 92},
                                 {120, 62, 260, 94}, {300, 10, 420, 44}};
  return lg::build_graph(boxes, {500, 400}, 3);
}

}  // namespace

TEST_CASE("checkpoint round-trips metadata and arrays exactly", "[checkpoint]") {
  testsupport::TempDir dir("lg_ckpt");
  const auto c = sample_checkpoint();
  const std::string path = dir.file("model.ckpt");
  ckpt::save_checkpoint(path, c);

  const auto loaded = ckpt::load_checkpoint(path);
  CHECK(loaded.metadata == c.metadata);
  REQUIRE(loaded.arrays.size() == c.arrays.size());
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    CHECK(loaded.arrays[i].first == c.arrays[i].first);
    const auto& a = c.arrays[i].second;
    const auto& b = loaded.arrays[i].second;
    REQUIRE(b.rows() == a.rows());
    REQUIRE(b.cols() == a.cols());
    // Bit-exact, including -0.0 and subnormal-range values.
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index col = 0; col < a.cols(); ++col) {
        CHECK(std::memcmp(&a(r, col), &b(r, col), sizeof(double)) == 0);
      }
  }
}

TEST_CASE("saving twice produces identical bytes", "[checkpoint]") {
  testsupport::TempDir dir("lg_ckpt");
  const auto c = sample_checkpoint();
  ckpt::save_checkpoint(dir.file("a.ckpt"), c);
  ckpt::save_checkpoint(dir.file("b.ckpt"), c);
  CHECK(read_bytes(dir.file("a.ckpt")) == read_bytes(dir.file("b.ckpt")));
  CHECK(ckpt::file_hash(dir.file("a.ckpt")) == ckpt::file_hash(dir.file("b.ckpt")));
}

TEST_CASE("file_hash reacts to any content change", "[checkpoint]") {
  testsupport::TempDir dir("lg_ckpt");
  ckpt::save_checkpoint(dir.file("a.ckpt"), sample_checkpoint());
  auto bytes = read_bytes(dir.file("a.ckpt"));
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
  write_bytes(dir.file("b.ckpt"), bytes);
  CHECK(ckpt::file_hash(dir.file("a.ckpt")) != ckpt::file_hash(dir.file("b.ckpt")));
  CHECK(ckpt::hash_hex(ckpt::file_hash(dir.file("a.ckpt"))).size() == 16);
  CHECK_THROWS_AS(ckpt::file_hash(dir.file("missing.ckpt")), lg::IoError);
}

TEST_CASE("load rejects damaged files", "[checkpoint]") {
  testsupport::TempDir dir("lg_ckpt");
  const std::string path = dir.file("model.ckpt");
  ckpt::save_checkpoint(path, sample_checkpoint());
  const auto good = read_bytes(path);

  SECTION("flipped payload byte fails the checksum") {
    auto bad = good;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0xff);
    write_bytes(path, bad);
    CHECK_THROWS_WITH(ckpt::load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("checksum"));
  }
  SECTION("severe truncation") {
    write_bytes(path, std::vector<char>(good.begin(), good.begin() + 10));
    CHECK_THROWS_WITH(ckpt::load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("truncated"));
  }
  SECTION("mid-file truncation") {
    write_bytes(path, std::vector<char>(good.begin(), good.end() - 20));
    CHECK_THROWS_AS(ckpt::load_checkpoint(path), lg::CheckpointError);
  }
  SECTION("wrong magic") {
    auto bad = good;
    bad[0] = 'X';
    write_bytes(path, bad);
    CHECK_THROWS_WITH(ckpt::load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("not a checkpoint file"));
  }
  SECTION("unsupported version") {
    auto bad = good;
    bad[8] = 2;  // little-endian u32 right after the 8-byte magic
    write_bytes(path, bad);
    CHECK_THROWS_WITH(ckpt::load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("unsupported checkpoint version 2"));
  }
  SECTION("missing file is an io error") {
    CHECK_THROWS_AS(ckpt::load_checkpoint(dir.file("nope.ckpt")), lg::IoError);
  }
}

TEST_CASE("array name lookup and duplicates", "[checkpoint]") {
  ckpt::Checkpoint c;
  c.add("w", Matrix::Ones(2, 2));
  CHECK(c.find("w") != nullptr);
  CHECK(c.find("x") == nullptr);
  CHECK_THROWS_AS(c.add("w", Matrix::Zero(1, 1)), lg::CheckpointError);
  CHECK_THROWS_WITH(c.at("x"), Catch::Matchers::ContainsSubstring("missing array: x"));
}

TEST_CASE("parameters round-trip through a checkpoint", "[checkpoint]") {
  testsupport::TempDir dir("lg_ckpt");
  lg::StageOneEncoder trained({}, 1);
  const auto g = tiny_graph();
  const Matrix want = trained.embed(g);

  ckpt::Checkpoint c;
  ckpt::pack_params(trained.params(), &c);
  ckpt::save_checkpoint(dir.file("s1.ckpt"), c);

  lg::StageOneEncoder fresh({}, 2);
  REQUIRE(fresh.embed(g) != want);  // different init actually differs
  const auto loaded = ckpt::load_checkpoint(dir.file("s1.ckpt"));
  ckpt::unpack_params(loaded, &fresh.params());
  CHECK(fresh.embed(g) == want);
}

TEST_CASE("unpack_params validates names and shapes", "[checkpoint]") {
  lg::nn::ParamStore store;
  lg::Rng rng(3);
  auto w = store.create("w", 2, 3);
  lg::nn::init_uniform(w, -1.0, 1.0, rng);

  SECTION("missing parameter") {
    ckpt::Checkpoint c;
    CHECK_THROWS_WITH(ckpt::unpack_params(c, &store),
                      Catch::Matchers::ContainsSubstring("param.w"));
  }
  SECTION("shape mismatch") {
    ckpt::Checkpoint c;
    c.add("param.w", Matrix::Zero(3, 2));
    CHECK_THROWS_WITH(ckpt::unpack_params(c, &store),
                      Catch::Matchers::ContainsSubstring("shape 3x2, expected 2x3"));
  }
}

namespace {

// One deterministic least-squares step sequence so optimizer trajectories
// can be compared bit for bit.
void lsq_steps(lg::nn::ParamStore& store, lg::nn::Adam& opt, int steps) {
  Matrix x(4, 2);
  x << 1, 2, -1, 0.5, 3, -2, 0.25, 1;
  Matrix y(4, 3);
  y << 1, 0, 2, 0, 1, -1, 2, 2, 0, -1, 0, 1;
  for (int s = 0; s < steps; ++s) {
    store.zero_grad();
    auto diff = ad::sub(ad::matmul(ad::constant(x), store.get("w")), ad::constant(y));
    auto loss = ad::sum(ad::hadamard(diff, diff));
    ad::backward(loss);
    opt.step();
  }
}

}  // namespace

TEST_CASE("adam state round-trips and resumes the exact trajectory", "[checkpoint]") {
  testsupport::TempDir dir("lg_ckpt");

  lg::nn::ParamStore full;
  {
    lg::Rng rng(9);
    lg::nn::init_uniform(full.create("w", 2, 3), -1.0, 1.0, rng);
  }
  lg::nn::Adam full_opt(full);
  lsq_steps(full, full_opt, 10);

  lg::nn::ParamStore first;
  {
    lg::Rng rng(9);
    lg::nn::init_uniform(first.create("w", 2, 3), -1.0, 1.0, rng);
  }
  lg::nn::Adam first_opt(first);
  lsq_steps(first, first_opt, 4);

  ckpt::Checkpoint c;
  ckpt::pack_params(first, &c);
  ckpt::pack_adam(first_opt, first, &c);
  ckpt::save_checkpoint(dir.file("mid.ckpt"), c);

  const auto mid = ckpt::load_checkpoint(dir.file("mid.ckpt"));
  REQUIRE(ckpt::has_adam(mid));

  lg::nn::ParamStore resumed;
  resumed.create("w", 2, 3);
  lg::nn::Adam resumed_opt(resumed);
  ckpt::unpack_params(mid, &resumed);
  ckpt::unpack_adam(mid, &resumed_opt, resumed);
  CHECK(resumed_opt.step_count() == 4);
  lsq_steps(resumed, resumed_opt, 6);
  CHECK(resumed.get("w")->value == full.get("w")->value);

  // Restart without the optimizer state lands somewhere else: the moment
  // buffers matter, not just the parameters.
  lg::nn::ParamStore cold;
  cold.create("w", 2, 3);
  ckpt::unpack_params(mid, &cold);
  lg::nn::Adam cold_opt(cold);
  lsq_steps(cold, cold_opt, 6);
  CHECK(cold.get("w")->value != full.get("w")->value);
}

TEST_CASE("has_adam distinguishes optimizer checkpoints", "[checkpoint]") {
  ckpt::Checkpoint c;
  CHECK_FALSE(ckpt::has_adam(c));
  c.add("adam.step", Matrix::Zero(1, 1));
  CHECK(ckpt::has_adam(c));
}
