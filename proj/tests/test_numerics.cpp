#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "edgeseg/errors.hpp"
#include "edgeseg/ops.hpp"
#include "edgeseg/serialize.hpp"
#include "gradcheck.hpp"

using namespace edgeseg;
using namespace edgeseg::testing;

namespace {

Tensord mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensord(Shape{r, c}, std::move(v)); }

void check_values(const Tensord& t, const std::vector<double>& expected, double tol = 1e-12) {
  REQUIRE(t.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(t.data()[i] == doctest::Approx(expected[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("matmul examples") {
  const Tensord eye = mat(2, 2, {1, 0, 0, 1});
  check_values(matmul(eye, eye), {1, 0, 0, 1});
  check_values(matmul(mat(2, 2, {1, 2, 3, 4}), mat(2, 1, {0, 1})), {2, 4});
  CHECK_THROWS_AS(matmul(mat(2, 3, std::vector<double>(6)), mat(2, 3, std::vector<double>(6))), ShapeError);
  try {
    matmul(mat(2, 3, std::vector<double>(6)), mat(2, 3, std::vector<double>(6)));
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient, 3x4 by 4x2") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const auto r = check_entries({a, b}, [&] { return project(matmul(a, b), 99); });
    CHECK_MESSAGE(r.worst < 1e-6, r.where);
  }
}

TEST_CASE("softmax examples") {
  check_values(softmax(Tensord(Shape{1, 2}, std::vector<double>{0, 0}), 1), {0.5, 0.5});
  const Tensord big = softmax(Tensord(Shape{1, 2}, std::vector<double>{1000, 0}), 1);
  CHECK(std::isfinite(big.data()[0]));
  CHECK(big.data()[0] == doctest::Approx(1.0));
  CHECK(big.data()[1] == doctest::Approx(0.0));
  CHECK_THROWS(softmax(Tensord(Shape{2, 2}), 2));
}

TEST_CASE("softmax rows sum to one and the Jacobian matches") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord x = random_tensor({5}, rng, 3.0);
    const auto r = check_entries({x}, [&] { return project(softmax(x, 0), 7); });
    CHECK_MESSAGE(r.worst < 1e-5, r.where);

    Tensord m = random_tensor({4, 6}, rng, 50.0, false);
    for (std::size_t axis : {0u, 1u}) {
      const Tensord s = softmax(m, axis);
      const std::size_t rows = axis == 1 ? 4 : 6, cols = axis == 1 ? 6 : 4;
      for (std::size_t i = 0; i < rows; ++i) {
        double total = 0;
        for (std::size_t j = 0; j < cols; ++j) total += axis == 1 ? s.data()[i * 6 + j] : s.data()[j * 6 + i];
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv2d examples") {
  Rng rng(3);
  Tensord x = random_tensor({3, 5, 5}, rng, 1.0, false);
  Tensord w(Shape{3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w.data()[c * 3 + c] = 1.0;
  const Tensord y = conv2d(x, w, Tensord(), 1, 0);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);

  Tensord c(Shape{1, 4, 4}, 2.5), ones(Shape{1, 1, 3, 3}, 1.0);
  const Tensord z = conv2d(c, ones, Tensord(), 1, 1);
  CHECK(z.shape() == Shape{1, 4, 4});
  CHECK(z.data()[1 * 4 + 1] == doctest::Approx(9 * 2.5));
  CHECK(z.data()[2 * 4 + 2] == doctest::Approx(9 * 2.5));
  CHECK(z.data()[0] == doctest::Approx(4 * 2.5));

  CHECK_THROWS_AS(conv2d(Tensord(Shape{1, 2, 2}), Tensord(Shape{1, 1, 5, 5}), Tensord(), 1, 0), ShapeError);
  // Output extents follow floor((H + 2p - k) / s) + 1.
  CHECK(conv2d(Tensord(Shape{1, 64, 64}), Tensord(Shape{2, 1, 7, 7}), Tensord(), 4, 3).shape() == Shape{2, 16, 16});
  CHECK(conv2d(Tensord(Shape{1, 7, 9}), Tensord(Shape{2, 1, 3, 3}), Tensord(), 2, 1).shape() == Shape{2, 4, 5});
}

TEST_CASE("conv2d gradient") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord x = random_tensor({2, 6, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    const auto r = check_entries({x, w, b}, [&] { return project(conv2d(x, w, b, 2, 1), 5); });
    CHECK_MESSAGE(r.worst < 1e-4, r.where);
  }
}

TEST_CASE("bilinear resize") {
  Rng rng(1);
  Tensord x = random_tensor({2, 3, 4}, rng, 1.0, false);
  const Tensord same = bilinear_resize(x, 3, 4);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

  const Tensord fill = bilinear_resize(Tensord(Shape{1, 1, 1}, 0.75), 5, 5);
  for (double v : fill.data()) CHECK(v == 0.75);

  // Brute-force half-pixel oracle: src = (dst + 0.5) * in / out - 0.5,
  // clamped at zero, neighbours clamped to the last row/column.
  const Tensord small(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensord up = bilinear_resize(small, 4, 4);
  auto oracle = [&](int oy, int ox) {
    auto src = [](int o, int in, int out) { return std::max(0.0, (o + 0.5) * in / out - 0.5); };
    const double sy = src(oy, 2, 4), sx = src(ox, 2, 4);
    const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
    const int y1 = std::min(y0 + 1, 1), x1 = std::min(x0 + 1, 1);
    const double fy = sy - y0, fx = sx - x0;
    auto v = [&](int y, int x) { return small.data()[y * 2 + x]; };
    return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
  };
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) CHECK(up.data()[y * 4 + x] == doctest::Approx(oracle(y, x)).epsilon(1e-12));
  }
  CHECK(up.data()[0] == 1.0);
  CHECK(up.data()[1] == doctest::Approx(1.25));
  CHECK(up.data()[5] == doctest::Approx(1.75 + 0.0));
}

TEST_CASE("bilinear resize gradient") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord x = random_tensor({2, 3, 5}, rng);
    const auto up = check_entries({x}, [&] { return project(bilinear_resize(x, 7, 4), 3); });
    CHECK_MESSAGE(up.worst < 1e-4, up.where);
  }
}

TEST_CASE("plumbing op gradients over five seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    Tensord g = random_tensor({4}, rng), be = random_tensor({4}, rng);
    Tensord img = random_tensor({2, 4, 4}, rng);

    const std::vector<std::pair<const char*, std::function<Tensord()>>> cases = {
        {"add", [&] { return project(add(a, b), 1); }},
        {"sub", [&] { return project(sub(a, b), 1); }},
        {"mul", [&] { return project(mul(a, b), 1); }},
        {"scale", [&] { return project(scale(a, 1.7), 1); }},
        {"add_scalar", [&] { return project(add_scalar(a, 0.3), 1); }},
        {"gelu", [&] { return project(gelu(a), 2); }},
        {"relu", [&] { return project(relu(a), 2); }},
        {"transpose", [&] { return project(transpose(a), 3); }},
        {"reshape", [&] { return project(reshape(a, Shape{2, 6}), 3); }},
        {"layer_norm", [&] { return project(layer_norm(a, g, be), 4); }},
        {"concat0", [&] { return project(concat(std::vector<Tensord>{a, b}, 0), 5); }},
        {"concat1", [&] { return project(concat(std::vector<Tensord>{a, b}, 1), 5); }},
        {"slice", [&] { return project(slice(a, 1, 1, 2), 6); }},
        {"sum", [&] { return sum(mul(a, a)); }},
        {"mean", [&] { return mean(mul(a, b)); }},
        {"max_pool", [&] { return project(max_pool2d(img, 3, 2, 1), 8); }},
        {"to_tokens", [&] { return project(to_tokens(img), 9); }},
        {"to_map", [&] { return project(to_map(transpose(a), 2, 2), 9); }},
        {"cross_entropy", [&] {
           const std::vector<int> labels{0, 2, 1, 1};
           return cross_entropy(a, std::span<const int>(labels));
         }},
    };
    for (const auto& [name, fn] : cases) {
      const auto r = check_entries({a, b, g, be, img}, fn);
      CHECK_MESSAGE(r.worst < 1e-4, name, " seed ", seed, " ", r.where);
    }
  }
}

TEST_CASE("reused subgraphs accumulate gradients") {
  Rng rng(11);
  Tensord x = random_tensor({2, 3}, rng);
  Tensord shared = gelu(x);
  // d/dx sum(shared + shared * shared) accumulates through three uses.
  Tensord y = sum(add(shared, mul(shared, shared)));
  y.backward();
  const std::vector<double> reused(x.grad().begin(), x.grad().end());

  x.zero_grad();
  Tensord a = gelu(x), b = gelu(x), c = gelu(x);
  sum(add(a, mul(b, c))).backward();
  for (std::size_t i = 0; i < reused.size(); ++i) CHECK(reused[i] == doctest::Approx(x.grad()[i]).epsilon(1e-12));

  // A second backward over the same graph adds to leaf gradients.
  x.zero_grad();
  y.backward();
  y.backward();
  for (std::size_t i = 0; i < reused.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2 * reused[i]).epsilon(1e-12));
}

TEST_CASE("no-grad mode records no tape") {
  Rng rng(2);
  Tensord x = random_tensor({2, 2}, rng);
  NoGradGuard guard;
  const Tensord y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}

TEST_CASE("shape errors are eager") {
  CHECK_THROWS_AS(add(Tensord(Shape{2, 3}), Tensord(Shape{3, 2})), ShapeError);
  CHECK_THROWS_AS(Tensord(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensord(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(bilinear_resize(Tensord(Shape{1, 2, 2}), 0, 3), ShapeError);
}

TEST_CASE("tensor record byte layout") {
  const Tensorf t(Shape{2, 3}, std::vector<float>{1, 2, 3, 4, 5, -0.5f});
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 8 + 4 + 2 * 4 + 6 * 4);
  CHECK(bytes.substr(0, 8) == "ESTNSF32");
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);
  CHECK(static_cast<unsigned char>(bytes[16]) == 3);
  // 1.0f = 0x3F800000, little-endian
  CHECK(static_cast<unsigned char>(bytes[20]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[23]) == 0x3F);

  std::istringstream is(bytes, std::ios::binary);
  const Tensorf back = read_tensor<float>(is);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.data()[i] == t.data()[i]);

  std::istringstream wrong(bytes, std::ios::binary);
  CHECK_THROWS(read_tensor<double>(wrong));
}
