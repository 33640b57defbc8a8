#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "grasplearn/adam.hpp"
#include "grasplearn/checkpoint.hpp"
#include "grasplearn/errors.hpp"
#include "grasplearn/grad_check.hpp"
#include "grasplearn/layers.hpp"
#include "helpers.hpp"

using namespace grasp;
using nn::LayerSpec;
using nn::Network;
using nn::Tensor;

TEST_SUITE_BEGIN("nn");

TEST_CASE("tensor shape/data invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 0}), ConfigError);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0}), ConfigError);
  t.ensure_grad();
  CHECK(t.grad.size() == 6);
}

TEST_CASE("identity fully-connected layer reproduces its input") {
  Rng rng(1);
  Network net({LayerSpec::fc(4)}, {4}, rng);
  auto params = net.params();
  REQUIRE(params.size() == 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) params[0].tensor->data[i * 4 + j] = i == j ? 1.0 : 0.0;
  for (double& b : params[1].tensor->data) b = 0.0;
  const Tensor v({4}, {0.3, -1.2, 4.5, 0.0});
  const Tensor out = net.infer(v);
  for (int i = 0; i < 4; ++i) CHECK(out.data[i] == doctest::Approx(v.data[i]).epsilon(1e-15));
}

TEST_CASE("zero-weight network maps anything to zero") {
  Rng rng(2);
  Network net({LayerSpec::conv(4, 1), LayerSpec::relu(), LayerSpec::fc(3)}, {3, 12, 12}, rng);
  for (auto& p : net.params())
    for (double& x : p.tensor->data) x = 0.0;
  Rng in_rng(3);
  const Tensor out = net.infer(testutil::random_tensor({3, 12, 12}, in_rng));
  for (double x : out.data) CHECK(x == 0.0);
}

TEST_CASE("conv output geometry: 5x5 stride 1 padding 1 on 96x96 gives 94x94") {
  Rng rng(4);
  Network net({LayerSpec::conv(2, 1)}, {3, 96, 96}, rng);
  CHECK(net.output_shape() == std::vector<int>{2, 94, 94});
  Network same({LayerSpec::conv(2, 2)}, {3, 48, 48}, rng);
  CHECK(same.output_shape() == std::vector<int>{2, 48, 48});
}

TEST_CASE("conv forward matches the sliding-window oracle") {
  Rng rng(5);
  for (int padding : {1, 2}) {
    Network net({LayerSpec::conv(6, padding)}, {3, 17, 13}, rng);
    const Tensor in = testutil::random_tensor({3, 17, 13}, rng);
    const Tensor got = net.infer(in);
    auto params = net.params();
    const Tensor want = testutil::conv2d_reference(in, *params[0].tensor, *params[1].tensor, padding);
    REQUIRE(got.shape == want.shape);
    for (size_t i = 0; i < got.data.size(); ++i) {
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("shape mismatch errors name the offending quantity") {
  Rng rng(6);
  Network net({LayerSpec::conv(2, 1)}, {3, 8, 8}, rng);
  try {
    net.infer(Tensor({3, 9, 9}));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("input shape") != std::string::npos);
  }
  CHECK_THROWS_AS(Network({LayerSpec::maxpool2()}, {3, 1, 4}, rng), ConfigError);
}

TEST_CASE("backward without recorded forward is a state error") {
  Rng rng(7);
  Network net({LayerSpec::fc(2)}, {3}, rng);
  CHECK_THROWS_AS(net.backward(Tensor({2}, {1.0, 1.0})), StateError);
}

TEST_CASE("loss = sum of outputs of ones-input linear layer gives unit parameter grads") {
  Rng rng(8);
  Network net({LayerSpec::fc(3)}, {4}, rng);
  net.forward(Tensor({4}, {1, 1, 1, 1}));
  net.backward(Tensor({3}, {1, 1, 1}));
  for (auto& p : net.params()) {
    REQUIRE(!p.tensor->grad.empty());
    for (double g : p.tensor->grad) CHECK(g == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("half squared error through a 2x2 linear map has the closed-form gradient") {
  // loss = 0.5 * ||W x - y||^2, dL/dW = (W x - y) x^T
  Rng rng(9);
  Network net({LayerSpec::fc(2)}, {2}, rng);
  auto params = net.params();
  Tensor& weight = *params[0].tensor;
  weight.data = {0.7, -0.3, 1.1, 0.4};
  params[1].tensor->data = {0.0, 0.0};
  const Tensor x({2}, {0.5, -1.25});
  const std::vector<double> y = {0.2, -0.6};

  const Tensor out = net.forward(x);
  const std::vector<double> resid = {out.data[0] - y[0], out.data[1] - y[1]};
  net.backward(Tensor({2}, resid));

  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double want = resid[i] * x.data[j];
      CHECK(weight.grad[i * 2 + j] == doctest::Approx(want).epsilon(1e-12));
    }
  }

  auto loss = [&] {
    const Tensor o = net.infer(x);
    return 0.5 * ((o.data[0] - y[0]) * (o.data[0] - y[0]) + (o.data[1] - y[1]) * (o.data[1] - y[1]));
  };
  const std::vector<double> fd = testutil::finite_diff(weight.data, loss);
  for (int i = 0; i < 4; ++i) CHECK(testutil::rel_err(weight.grad[i], fd[i]) < 1e-6);
}

TEST_CASE("finite-difference suite: every layer kind passes at 1e-4") {
  Rng rng(10);
  SUBCASE("single linear layer is nearly exact") {
    Network net({LayerSpec::fc(3)}, {5}, rng);
    auto report = nn::finite_diff_check(net, testutil::random_tensor({5}, rng), 1e-6);
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-6);
  }
  SUBCASE("conv + relu + maxpool + fc stack") {
    Network net({LayerSpec::conv(4, 1), LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::fc(6)},
                {2, 11, 11}, rng);
    auto report = nn::finite_diff_check(net, testutil::random_tensor({2, 11, 11}, rng), 1e-4);
    CHECK(report.passed);
  }
  SUBCASE("avgpool + conv(p2) + tanh") {
    Network net({LayerSpec::avgpool2(), LayerSpec::conv(3, 2), LayerSpec::tanh()}, {2, 12, 12}, rng);
    auto report = nn::finite_diff_check(net, testutil::random_tensor({2, 12, 12}, rng), 1e-4);
    CHECK(report.passed);
  }
  SUBCASE("softmax") {
    Network net({LayerSpec::fc(5), LayerSpec::softmax()}, {4}, rng);
    auto report = nn::finite_diff_check(net, testutil::random_tensor({4}, rng), 1e-4);
    CHECK(report.passed);
  }
  SUBCASE("reduced-width evaluator-style branch") {
    Network net(
        {
            LayerSpec::avgpool2(),
            LayerSpec::conv(4, 1),
            LayerSpec::relu(),
            LayerSpec::maxpool2(),
            LayerSpec::conv(6, 1),
            LayerSpec::relu(),
            LayerSpec::maxpool2(),
            LayerSpec::fc(20),
            LayerSpec::relu(),
            LayerSpec::fc(10),
            LayerSpec::relu(),
            LayerSpec::fc(2),
            LayerSpec::tanh(),
        },
        {3, 32, 32}, rng);
    auto report = nn::finite_diff_check(net, testutil::random_tensor({3, 32, 32}, rng), 1e-4);
    CHECK(report.passed);
  }
}

TEST_CASE("relu backward uses the zero subgradient exactly at the kink") {
  Rng rng(11);
  Network net({LayerSpec::relu()}, {3}, rng);
  net.forward(Tensor({3}, {0.0, 1.0, -1.0}));
  const Tensor din = net.backward(Tensor({3}, {1.0, 1.0, 1.0}));
  CHECK(din.data[0] == 0.0);
  CHECK(din.data[1] == 1.0);
  CHECK(din.data[2] == 0.0);
}

TEST_CASE("adam: zero gradients leave parameters unchanged while moments decay") {
  Rng rng(12);
  Network net({LayerSpec::fc(3)}, {2}, rng);
  nn::Adam adam(net, {});
  std::vector<double> before;
  for (auto& p : net.params())
    for (double x : p.tensor->data) before.push_back(x);
  nn::GradBuffer zeros = net.make_grad_buffer();
  for (int i = 0; i < 5; ++i) adam.step(net, zeros);
  std::vector<double> after;
  for (auto& p : net.params())
    for (double x : p.tensor->data) after.push_back(x);
  CHECK(before == after);
  for (const Tensor& m : adam.moments_m())
    for (double x : m.data) CHECK(x == 0.0);
}

TEST_CASE("adam first step moves each parameter by about -lr * sign(g)") {
  Rng rng(13);
  Network net({LayerSpec::fc(2)}, {2}, rng);
  nn::AdamConfig cfg;
  cfg.lr = 1e-3;
  nn::Adam adam(net, cfg);
  nn::GradBuffer grads = net.make_grad_buffer();
  Rng grng(14);
  for (auto& g : grads)
    for (double& x : g.data) x = grng.uniform(0.5, 2.0) * (grng.coin() ? 1.0 : -1.0);
  std::vector<double> before;
  for (auto& p : net.params())
    for (double x : p.tensor->data) before.push_back(x);
  adam.step(net, grads);
  size_t i = 0;
  auto params = net.params();
  for (size_t s = 0; s < params.size(); ++s) {
    for (size_t k = 0; k < params[s].tensor->data.size(); ++k, ++i) {
      const double g = grads[s].data[k];
      const double delta = params[s].tensor->data[k] - before[i];
      CHECK(std::fabs(delta + cfg.lr * (g > 0 ? 1.0 : -1.0)) < 1e-5);
    }
  }
}

TEST_CASE("adam under a constant gradient approaches a step of magnitude lr") {
  Rng rng(15);
  Network net({LayerSpec::fc(1)}, {1}, rng);
  nn::AdamConfig cfg;
  cfg.lr = 1e-3;
  nn::Adam adam(net, cfg);
  nn::GradBuffer grads = net.make_grad_buffer();
  for (auto& g : grads)
    for (double& x : g.data) x = 0.37;
  double prev = net.params()[0].tensor->data[0];
  double delta = 0;
  for (int i = 0; i < 400; ++i) {
    adam.step(net, grads);
    const double cur = net.params()[0].tensor->data[0];
    delta = prev - cur;
    prev = cur;
  }
  CHECK(delta == doctest::Approx(cfg.lr).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients without touching state") {
  Rng rng(16);
  Network net({LayerSpec::fc(2)}, {2}, rng);
  nn::Adam adam(net, {});
  nn::GradBuffer grads = net.make_grad_buffer();
  grads[0].data[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> before;
  for (auto& p : net.params())
    for (double x : p.tensor->data) before.push_back(x);
  CHECK_THROWS_AS(adam.step(net, grads), NumericError);
  std::vector<double> after;
  for (auto& p : net.params())
    for (double x : p.tensor->data) after.push_back(x);
  CHECK(before == after);
  CHECK(adam.step_count() == 0);
}

TEST_CASE("identical seed and data give bitwise-identical parameters after training") {
  auto train = [] {
    Rng rng(77);
    Network net({LayerSpec::conv(3, 1), LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::fc(4)},
                {2, 10, 10}, rng);
    nn::Adam adam(net, {});
    Rng data_rng(78);
    for (int step = 0; step < 20; ++step) {
      const Tensor in = testutil::random_tensor({2, 10, 10}, data_rng);
      nn::Activations acts;
      const Tensor out = net.forward(in, acts);
      Tensor dout(out.shape);
      for (size_t i = 0; i < dout.data.size(); ++i) dout.data[i] = out.data[i];  // L = 0.5 sum y^2
      nn::GradBuffer gb = net.make_grad_buffer();
      net.backward(acts, dout, gb);
      adam.step(net, gb);
    }
    std::vector<double> flat;
    for (auto& p : net.params())
      for (double x : p.tensor->data) flat.push_back(x);
    return flat;
  };
  CHECK(train() == train());
}

TEST_CASE("checkpoint container round-trips bitwise and rejects corruption") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "grasplearn_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "net.bin").string();

  Rng rng(21);
  Network net({LayerSpec::conv(2, 1), LayerSpec::fc(3)}, {1, 7, 7}, rng);
  nn::save_network(net, path);

  Rng rng2(22);
  Network other({LayerSpec::conv(2, 1), LayerSpec::fc(3)}, {1, 7, 7}, rng2);
  nn::load_network(other, path);
  auto a = net.params();
  auto b = other.params();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].tensor->data == b[i].tensor->data);

  {
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::ofstream os(path + ".bad", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(nn::TensorFile::load(path + ".bad"), StateError);
  {
    std::ofstream os(path + ".magic", std::ios::binary);
    os << "NOTATENSORFILE";
  }
  CHECK_THROWS_AS(nn::TensorFile::load(path + ".magic"), StateError);

  Rng rng3(23);
  Network mismatched({LayerSpec::conv(2, 1), LayerSpec::fc(4)}, {1, 7, 7}, rng3);
  CHECK_THROWS_AS(nn::load_network(mismatched, path), StateError);
}

TEST_CASE("weight init spans the documented uniform bound") {
  Rng rng(24);
  Network net({LayerSpec::fc(64)}, {64}, rng);
  const double bound = std::sqrt(6.0 / (64 + 64));
  double mx = 0;
  for (double x : net.params()[0].tensor->data) {
    CHECK(std::fabs(x) <= bound);
    mx = std::max(mx, std::fabs(x));
  }
  CHECK(mx > 0.5 * bound);
}

TEST_SUITE_END();
