#include <gtest/gtest.h>

#include <set>

#include "trunet/errors.hpp"
#include "trunet/grad_suite.hpp"

using namespace trunet;

namespace {

std::string failures(const std::vector<GradCase>& cases) {
  std::string s;
  for (const auto& c : cases) {
    if (!c.passed()) s += c.name + "=" + std::to_string(c.result.max_rel_error) + " ";
  }
  return s;
}

}  // namespace

TEST(GradSuite, PrimitiveScopePasses) {
  const auto cases = run_grad_suite(GradScope::kPrimitive);
  EXPECT_EQ(failures(cases), "");
  std::set<std::string> ops;
  for (const auto& c : cases) {
    ops.insert(c.name.substr(0, c.name.find('.')));
    EXPECT_EQ(c.tolerance, 1e-6);
  }
  EXPECT_GE(ops.size(), 8u);
  for (const char* op : {"conv2d", "batchnorm2d", "maxpool2d", "bilinear_upsample2x", "matmul", "softmax", "layernorm",
                         "relu", "sigmoid", "gelu"}) {
    EXPECT_TRUE(ops.count(op)) << op;
  }
}

TEST(GradSuite, BlockScopePasses) {
  const auto cases = run_grad_suite(GradScope::kBlock);
  EXPECT_EQ(failures(cases), "");
  std::set<std::string> blocks;
  for (const auto& c : cases) blocks.insert(c.name.substr(0, c.name.find_first_of(".:")));
  for (const char* b : {"residual_block", "bottleneck_block", "transformer_encoder_block", "dilated_conv_block",
                        "decoder_block", "segmentation_head"}) {
    EXPECT_TRUE(blocks.count(b)) << b;
  }
}

TEST(GradSuite, ModelScopeUsesTwentyCoordinates) {
  const auto cases = run_grad_suite(GradScope::kModel);
  EXPECT_EQ(failures(cases), "");
  std::int64_t coords = 0;
  for (const auto& c : cases) {
    EXPECT_EQ(c.name.rfind("model:", 0), 0u) << c.name;
    EXPECT_EQ(c.tolerance, 1e-5);
    coords += c.coordinates;
  }
  EXPECT_EQ(coords, kModelCoordinates);
}

TEST(GradSuite, OtherSeedsPass) {
  for (std::uint64_t seed : {1, 2, 3}) {
    EXPECT_EQ(failures(run_grad_suite(GradScope::kBlock, seed)), "") << seed;
    EXPECT_EQ(failures(run_grad_suite(GradScope::kModel, seed)), "") << seed;
  }
}

TEST(GradSuite, DoubledBackwardRuleIsCaught) {
  for (const char* op : {"conv2d", "batchnorm2d", "matmul", "softmax", "layernorm", "bilinear_upsample2x", "gelu",
                         "maxpool2d"}) {
    ScopedBackwardFault fault(op, 2.0);
    const auto cases = run_grad_suite(GradScope::kPrimitive);
    bool caught = false;
    for (const auto& c : cases) {
      if (c.name.rfind(op, 0) == 0) {
        EXPECT_FALSE(c.passed()) << c.name;
        caught = true;
      }
    }
    EXPECT_TRUE(caught) << op;
  }
  ScopedBackwardFault fault("conv2d", 2.0);
  EXPECT_NE(failures(run_grad_suite(GradScope::kModel)), "");
}

TEST(GradSuite, ScopeNames) {
  EXPECT_EQ(parse_grad_scope("block"), GradScope::kBlock);
  EXPECT_STREQ(grad_scope_name(GradScope::kModel), "model");
  EXPECT_THROW(parse_grad_scope("layer"), ConfigError);
}
