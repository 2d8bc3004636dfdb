#include <gtest/gtest.h>

#include "cli.hpp"
#include "coalflow/errors.hpp"

using namespace coalflow;
using namespace coalflow::cli;

TEST(ConfigText, ParsesCommentsAndRejectsJunk) {
    const auto m = parse_config_text("# header\n drift = linear:-2  \n\nseed=4 # trailing\n");
    EXPECT_EQ(m.at("drift"), "linear:-2");
    EXPECT_EQ(m.at("seed"), "4");
    EXPECT_EQ(m.size(), 2u);
    EXPECT_THROW(parse_config_text("seed 4\n"), InputError);
    EXPECT_THROW(parse_config_text("seed=1\nseed=2\n"), InputError);
}

TEST(ExperimentConfig, PrecedenceAndUnknownKeys) {
    const auto c = ExperimentConfig::resolve("meeting", {{"seed", "5"}, {"gap", "2"}}, {{"seed", "9"}});
    EXPECT_EQ(c.count("seed"), 9u);
    EXPECT_EQ(c.num("gap"), 2.0);
    EXPECT_EQ(c.num("dt"), 0.001);
    EXPECT_TRUE(c.flag("bridge"));
    EXPECT_EQ(c.drift().to_string(), DriftSpec::linear(-1.0).to_string());
    EXPECT_THROW(ExperimentConfig::resolve("meeting", {}, {{"gapp", "1"}}), InputError);
    EXPECT_THROW(ExperimentConfig::resolve("nosuch", {}, {}), InputError);
    EXPECT_THROW(c.str("missing"), LogicError);
}

TEST(ExperimentConfig, EchoRoundTrips) {
    const auto c = ExperimentConfig::resolve("pullback", {}, {{"c", "4"}});
    const auto again = ExperimentConfig::resolve("pullback", parse_config_text(c.echo()), {});
    EXPECT_EQ(c.values(), again.values());
    EXPECT_EQ(c.list("growth_times"), (std::vector<double>{1, 4, 16}));
}

TEST(Manifest, Sha256KnownAnswer) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
