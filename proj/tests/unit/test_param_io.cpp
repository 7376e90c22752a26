#include "metahdr/param_io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

using namespace metahdr;

namespace {

UNetConfig small() {
    UNetConfig c;
    c.depth = 1;
    c.base_channels = 4;
    return c;
}

std::string serialized(const ParamSet<float>& p) {
    std::ostringstream os;
    write_checkpoint(os, p);
    return os.str();
}

ParamSet<float> parse(const std::string& bytes) {
    std::istringstream is(bytes);
    return read_checkpoint(is);
}

void put_u32(std::string& s, std::size_t at, std::uint32_t v) { std::memcpy(s.data() + at, &v, 4); }

// Header: magic(8) version(4) architecture(4) depth(4) base(4) eps(8) count(4).
constexpr std::size_t kFirstTensor = 36;

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
    const auto p = init_params<float>(small(), 5);
    const auto q = parse(serialized(p));
    EXPECT_EQ(q.config(), p.config());
    ASSERT_EQ(q.names(), p.names());
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(q[i].shape(), p[i].shape());
        EXPECT_EQ(q[i].to_vector(), p[i].to_vector());
    }
}

TEST(Checkpoint, DoubleParamsStoredAsFloat) {
    const auto p = init_params<double>(small(), 5);
    const auto q = parse([&] {
        std::ostringstream os;
        write_checkpoint(os, p);
        return os.str();
    }());
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::int64_t k = 0; k < p[i].numel(); ++k) EXPECT_EQ(q[i].values()[k], float(p[i].values()[k]));
}

TEST(Checkpoint, IdentityArchitectureHasNoTensors) {
    UNetConfig c = small();
    c.architecture = Architecture::identity;
    const auto q = parse(serialized(init_params<float>(c, 0)));
    EXPECT_EQ(q.config().architecture, Architecture::identity);
    EXPECT_TRUE(q.empty());
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
    test::TempDir dir("ckpt");
    const auto p = init_params<float>(small(), 1);
    save_checkpoint(dir / "p.mhp", p);
    EXPECT_EQ(load_checkpoint(dir / "p.mhp").names(), p.names());
    EXPECT_THROW(load_checkpoint(dir / "nope.mhp"), ConfigError);
}

TEST(Checkpoint, MalformedInputsAreParseErrors) {
    const auto good = serialized(init_params<float>(small(), 1));
    std::vector<std::string> bad;
    bad.push_back("");
    bad.push_back("MHDRPRM2" + good.substr(8));
    {
        auto s = good;
        put_u32(s, 8, 7);  // version
        bad.push_back(s);
    }
    {
        auto s = good;
        put_u32(s, 12, 9);  // architecture
        bad.push_back(s);
    }
    {
        auto s = good;
        put_u32(s, 32, 100000);  // tensor count
        bad.push_back(s);
    }
    {
        auto s = good;
        put_u32(s, kFirstTensor, 0);  // name length
        bad.push_back(s);
    }
    {
        auto s = good;
        put_u32(s, kFirstTensor, 1000);
        bad.push_back(s);
    }
    {
        // Rank of the first tensor (name "down0.conv1.weight", 18 bytes).
        auto s = good;
        put_u32(s, kFirstTensor + 4 + 18, 9);
        bad.push_back(s);
    }
    {
        auto s = good;
        put_u32(s, kFirstTensor + 4 + 18 + 4, 1u << 30);  // extent
        bad.push_back(s);
    }
    {
        auto s = good;
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(s.data() + kFirstTensor + 4 + 18 + 4 + 16, &nan, 4);
        bad.push_back(s);
    }
    bad.push_back(good + "x");
    for (std::size_t n : {8u, 20u, 40u, 100u}) bad.push_back(good.substr(0, n));
    bad.push_back(good.substr(0, good.size() - 1));
    for (std::size_t i = 0; i < bad.size(); ++i) EXPECT_THROW(parse(bad[i]), ParseError) << "fixture " << i;
}

TEST(Checkpoint, DuplicateNameRejected) {
    ParamSet<float> p(small());
    p.insert("a", Tensor<float>::zeros({2}));
    auto s = serialized(p);
    // Duplicate by rewriting the count and appending the same record.
    const auto record = s.substr(kFirstTensor);
    put_u32(s, 32, 2);
    s += record;
    EXPECT_THROW(parse(s), ParseError);
}

TEST(Checkpoint, SchemaCheckNamesTensors) {
    const auto p = init_params<float>(small(), 1);
    EXPECT_NO_THROW(check_schema(small(), p));
    UNetConfig other = small();
    other.base_channels = 8;
    try {
        check_schema(other, p);
        FAIL();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("down0.conv1.weight"), std::string::npos) << what;
        EXPECT_NE(what.find("base_channels=4"), std::string::npos) << what;
    }
    ParamSet<float> extra = p;
    extra.insert("stray", Tensor<float>::zeros({1}));
    EXPECT_THROW(check_schema(small(), extra), ConfigError);
}

TEST(Manifest, RoundTrip) {
    test::TempDir dir("manifest");
    const Manifest m{{"seed", "3"}, {"dataset", "/data/x"}, {"empty", ""}};
    write_manifest(dir / "m.txt", m);
    EXPECT_EQ(read_manifest(dir / "m.txt"), m);
    {
        std::ofstream os(dir / "c.txt");
        os << "# comment\n\nseed=4\n";
    }
    EXPECT_EQ(read_manifest(dir / "c.txt"), (Manifest{{"seed", "4"}}));
}
