#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "lploc/io.hpp"
#include "lploc/rng.hpp"
#include "lploc/world.hpp"

using namespace lploc;

namespace {

std::filesystem::path tmp_dir() {
    const auto d = std::filesystem::temp_directory_path() / "lploc_test_io";
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("bevm round trip preserves payload and georeferencing") {
    Rng rng(3);
    BevGrid g(12, 17, 3, 0.05, -1.25, 2.5);
    for (auto& v : g.data()) v = static_cast<float>(rng.uniform(-1, 1));
    const auto path = tmp_dir() / "grid.bevm";
    write_bevm(path, g);
    const BevGrid r = read_bevm(path);
    CHECK(r.rows() == g.rows());
    CHECK(r.cols() == g.cols());
    CHECK(r.channels() == g.channels());
    CHECK(r.resolution() == doctest::Approx(g.resolution()));
    CHECK(r.origin_x() == g.origin_x());
    CHECK(r.origin_y() == g.origin_y());
    CHECK(r.data() == g.data());
}

TEST_CASE("bevm header layout is exactly as documented") {
    BevGrid g(2, 3, 1, 0.05f, 1.0, 2.0);
    for (std::size_t i = 0; i < g.data().size(); ++i) {
        g.data()[i] = static_cast<float>(i);
    }
    const auto path = tmp_dir() / "layout.bevm";
    write_bevm(path, g);
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    REQUIRE(bytes.size() == 4 + 4 * 4 + 4 + 8 + 8 + 6 * 4);
    CHECK(bytes.substr(0, 4) == "BEVM");
    auto u32 = [&](std::size_t off) {
        std::uint32_t v;
        std::memcpy(&v, bytes.data() + off, 4);
        return v;
    };
    CHECK(u32(4) == 1);   // version
    CHECK(u32(8) == 2);   // rows
    CHECK(u32(12) == 3);  // cols
    CHECK(u32(16) == 1);  // channels
    float res;
    std::memcpy(&res, bytes.data() + 20, 4);
    CHECK(res == 0.05f);
    double ox, oy;
    std::memcpy(&ox, bytes.data() + 24, 8);
    std::memcpy(&oy, bytes.data() + 32, 8);
    CHECK(ox == 1.0);
    CHECK(oy == 2.0);
}

TEST_CASE("bevm rejects a bad magic") {
    const auto path = tmp_dir() / "bad.bevm";
    std::ofstream os(path, std::ios::binary);
    os << "NOPE1234567890";
    os.close();
    CHECK_THROWS(read_bevm(path));
}

TEST_CASE("lpc round trip") {
    Rng rng(5);
    std::vector<LidarPoint> pts;
    for (int i = 0; i < 257; ++i) {
        pts.push_back({static_cast<float>(rng.uniform(-10, 10)),
                       static_cast<float>(rng.uniform(-10, 10)),
                       static_cast<float>(rng.uniform(0, 2)),
                       static_cast<float>(rng.uniform(0, 1))});
    }
    const auto path = tmp_dir() / "cloud.lpc";
    write_lpc(path, pts);
    const auto r = read_lpc(path);
    REQUIRE(r.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(r[i].x == pts[i].x);
        CHECK(r[i].y == pts[i].y);
        CHECK(r[i].z == pts[i].z);
        CHECK(r[i].intensity == pts[i].intensity);
    }
    // header: magic + count
    std::ifstream is(path, std::ios::binary);
    std::string head(8, 0);
    is.read(head.data(), 8);
    CHECK(head.substr(0, 4) == "LPC1");
    std::uint32_t count;
    std::memcpy(&count, head.data() + 4, 4);
    CHECK(count == 257);
}

TEST_CASE("lpw checkpoint round trip preserves every weight") {
    LocalizerWeights w;
    w.base = ConvStack(NetConfig{17, {8, 8}, 3, 0}, 1);
    w.base.set_frozen(true);
    w.f = ConvStack(tiny_config(1), 2);
    w.g = ConvStack(NetConfig{1, {8, 8, 8, 8, 1}, 3, 0}, 3);
    w.fusion.conv_w = {0.1f, 0.2f, -0.3f, 0.4f, 0.0f, 1.0f, -1.0f, 0.5f};
    w.fusion.conv_b = 0.125f;
    w.fusion.mix_weight = 0.75f;
    w.use_fusion = true;

    const auto path = tmp_dir() / "weights.lpw";
    write_lpw(path, w);
    const LocalizerWeights r = read_lpw(path);
    CHECK(r.use_fusion == w.use_fusion);
    CHECK(r.base.digest() == w.base.digest());
    CHECK(r.base.frozen());
    CHECK(r.f.digest() == w.f.digest());
    CHECK(r.g.digest() == w.g.digest());
    CHECK(r.g.config().pooling_stages == 0);
    CHECK(r.fusion.conv_w == w.fusion.conv_w);
    CHECK(r.fusion.conv_b == w.fusion.conv_b);
    CHECK(r.fusion.mix_weight == w.fusion.mix_weight);

    std::ifstream is(path, std::ios::binary);
    std::string head(4, 0);
    is.read(head.data(), 4);
    CHECK(head == "LPW1");
}

TEST_CASE("world save/load round trip preserves the scenario digest") {
    WorldConfig wc;
    wc.map_width = 64.0;
    wc.map_height = 64.0;
    wc.route_length = 30.0;
    wc.speed = 5.0;
    wc.route_margin = 14.0;
    wc.parked_along_max = 25.0;
    wc.forecast_samples = 3;
    const auto scenarios = gen_world(21, wc, 3);

    const auto dir = tmp_dir() / "world";
    std::filesystem::remove_all(dir);
    save_world(dir, scenarios);
    const auto loaded = load_world(dir);
    REQUIRE(loaded.size() == scenarios.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(scenario_digest(loaded[i]) == scenario_digest(scenarios[i]));
    }
    // the shared map is stored once and deduplicated on load
    int maps = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        maps += e.path().extension() == ".bevm";
    }
    CHECK(maps == 1);
    CHECK(loaded[0].map.get() == loaded[1].map.get());
}

TEST_CASE("load_world reports missing directories") {
    CHECK_THROWS(load_world(tmp_dir() / "does_not_exist"));
}
