#include "lploc/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "lploc/digest.hpp"

namespace lploc {

namespace {

using nlohmann::json;

void write_raw(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_raw(os, &v, sizeof(T));
}

void read_raw(std::ifstream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("read: truncated file");
}

template <typename T>
T read_pod(std::ifstream& is) {
    T v;
    read_raw(is, &v, sizeof(T));
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
    return is;
}

void expect_magic(std::ifstream& is, const char (&magic)[5], const char* what) {
    char buf[4];
    read_raw(is, buf, 4);
    if (std::memcmp(buf, magic, 4) != 0) {
        throw std::runtime_error(std::string(what) + ": bad magic");
    }
}

void write_stack(std::ofstream& os, const ConvStack& s) {
    const NetConfig& cfg = s.config();
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.in_channels));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.layers()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.kernel));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.pooling_stages));
    write_pod<std::uint32_t>(os, s.frozen() ? 1u : 0u);
    for (int c : cfg.channels) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c));
    }
    for (const auto& layer : s.layers()) {
        write_raw(os, layer.w.data(), layer.w.size() * sizeof(float));
        write_raw(os, layer.b.data(), layer.b.size() * sizeof(float));
    }
}

ConvStack read_stack(std::ifstream& is) {
    NetConfig cfg;
    cfg.in_channels = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto n_layers = read_pod<std::uint32_t>(is);
    cfg.kernel = static_cast<int>(read_pod<std::uint32_t>(is));
    cfg.pooling_stages = static_cast<int>(read_pod<std::uint32_t>(is));
    const bool frozen = read_pod<std::uint32_t>(is) != 0;
    cfg.channels.resize(n_layers);
    for (auto& c : cfg.channels) {
        c = static_cast<int>(read_pod<std::uint32_t>(is));
    }
    ConvStack s(cfg, 0);
    for (auto& layer : s.layers()) {
        read_raw(is, layer.w.data(), layer.w.size() * sizeof(float));
        read_raw(is, layer.b.data(), layer.b.size() * sizeof(float));
    }
    s.set_frozen(frozen);
    return s;
}

json traj_to_json(const Trajectory& t) {
    json arr = json::array();
    for (const auto& wp : t.waypoints) {
        arr.push_back({wp.pose.x, wp.pose.y, wp.pose.yaw, wp.t});
    }
    return arr;
}

Trajectory traj_from_json(const json& arr) {
    std::vector<TimedPose> wps;
    for (const auto& e : arr) {
        wps.push_back({Pose2(e.at(0).get<double>(), e.at(1).get<double>(),
                             e.at(2).get<double>()),
                       e.at(3).get<double>()});
    }
    return Trajectory(std::move(wps));
}

}  // namespace

void write_bevm(const std::filesystem::path& path, const BevGrid& grid) {
    auto os = open_out(path);
    write_raw(os, "BEVM", 4);
    write_pod<std::uint32_t>(os, 1u);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(grid.rows()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(grid.cols()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(grid.channels()));
    write_pod<float>(os, static_cast<float>(grid.resolution()));
    write_pod<double>(os, grid.origin_x());
    write_pod<double>(os, grid.origin_y());
    write_raw(os, grid.data().data(), grid.data().size() * sizeof(float));
    if (!os) throw std::runtime_error("write_bevm: write failed: " + path.string());
}

BevGrid read_bevm(const std::filesystem::path& path) {
    auto is = open_in(path);
    expect_magic(is, "BEVM", "read_bevm");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != 1) throw std::runtime_error("read_bevm: unsupported version");
    const auto rows = read_pod<std::uint32_t>(is);
    const auto cols = read_pod<std::uint32_t>(is);
    const auto channels = read_pod<std::uint32_t>(is);
    const auto res = read_pod<float>(is);
    const auto ox = read_pod<double>(is);
    const auto oy = read_pod<double>(is);
    BevGrid grid(static_cast<int>(rows), static_cast<int>(cols),
                 static_cast<int>(channels), res, ox, oy);
    read_raw(is, grid.data().data(), grid.data().size() * sizeof(float));
    return grid;
}

void write_lpc(const std::filesystem::path& path, std::span<const LidarPoint> points) {
    auto os = open_out(path);
    write_raw(os, "LPC1", 4);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(points.size()));
    for (const auto& p : points) {
        write_pod<float>(os, p.x);
        write_pod<float>(os, p.y);
        write_pod<float>(os, p.z);
        write_pod<float>(os, p.intensity);
    }
    if (!os) throw std::runtime_error("write_lpc: write failed: " + path.string());
}

std::vector<LidarPoint> read_lpc(const std::filesystem::path& path) {
    auto is = open_in(path);
    expect_magic(is, "LPC1", "read_lpc");
    const auto count = read_pod<std::uint32_t>(is);
    std::vector<LidarPoint> out(count);
    for (auto& p : out) {
        p.x = read_pod<float>(is);
        p.y = read_pod<float>(is);
        p.z = read_pod<float>(is);
        p.intensity = read_pod<float>(is);
    }
    return out;
}

void write_lpw(const std::filesystem::path& path, const LocalizerWeights& w) {
    auto os = open_out(path);
    write_raw(os, "LPW1", 4);
    write_pod<std::uint32_t>(os, 1u);
    write_pod<std::uint32_t>(os, 3u);  // stack count
    write_pod<std::uint32_t>(os, w.use_fusion ? 1u : 0u);
    write_stack(os, w.base);
    write_stack(os, w.f);
    write_stack(os, w.g);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(w.fusion.conv_w.size()));
    write_pod<float>(os, w.fusion.mix_weight);
    write_pod<float>(os, w.fusion.conv_b);
    write_raw(os, w.fusion.conv_w.data(), w.fusion.conv_w.size() * sizeof(float));
    if (!os) throw std::runtime_error("write_lpw: write failed: " + path.string());
}

LocalizerWeights read_lpw(const std::filesystem::path& path) {
    auto is = open_in(path);
    expect_magic(is, "LPW1", "read_lpw");
    if (read_pod<std::uint32_t>(is) != 1) {
        throw std::runtime_error("read_lpw: unsupported version");
    }
    if (read_pod<std::uint32_t>(is) != 3) {
        throw std::runtime_error("read_lpw: unexpected stack count");
    }
    LocalizerWeights w;
    w.use_fusion = read_pod<std::uint32_t>(is) != 0;
    w.base = read_stack(is);
    w.f = read_stack(is);
    w.g = read_stack(is);
    const auto n = read_pod<std::uint32_t>(is);
    w.fusion.mix_weight = read_pod<float>(is);
    w.fusion.conv_b = read_pod<float>(is);
    w.fusion.conv_w.resize(n);
    read_raw(is, w.fusion.conv_w.data(), n * sizeof(float));
    return w;
}

void save_world(const std::filesystem::path& dir, std::span<const Scenario> scenarios) {
    std::filesystem::create_directories(dir);

    // Deduplicate maps by pointer; scenarios from one world share a map.
    std::map<const IntensityMap*, std::string> map_files;
    int map_idx = 0;
    for (const auto& sc : scenarios) {
        if (!map_files.count(sc.map.get())) {
            char name[32];
            std::snprintf(name, sizeof(name), "map_%03d.bevm", map_idx++);
            map_files[sc.map.get()] = name;
            write_bevm(dir / name, sc.map->grid);
        }
    }

    int idx = 0;
    for (const auto& sc : scenarios) {
        json j;
        j["seed"] = sc.seed;
        j["map_path"] = map_files[sc.map.get()];
        j["speed"] = sc.speed;
        j["sdv_gt"] = traj_to_json(sc.sdv_gt);
        json route = json::array();
        for (const auto& p : sc.route) route.push_back({p.x, p.y});
        j["route"] = std::move(route);
        j["forecast_samples"] = sc.actors.sample_count;
        json actors = json::array();
        for (const auto& a : sc.actors.actors) {
            json ja;
            ja["length"] = a.box.length;
            ja["width"] = a.box.width;
            ja["gt"] = traj_to_json(a.gt);
            json fc = json::array();
            for (const auto& f : a.forecasts) fc.push_back(traj_to_json(f));
            ja["forecasts"] = std::move(fc);
            actors.push_back(std::move(ja));
        }
        j["actors"] = std::move(actors);

        char name[32];
        std::snprintf(name, sizeof(name), "scenario_%03d.json", idx++);
        std::ofstream os(dir / name, std::ios::trunc);
        if (!os) {
            throw std::runtime_error("save_world: cannot write " + (dir / name).string());
        }
        os << j.dump(1, '\t') << "\n";
    }
}

std::vector<Scenario> load_world(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".json" &&
            e.path().filename().string().rfind("scenario_", 0) == 0) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw std::runtime_error("load_world: no scenario manifests in " + dir.string());
    }

    std::map<std::string, std::shared_ptr<const IntensityMap>> map_cache;
    std::vector<Scenario> out;
    for (const auto& path : files) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("load_world: cannot open " + path.string());
        json j = json::parse(is);

        Scenario sc;
        sc.seed = j.at("seed").get<std::uint64_t>();
        sc.speed = j.at("speed").get<double>();
        const std::string map_rel = j.at("map_path").get<std::string>();
        auto it = map_cache.find(map_rel);
        if (it == map_cache.end()) {
            auto m = std::make_shared<IntensityMap>(IntensityMap{read_bevm(dir / map_rel)});
            it = map_cache.emplace(map_rel, std::move(m)).first;
        }
        sc.map = it->second;
        sc.sdv_gt = traj_from_json(j.at("sdv_gt"));
        for (const auto& p : j.at("route")) {
            sc.route.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        }
        sc.actors.sample_count = j.at("forecast_samples").get<int>();
        for (const auto& ja : j.at("actors")) {
            Actor a;
            a.box.length = ja.at("length").get<double>();
            a.box.width = ja.at("width").get<double>();
            a.gt = traj_from_json(ja.at("gt"));
            for (const auto& f : ja.at("forecasts")) {
                a.forecasts.push_back(traj_from_json(f));
            }
            sc.actors.actors.push_back(std::move(a));
        }
        sc.actors.validate();
        out.push_back(std::move(sc));
    }
    return out;
}

std::uint64_t file_digest(const std::filesystem::path& path) {
    auto is = open_in(path);
    Digest d;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof(buf));
        d.update(buf, static_cast<std::size_t>(is.gcount()));
    }
    return d.value();
}

}  // namespace lploc
