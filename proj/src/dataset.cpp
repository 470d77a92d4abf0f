#include "tempbev/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "tempbev/serialize.hpp"

namespace tempbev::data {

namespace fs = std::filesystem;
using nlohmann::json;
using world::TemporalSample;

std::string sample_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05d.tbtc", index);
    return buf;
}

namespace {

Tensor pose_tensor(const geom::Pose& p) {
    Tensor t({3, 4});
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t.at2(r, c) = p.rotation()(r, c);
        t.at2(r, 3) = p.translation()(r);
    }
    return t;
}

geom::Pose tensor_pose(const Tensor& t) {
    geom::Mat3 r;
    geom::Vec3 tr;
    for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) r(i, c) = t.at2(i, c);
        tr(i) = t.at2(i, 3);
    }
    return geom::Pose(r, tr);
}

void write_record(const TemporalSample& s, const std::string& path) {
    io::TensorFile tf;
    Tensor meta({8});
    meta[0] = s.spec.h_bev;
    meta[1] = s.spec.w_bev;
    meta[2] = s.spec.resolution;
    meta[3] = s.S;
    meta[4] = s.f;
    meta[5] = s.p;
    meta[6] = s.dt;
    meta[7] = s.ego_speed;
    tf.put("meta", std::move(meta));
    Tensor flags({2});
    flags[0] = s.has_occlusion_event ? 1 : 0;
    flags[1] = s.occluded_agent_id;
    tf.put("flags", std::move(flags), io::DType::i32);
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
        const auto& fr = s.frames[i];
        const std::string pfx = "frame" + std::to_string(i) + ".";
        Tensor ts({1});
        ts[0] = fr.timestamp;
        tf.put(pfx + "timestamp", std::move(ts));
        tf.put(pfx + "images", fr.images);
        tf.put(pfx + "points", fr.points);
        tf.put(pfx + "pose", pose_tensor(fr.ego_pose));
    }
    Tensor cls({static_cast<int>(s.gt_classes.size())});
    for (std::size_t i = 0; i < s.gt_classes.size(); ++i)
        cls[static_cast<std::int64_t>(i)] = static_cast<double>(s.gt_classes[i]);
    tf.put("gt_classes", std::move(cls), io::DType::i32);
    for (std::size_t i = 0; i < s.gt_classes.size(); ++i)
        tf.put(std::string("gt.") + world::seg_class_name(s.gt_classes[i]), s.gt_grids[i],
               io::DType::u8);
    tf.put("ownership", s.ownership, io::DType::i32);
    const int nv = static_cast<int>(s.visibility.size());
    Tensor vid({std::max(nv, 1)}), vfrac({std::max(nv, 1)});
    vid[0] = -1;
    for (int i = 0; i < nv; ++i) {
        vid[i] = s.visibility[static_cast<std::size_t>(i)].agent_id;
        vfrac[i] = s.visibility[static_cast<std::size_t>(i)].visible_fraction;
    }
    Tensor vn({1});
    vn[0] = nv;
    tf.put("vis.count", std::move(vn), io::DType::i32);
    tf.put("vis.ids", std::move(vid), io::DType::i32);
    tf.put("vis.fractions", std::move(vfrac));
    tf.put("ego_future", s.ego_future);
    tf.save(path);
}

TemporalSample read_record(const std::string& path, int index) {
    io::TensorFile tf;
    try {
        tf = io::TensorFile::load(path);
    } catch (const std::exception& e) {
        throw std::runtime_error("dataset record " + std::to_string(index) + " (" + path +
                                 "): " + e.what());
    }
    TemporalSample s;
    const Tensor& meta = tf.get("meta");
    s.spec = {static_cast<int>(meta[0]), static_cast<int>(meta[1]), meta[2]};
    s.S = static_cast<int>(meta[3]);
    s.f = static_cast<int>(meta[4]);
    s.p = static_cast<int>(meta[5]);
    s.dt = meta[6];
    s.ego_speed = meta[7];
    const Tensor& flags = tf.get("flags");
    s.has_occlusion_event = flags[0] != 0;
    s.occluded_agent_id = static_cast<int>(flags[1]);
    for (int i = 0; i < s.S; ++i) {
        const std::string pfx = "frame" + std::to_string(i) + ".";
        world::SampleFrame fr;
        fr.timestamp = tf.get(pfx + "timestamp")[0];
        fr.images = tf.get(pfx + "images");
        fr.points = tf.get(pfx + "points");
        fr.ego_pose = tensor_pose(tf.get(pfx + "pose"));
        s.frames.push_back(std::move(fr));
    }
    const Tensor& cls = tf.get("gt_classes");
    for (std::int64_t i = 0; i < cls.numel(); ++i) {
        const auto c = static_cast<world::SegClass>(static_cast<int>(cls[i]));
        s.gt_classes.push_back(c);
        s.gt_grids.push_back(tf.get(std::string("gt.") + world::seg_class_name(c)));
    }
    s.ownership = tf.get("ownership");
    const int nv = static_cast<int>(tf.get("vis.count")[0]);
    const Tensor& vid = tf.get("vis.ids");
    const Tensor& vfrac = tf.get("vis.fractions");
    for (int i = 0; i < nv; ++i) {
        world::VisibilityRecord r;
        r.agent_id = static_cast<int>(vid[i]);
        r.visible_fraction = vfrac[i];
        r.bin = world::visibility_bin(r.visible_fraction);
        s.visibility.push_back(r);
    }
    s.ego_future = tf.get("ego_future");
    return s;
}

}  // namespace

void write_dataset(const std::vector<TemporalSample>& samples, const std::string& dir,
                   std::uint64_t seed, const std::string& config_fingerprint) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("write_dataset: cannot create " + dir + ": " + ec.message());
    int occl = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        write_record(samples[i], (fs::path(dir) / sample_filename(static_cast<int>(i))).string());
        if (samples[i].has_occlusion_event) ++occl;
    }
    json m;
    m["format_version"] = kDatasetFormatVersion;
    m["n_samples"] = samples.size();
    m["seed"] = seed;
    m["config_fingerprint"] = config_fingerprint;
    m["occlusion_events"] = occl;
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("write_dataset: cannot write manifest in " + dir);
    out << m.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& dir) {
    const fs::path path = fs::path(dir) / "manifest.json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_manifest: missing " + path.string());
    json m;
    try {
        in >> m;
    } catch (const std::exception& e) {
        throw std::runtime_error("read_manifest: malformed " + path.string() + ": " + e.what());
    }
    DatasetManifest out;
    out.format_version = m.at("format_version").get<int>();
    if (out.format_version > kDatasetFormatVersion)
        throw std::runtime_error("read_manifest: " + path.string() + " has format version " +
                                 std::to_string(out.format_version) +
                                 "; this build reads up to version " +
                                 std::to_string(kDatasetFormatVersion) +
                                 " — upgrade the tool to read it");
    out.n_samples = m.at("n_samples").get<int>();
    out.seed = m.at("seed").get<std::uint64_t>();
    out.config_fingerprint = m.at("config_fingerprint").get<std::string>();
    out.occlusion_events = m.value("occlusion_events", 0);
    return out;
}

world::TemporalSample read_sample(const std::string& dir, int index) {
    return read_record((fs::path(dir) / sample_filename(index)).string(), index);
}

std::vector<TemporalSample> read_dataset(const std::string& dir) {
    const DatasetManifest m = read_manifest(dir);
    std::vector<TemporalSample> out;
    out.reserve(static_cast<std::size_t>(m.n_samples));
    for (int i = 0; i < m.n_samples; ++i) out.push_back(read_sample(dir, i));
    return out;
}

}  // namespace tempbev::data
