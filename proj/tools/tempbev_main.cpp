#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tempbev/dataset.hpp"
#include "tempbev/evaluation.hpp"
#include "tempbev/plot.hpp"
#include "tempbev/runconfig.hpp"
#include "tempbev/serialize.hpp"

namespace fs = std::filesystem;
using namespace tempbev;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::int64_t seed = -1;
    bool force = false;
    bool resume = false;
    bool json = false;
    bool allow_mismatch = false;
};

cfg::RunConfig load_config(const CommonOpts& o) {
    cfg::RunConfig rc =
        o.config_path.empty() ? cfg::RunConfig{} : cfg::load_run_config(o.config_path);
    if (o.seed >= 0) {
        rc.seed = static_cast<std::uint64_t>(o.seed);
        rc.train.seed = rc.seed;
    }
    if (!o.out.empty()) rc.out_dir = o.out;
    rc.validate();
    return rc;
}

world::TemporalSample generate_sample(const cfg::RunConfig& rc, std::uint64_t seed) {
    const world::Scenario s = world::generate_scenario(rc.world, seed);
    return world::make_sample(s, rc.world.reference_index, rc.model.bev_spec(), rc.model.S,
                              rc.model.f, rc.model.p);
}

int cmd_gen_data(const CommonOpts& o) {
    const cfg::RunConfig rc = load_config(o);
    const std::string fp = cfg::fingerprint(rc);
    const fs::path root = rc.out_dir;
    for (const char* split : {"train", "val"}) {
        const fs::path dir = root / split;
        if (fs::exists(dir) && !fs::is_empty(dir) && !o.force) {
            std::cerr << "gen-data: " << dir.string()
                      << " exists and is not empty; pass --force to overwrite\n";
            return 1;
        }
    }
    int occl_total = 0, total = 0;
    for (const char* split : {"train", "val"}) {
        const bool is_train = std::string(split) == "train";
        const int n = is_train ? rc.n_train : rc.n_val;
        const std::uint64_t base = rc.seed + (is_train ? 0u : 0x100000u);
        std::vector<world::TemporalSample> samples;
        samples.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            samples.push_back(generate_sample(rc, base + static_cast<std::uint64_t>(i)));
        data::write_dataset(samples, (root / split).string(), rc.seed, fp);
        int occl = 0;
        for (const auto& s : samples) occl += s.has_occlusion_event ? 1 : 0;
        occl_total += occl;
        total += n;
        std::cout << split << ": " << n << " samples, " << occl
                  << " with a scripted occlusion event\n";
    }
    std::cout << "total: " << total << " samples, " << occl_total
              << " occlusion events, config " << fp << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, bool forecaster, const std::string& seg_ck_path) {
    const cfg::RunConfig rc = load_config(o);
    const std::string fp = cfg::fingerprint(rc);
    const fs::path root = rc.out_dir;
    const auto train_set = data::read_dataset((root / "train").string());
    const auto val_set = data::read_dataset((root / "val").string());

    const fs::path ck_path =
        root / (forecaster ? "ck_forecaster.tbtc" : "ck_segmentation.tbtc");
    if (o.resume && fs::exists(ck_path)) {
        const train::Checkpoint ck = train::Checkpoint::load(ck_path.string());
        if (ck.epoch >= rc.train.epochs) {
            std::cout << "resume: " << ck_path.string() << " already trained to epoch "
                      << ck.epoch << "; nothing to do\n";
            return 0;
        }
    }
    std::ofstream log(root / (forecaster ? "train_forecaster_log.jsonl" : "train_log.jsonl"));
    train::Checkpoint ck;
    if (forecaster) {
        const std::string seg_path =
            seg_ck_path.empty() ? (root / "ck_segmentation.tbtc").string() : seg_ck_path;
        const train::Checkpoint seg = train::Checkpoint::load(seg_path);
        if (seg.config_fingerprint != fp && !o.allow_mismatch) {
            std::cerr << "train: segmentation checkpoint fingerprint " << seg.config_fingerprint
                      << " does not match config " << fp
                      << "; pass --allow-mismatch to override\n";
            return 1;
        }
        ck = train::train_forecaster(rc.train, seg, train_set, val_set, &log);
    } else {
        ck = train::train_segmentation(rc.train, rc.model, rc.world.rig, train_set, val_set,
                                       fp, &log);
    }
    ck.save(ck_path.string());
    std::cout << "wrote " << ck_path.string() << " (final "
              << (forecaster ? "val ADE " : "val vehicle IoU ") << ck.history.back().val_iou
              << ")\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o) {
    const cfg::RunConfig rc = load_config(o);
    const std::string fp = cfg::fingerprint(rc);
    const fs::path root = rc.out_dir;
    const auto train_set = data::read_dataset((root / "train").string());
    const auto val_set = data::read_dataset((root / "val").string());
    std::ofstream log(root / "ablate_log.jsonl");
    const auto rows = train::run_ablation(rc.train, rc.model, rc.world.rig, train_set,
                                          val_set, (root / "ablation").string(), fp, &log);
    nlohmann::json j = nlohmann::json::array();
    std::cout << "modalities  val vehicle IoU\n";
    for (const auto& r : rows) {
        std::cout << "  " << r.label << std::string(10 - r.label.size(), ' ')
                  << r.val_iou << "\n";
        j.push_back({{"label", r.label},
                     {"val_iou", r.val_iou},
                     {"checkpoint", r.checkpoint_path},
                     {"config_fingerprint", fp}});
    }
    std::ofstream out(root / "ablation.json");
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ck_path_in,
             const std::string& forecaster_ck_path) {
    const cfg::RunConfig rc = load_config(o);
    const std::string fp = cfg::fingerprint(rc);
    const fs::path root = rc.out_dir;
    const std::string ck_path =
        ck_path_in.empty() ? (root / "ck_segmentation.tbtc").string() : ck_path_in;
    const train::Checkpoint ck = train::Checkpoint::load(ck_path);
    const data::DatasetManifest manifest = data::read_manifest((root / "val").string());
    if (!o.allow_mismatch) {
        if (ck.config_fingerprint != manifest.config_fingerprint) {
            std::cerr << "eval: checkpoint fingerprint " << ck.config_fingerprint
                      << " does not match dataset fingerprint " << manifest.config_fingerprint
                      << "; pass --allow-mismatch to override\n";
            return 1;
        }
    }
    const auto val_set = data::read_dataset((root / "val").string());
    eval::EvalReport rep = eval::evaluate(ck, val_set, rc.threshold);
    if (!forecaster_ck_path.empty()) {
        const train::Checkpoint fck = train::Checkpoint::load(forecaster_ck_path);
        eval::evaluate_forecaster(fck, ck, val_set, rep);
    }
    const nlohmann::json rj = eval::report_json(rep);
    {
        std::ofstream jf(root / "eval_report.json");
        jf << rj.dump(2) << "\n";
    }
    if (o.json) {
        std::cout << rj.dump(2) << "\n";
    } else {
        const std::string table = eval::report_table(rep);
        std::ofstream tf(root / "eval_report.txt");
        tf << table;
        std::cout << table;
        std::cout << "vehicle IoU  " << eval::filter_name(eval::VisFilter::all) << " "
                  << rep.vis_all << "  " << eval::filter_name(eval::VisFilter::visible) << " "
                  << rep.vis_visible << "  " << eval::filter_name(eval::VisFilter::occluded)
                  << " " << rep.vis_occluded << "\n";
    }
    if (rc.min_vehicle_iou >= 0 && rep.vis_all < rc.min_vehicle_iou) {
        std::cerr << "eval: vehicle IoU " << rep.vis_all << " below required minimum "
                  << rc.min_vehicle_iou << "\n";
        return 3;
    }
    return 0;
}

int cmd_predict(const CommonOpts& o, const std::string& ck_path_in, int sample_index,
                const std::string& split) {
    const cfg::RunConfig rc = load_config(o);
    const fs::path root = rc.out_dir;
    const std::string ck_path =
        ck_path_in.empty() ? (root / "ck_segmentation.tbtc").string() : ck_path_in;
    const train::Checkpoint ck = train::Checkpoint::load(ck_path);
    const world::TemporalSample s =
        data::read_sample((root / split).string(), sample_index);
    nn::ParamStore ps;
    const model::SegModel seg = train::build_seg_model(ps, ck);
    ad::NoGradGuard ng;
    const std::vector<ad::Var> logits = seg.forward(s);
    io::TensorFile tf;
    Tensor meta({3});
    meta[0] = s.spec.h_bev;
    meta[1] = s.spec.w_bev;
    meta[2] = s.spec.resolution;
    tf.put("spec", std::move(meta));
    for (std::size_t ci = 0; ci < ck.model_cfg.classes.size(); ++ci) {
        const char* name = world::seg_class_name(ck.model_cfg.classes[ci]);
        tf.put(std::string("pred.") + name, model::sigmoid(logits[ci]->val));
        tf.put(std::string("gt.") + name, s.grids_for(ck.model_cfg.classes[ci]),
               io::DType::u8);
    }
    Tensor fpb({static_cast<int>(ck.config_fingerprint.size())});
    for (std::size_t i = 0; i < ck.config_fingerprint.size(); ++i)
        fpb[static_cast<std::int64_t>(i)] =
            static_cast<unsigned char>(ck.config_fingerprint[i]);
    tf.put("fingerprint", std::move(fpb), io::DType::u8);
    const fs::path out = root / ("pred_" + split + "_" + std::to_string(sample_index) +
                                 ".tbtc");
    tf.save(out.string());
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

int cmd_forecast(const CommonOpts& o, const std::string& seg_ck_in,
                 const std::string& fc_ck_in, int sample_index, const std::string& split) {
    const cfg::RunConfig rc = load_config(o);
    const fs::path root = rc.out_dir;
    const train::Checkpoint seg_ck = train::Checkpoint::load(
        seg_ck_in.empty() ? (root / "ck_segmentation.tbtc").string() : seg_ck_in);
    const train::Checkpoint fc_ck = train::Checkpoint::load(
        fc_ck_in.empty() ? (root / "ck_forecaster.tbtc").string() : fc_ck_in);
    const world::TemporalSample s =
        data::read_sample((root / split).string(), sample_index);
    nn::ParamStore seg_ps, fc_ps;
    const model::SegModel seg = train::build_seg_model(seg_ps, seg_ck);
    const model::Forecaster fc = train::build_forecaster(fc_ps, fc_ck);
    ad::NoGradGuard ng;
    const Tensor channels = train::forecaster_channels(seg, s);
    const ad::Var pred = fc.forward(ad::constant(channels));
    Tensor states = pred->val;
    for (int i = 0; i < states.rows(); ++i)
        states.at2(i, 2) = model::wrap_angle(states.at2(i, 2));

    const fs::path txt = root / ("traj_" + split + "_" + std::to_string(sample_index) +
                                 ".txt");
    {
        std::ofstream out(txt);
        out << "# config " << fc_ck.config_fingerprint << "\n";
        for (int i = 0; i < states.rows(); ++i)
            out << (i + 1) * s.dt << " " << states.at2(i, 0) << " " << states.at2(i, 1)
                << " " << states.at2(i, 2) << "\n";
    }
    const Tensor drivable = [&] {
        const Tensor& g = s.grids_for(world::SegClass::drivable_area);
        Tensor out({s.spec.h_bev, s.spec.w_bev});
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = g[i];
        return out;
    }();
    const plot::Image img =
        plot::trajectory_overlay(drivable, states, s.ego_future, s.spec);
    const fs::path png = root / ("traj_" + split + "_" + std::to_string(sample_index) +
                                 ".png");
    plot::write_png(img, png.string(), fc_ck.config_fingerprint);
    std::cout << "wrote " << txt.string() << " and " << png.string() << "\n";
    return 0;
}

int cmd_plot(const CommonOpts& o, const std::string& pred_path) {
    const cfg::RunConfig rc = load_config(o);
    const fs::path root = rc.out_dir;
    if (!fs::exists(pred_path)) {
        std::cerr << "plot: missing input " << pred_path << "\n";
        return 2;
    }
    const io::TensorFile tf = io::TensorFile::load(pred_path);
    std::string fp;
    if (tf.has("fingerprint")) {
        const Tensor& t = tf.get("fingerprint");
        for (std::int64_t i = 0; i < t.numel(); ++i)
            fp.push_back(static_cast<char>(static_cast<int>(t[i])));
    }
    const std::string stem = fs::path(pred_path).stem().string();
    int written = 0;
    for (const auto& [name, nt] : tf.entries()) {
        if (name.rfind("pred.", 0) != 0) continue;
        const std::string cls = name.substr(5);
        const Tensor& pred = nt.tensor;
        if (!tf.has("gt." + cls)) continue;
        const Tensor& gt = tf.get("gt." + cls);
        const int h = pred.shape()[1], w = pred.shape()[2];
        Tensor pred0({h, w}), gt0({h, w});
        for (std::int64_t i = 0; i < pred0.numel(); ++i) {
            pred0[i] = pred[i];
            gt0[i] = gt[i];
        }
        plot::write_png(plot::bev_pair(gt0, pred0),
                        (root / (stem + "_" + cls + "_pair.png")).string(), fp);
        // f-channel composite of the binarized multi-step prediction
        Tensor bin = model::to_binary(pred, 0.5);
        plot::write_png(plot::multi_step(bin),
                        (root / (stem + "_" + cls + "_multistep.png")).string(), fp);
        written += 2;
    }
    if (written == 0) {
        std::cerr << "plot: no prediction arrays found in " << pred_path << "\n";
        return 2;
    }
    std::cout << "wrote " << written << " images to " << root.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal camera+lidar BEV segmentation and ego forecasting"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string ck_path, seg_ck_path, fc_ck_path, pred_path, split = "val";
    int sample_index = 0;
    bool train_forecaster_flag = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config_path, "run configuration file (JSON)");
        cmd->add_option("--seed", o.seed, "seed override");
        cmd->add_option("--out", o.out, "output directory override");
        cmd->add_flag("--force", o.force, "overwrite existing outputs");
        cmd->add_flag("--resume", o.resume, "resume from an existing checkpoint");
        cmd->add_flag("--json", o.json, "machine-readable output only");
        cmd->add_flag("--allow-mismatch", o.allow_mismatch,
                      "skip config fingerprint checks");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen);
    CLI::App* tr = app.add_subcommand("train", "train the segmentation model (or forecaster)");
    add_common(tr);
    tr->add_flag("--forecaster", train_forecaster_flag,
                 "train the trajectory head on a frozen segmentation checkpoint");
    tr->add_option("--checkpoint", seg_ck_path,
                   "segmentation checkpoint (forecaster training)");
    CLI::App* ab = app.add_subcommand("ablate", "train the six modality rows");
    add_common(ab);
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the val split");
    add_common(ev);
    ev->add_option("--checkpoint", ck_path, "checkpoint path");
    ev->add_option("--forecaster-checkpoint", fc_ck_path, "also report ADE/FDE");
    CLI::App* pr = app.add_subcommand("predict", "write predicted grids for one sample");
    add_common(pr);
    pr->add_option("--checkpoint", ck_path, "checkpoint path");
    pr->add_option("--sample", sample_index, "sample index");
    pr->add_option("--split", split, "dataset split (train|val)");
    CLI::App* fo = app.add_subcommand("forecast", "predict the ego trajectory for one sample");
    add_common(fo);
    fo->add_option("--checkpoint", seg_ck_path, "segmentation checkpoint");
    fo->add_option("--forecaster-checkpoint", fc_ck_path, "forecaster checkpoint");
    fo->add_option("--sample", sample_index, "sample index");
    fo->add_option("--split", split, "dataset split (train|val)");
    CLI::App* pl = app.add_subcommand("plot", "render grids/trajectories to PNG");
    add_common(pl);
    pl->add_option("--input", pred_path, "prediction file from `predict`")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (tr->parsed()) return cmd_train(o, train_forecaster_flag, seg_ck_path);
        if (ab->parsed()) return cmd_ablate(o);
        if (ev->parsed()) return cmd_eval(o, ck_path, fc_ck_path);
        if (pr->parsed()) return cmd_predict(o, ck_path, sample_index, split);
        if (fo->parsed()) return cmd_forecast(o, seg_ck_path, fc_ck_path, sample_index, split);
        if (pl->parsed()) return cmd_plot(o, pred_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
