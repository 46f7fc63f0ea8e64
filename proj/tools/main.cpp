// Command-line front end: synthetic data generation, training, refinement,
// evaluation, and the full desk-scale experiment.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "puncta/config.hpp"
#include "puncta/data.hpp"
#include "puncta/experiment.hpp"
#include "puncta/io.hpp"
#include "puncta/metrics.hpp"
#include "puncta/nn.hpp"
#include "puncta/rfprior.hpp"
#include "puncta/selfcheck.hpp"
#include "puncta/synth.hpp"
#include "puncta/texture.hpp"
#include "puncta/train.hpp"
#include "puncta/ttgpr.hpp"

namespace {

using namespace puncta;

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
};

RunConfig effective_config(const GlobalOpts& g) {
    RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

std::string index_name(const char* prefix, int i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06d.%s", prefix, i, ext);
    return buf;
}

Grid<float> load_input_patch(const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".mct1") return read_mct1_grid<float>(path);
    if (ext == ".pgm") return read_pgm_patch<float>(path);
    throw io_error("unsupported input format (want .mct1 or .pgm): " + path);
}

Params<float> load_params_preferring(const std::string& ckpt, const std::string& preferred,
                                     const std::string& fallback) {
    const auto entries = load_checkpoint(ckpt);
    for (const auto& e : entries)
        if (e.name.rfind(preferred + ".", 0) == 0)
            return params_from_checkpoint<float>(entries, preferred, preferred);
    return params_from_checkpoint<float>(entries, fallback, fallback);
}

int cmd_synth(const GlobalOpts& g, const std::string& backgrounds, const std::string& out_dir,
              int count) {
    if (out_dir.empty()) throw validation_error("synth: --out directory required");
    RunConfig cfg = effective_config(g);
    if (!backgrounds.empty()) cfg.data.backgrounds_dir = backgrounds;
    validate(cfg);
    std::filesystem::create_directories(out_dir);
    const BackgroundSource bg(cfg.data, cfg.synth, cfg.seed);
    const auto dir = std::filesystem::path(out_dir);
    std::string manifest = "index,puncta_count,seed_pixels\n";
    for (int i = 0; i < count; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        const Grid<double> xb = bg.get(idx);
        Rng rng(cfg.seed, make_stream(StreamId::synth, idx));
        const LabeledPatch lp = make_labeled_patch(xb, rng, cfg.synth);
        write_mct1((dir / index_name("xs", i, "mct1")).string(), grid_cast<float>(lp.xs));
        write_pgm_mask((dir / index_name("ys", i, "pgm")).string(), lp.ys);
        write_pgm_mask((dir / index_name("ss", i, "pgm")).string(), lp.ss);
        int seeds = 0;
        for (const auto b : lp.ss.v) seeds += b;
        manifest += std::to_string(i) + "," + std::to_string(lp.puncta.size()) + "," +
                    std::to_string(seeds) + "\n";
    }
    std::ofstream mf(dir / "manifest.csv", std::ios::binary);
    if (!mf) throw io_error("cannot write manifest.csv in " + out_dir);
    mf << manifest;
    std::cout << "wrote " << count << " labeled patches to " << out_dir << "\n";
    return 0;
}

int cmd_train_seg(const GlobalOpts& g, const std::string& data_dir, const std::string& out_ckpt,
                  int steps_override) {
    RunConfig cfg = effective_config(g);
    if (steps_override >= 0) cfg.seg.steps = steps_override;
    const auto data = load_dataset(data_dir);
    std::cerr << "training segmentor on " << data.size() << " pairs, " << cfg.seg.steps
              << " steps\n";
    const auto res = train_segmentor<float>(data, cfg.seg, cfg.seed);
    save_checkpoint<float>(out_ckpt, {{"segmentor", &res.params}});
    if (!res.loss_history.empty())
        std::cout << "final batch loss " << g17(res.loss_history.back()) << "\n";
    std::cout << "saved " << out_ckpt << "\n";
    return 0;
}

int cmd_train_rf(const GlobalOpts& g, const std::string& data_dir, const std::string& out_ckpt,
                 int steps_override) {
    RunConfig cfg = effective_config(g);
    if (steps_override >= 0) cfg.rf.steps = steps_override;
    const auto data = load_dataset(data_dir);
    std::cerr << "training velocity field on " << data.size() << " pairs, " << cfg.rf.steps
              << " steps\n";
    const auto res = train_rf<float>(data, cfg.rf, cfg.seed);
    save_checkpoint<float>(out_ckpt,
                           {{"velocity", &res.params}, {"velocity_ema", &res.ema}});
    if (!res.loss_history.empty())
        std::cout << "final batch loss " << g17(res.loss_history.back()) << "\n";
    std::cout << "saved " << out_ckpt << "\n";
    return 0;
}

int cmd_sample(const GlobalOpts& g, const std::string& ckpt, const std::string& seed_mask_path,
               const std::string& out_path, int steps) {
    RunConfig cfg = effective_config(g);
    const Params<float> phi = load_params_preferring(ckpt, "velocity_ema", "velocity");
    const MaskGrid seed_mask = read_pgm_mask(seed_mask_path);
    RFConfig rf = cfg.ttgpr.rf;
    if (steps >= 1) rf.euler_steps = steps;
    Rng rng(cfg.seed, make_stream(StreamId::misc, 0));
    Grid<float> z(seed_mask.h, seed_mask.w);
    for (auto& v : z.v) v = static_cast<float>(rng.normal());
    const Grid<float> x = rf_sample(phi, z, seed_mask, rf);
    write_mct1(out_path, x);
    std::cout << "saved " << out_path << "\n";
    return 0;
}

int cmd_refine(const GlobalOpts& g, const std::string& seg_ckpt, const std::string& rf_ckpt,
               const std::string& input_path, const std::string& out_prob,
               const std::string& out_mask, const std::string& trace_path) {
    RunConfig cfg = effective_config(g);
    const Params<float> theta = params_from_checkpoint<float>(load_checkpoint(seg_ckpt),
                                                              "segmentor", "segmentor");
    const Params<float> phi = load_params_preferring(rf_ckpt, "velocity_ema", "velocity");
    const Grid<float> x = load_input_patch(input_path);
    Rng rng(cfg.seed, make_stream(StreamId::refine, 0));
    const auto res = refine(theta, phi, x, cfg.ttgpr, rng);
    if (!out_prob.empty()) write_mct1(out_prob, res.prob);
    if (!out_mask.empty()) {
        MaskGrid mask(res.prob.h, res.prob.w);
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask.v[i] = res.prob.v[i] > cfg.eval.threshold ? 1 : 0;
        write_pgm_mask(out_mask, mask);
    }
    if (!trace_path.empty()) {
        std::ofstream ts(trace_path, std::ios::binary);
        if (!ts) throw io_error("cannot write trace: " + trace_path);
        ts << "iteration,t,seed_count,energy_before,energy_after,logit_delta_norm\n";
        for (std::size_t i = 0; i < res.trace.size(); ++i) {
            const auto& r = res.trace[i];
            ts << i << "," << g17(r.t) << "," << r.seed_count << "," << g17(r.energy_before)
               << "," << g17(r.energy_after) << "," << g17(r.logit_delta_norm) << "\n";
        }
    }
    std::cout << "refined " << input_path << " (" << cfg.ttgpr.iterations << " iterations)\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& pred_dir, const std::string& gt_dir,
             double threshold, const std::string& out_csv) {
    RunConfig cfg = effective_config(g);
    const MaskGrid* roi = nullptr;
    MaskGrid roi_storage;
    if (!cfg.eval.roi_path.empty()) {
        roi_storage = read_pgm_mask(cfg.eval.roi_path);
        roi = &roi_storage;
    }
    auto preds = list_files_sorted(pred_dir, {".mct1", ".pgm"});
    auto gts = list_files_sorted(gt_dir, {".pgm"});
    if (preds.empty()) throw io_error("no predictions in " + pred_dir);
    if (preds.size() != gts.size())
        throw validation_error("prediction/ground-truth count mismatch: " +
                               std::to_string(preds.size()) + " vs " + std::to_string(gts.size()));
    std::vector<CaseMetrics> cases;
    std::string csv = "case,dice,recall,fnr,tnr,balanced_accuracy,gmean,precision,f2,"
                      "degenerate_gt\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const Grid<double> prob = load_patch_file(preds[i]) /* pgm maps to [-1,1] */;
        Grid<double> p = prob;
        if (std::filesystem::path(preds[i]).extension() == ".pgm")
            for (auto& v : p.v) v = 0.5 * (v + 1.0); // back to [0,1]
        const MaskGrid gt = read_pgm_mask(gts[i]);
        const CaseMetrics m = evaluate_case(p, gt, threshold, roi);
        cases.push_back(m);
        csv += std::filesystem::path(preds[i]).filename().string();
        for (const double v : metric_values(m)) csv += "," + g17(v);
        csv += std::string(",") + (m.degenerate_gt ? "1" : "0") + "\n";
    }
    const CohortStats stats = evaluate_cohort(cases);
    const auto fields = summary_fields(stats);
    csv += "mean";
    for (const auto* f : fields) csv += "," + g17(f->mean);
    csv += ",\nstd";
    for (const auto* f : fields) csv += "," + g17(f->stddev);
    csv += ",\n";
    std::ofstream os(out_csv, std::ios::binary);
    if (!os) throw io_error("cannot write " + out_csv);
    os << csv;
    std::cout << "evaluated " << cases.size() << " cases -> " << out_csv << "\n";
    for (std::size_t i = 0; i < metric_names().size(); ++i)
        std::cout << "  " << metric_names()[i] << " " << g17(fields[i]->mean) << " +/- "
                  << g17(fields[i]->stddev) << " (n=" << fields[i]->count << ")\n";
    return 0;
}

int cmd_run(const GlobalOpts& g, const std::string& out_dir) {
    const RunConfig cfg = effective_config(g);
    const ExperimentReport rep = run_experiment(cfg, &std::cerr);
    write_experiment(out_dir, rep);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(rep.hash));
    std::cout << "report hash " << hex << "\n";
    auto show = [&](const char* name, const CohortStats& s) {
        std::cout << name << ": dice " << g17(s.dice.mean) << ", recall " << g17(s.recall.mean)
                  << ", fnr " << g17(s.fnr.mean) << ", gmean " << g17(s.gmean.mean) << "\n";
    };
    show("in-domain initializer", rep.in_init.stats);
    show("in-domain refined    ", rep.in_ttgpr.stats);
    show("shifted   initializer", rep.sh_init.stats);
    show("shifted   refined    ", rep.sh_ttgpr.stats);
    std::cout << "wrote report.csv, cases.csv, hash.txt, checkpoint.mcw1 to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Label-exact puncta synthesis, generative refinement, and evaluation"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Config file (key = value with [section] headers)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides config)");
    app.add_option("--out", g.out, "Default output path for subcommands that take one");
    app.add_option("--threads", g.threads, "Worker threads (currently single-threaded)")
        ->check(CLI::PositiveNumber);

    auto* synth = app.add_subcommand("synth", "Generate labeled synthetic patches");
    std::string synth_backgrounds, synth_out;
    int synth_count = 100;
    synth->add_option("--backgrounds", synth_backgrounds, "Background patch directory (.mct1/.pgm)");
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--count", synth_count, "Number of patches")->check(CLI::PositiveNumber);

    auto* tseg = app.add_subcommand("train-seg", "Train the segmentor on a synth directory");
    std::string tseg_data, tseg_out = "segmentor.mcw1";
    int tseg_steps = -1;
    tseg->add_option("--data", tseg_data, "Directory from `synth`")->required();
    tseg->add_option("--out", tseg_out, "Checkpoint path");
    tseg->add_option("--steps", tseg_steps, "Override training steps");

    auto* trf = app.add_subcommand("train-rf", "Train the seed-conditioned velocity field");
    std::string trf_data, trf_out = "velocity.mcw1";
    int trf_steps = -1;
    trf->add_option("--data", trf_data, "Directory from `synth`")->required();
    trf->add_option("--out", trf_out, "Checkpoint path");
    trf->add_option("--steps", trf_steps, "Override training steps");

    auto* sample = app.add_subcommand("sample", "Draw one conditional sample from the prior");
    std::string sample_ckpt, sample_seed_mask, sample_out = "sample.mct1";
    int sample_steps = -1;
    sample->add_option("--ckpt", sample_ckpt, "Velocity checkpoint")->required();
    sample->add_option("--seed-mask", sample_seed_mask, "Seed mask PGM")->required();
    sample->add_option("--out", sample_out, "Output .mct1");
    sample->add_option("--steps", sample_steps, "Euler steps");

    auto* refine_cmd = app.add_subcommand("refine", "Refine one patch with the generative prior");
    std::string r_seg, r_rf, r_input, r_out_prob, r_out_mask, r_trace;
    refine_cmd->add_option("--seg", r_seg, "Segmentor checkpoint")->required();
    refine_cmd->add_option("--rf", r_rf, "Velocity checkpoint")->required();
    refine_cmd->add_option("--input", r_input, "Input patch (.mct1 or .pgm)")->required();
    refine_cmd->add_option("--out-prob", r_out_prob, "Refined probabilities (.mct1)");
    refine_cmd->add_option("--out-mask", r_out_mask, "Binarized mask (.pgm)");
    refine_cmd->add_option("--trace", r_trace, "Per-iteration trace CSV");

    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
    std::string e_pred, e_gt, e_out = "report.csv";
    double e_threshold = 0.5;
    eval_cmd->add_option("--pred-dir", e_pred, "Predictions (.mct1 probabilities or .pgm masks)")
        ->required();
    eval_cmd->add_option("--gt-dir", e_gt, "Ground-truth masks (.pgm)")->required();
    eval_cmd->add_option("--threshold", e_threshold, "Binarization threshold");
    eval_cmd->add_option("--out", e_out, "Output CSV");

    auto* run = app.add_subcommand("run", "Full experiment: synth, train, refine, evaluate");
    std::string run_out = "run_out";
    run->add_option("--out", run_out, "Output directory");

    auto* selfcheck = app.add_subcommand("selfcheck", "Gradient and oracle verification suite");

    try {
        app.parse(argc, argv);
        if (seed_opt->count() > 0) g.seed = seed_value;
        if (synth->parsed())
            return cmd_synth(g, synth_backgrounds, synth_out.empty() ? g.out : synth_out,
                             synth_count);
        if (tseg->parsed()) return cmd_train_seg(g, tseg_data, tseg_out, tseg_steps);
        if (trf->parsed()) return cmd_train_rf(g, trf_data, trf_out, trf_steps);
        if (sample->parsed()) return cmd_sample(g, sample_ckpt, sample_seed_mask, sample_out,
                                                sample_steps);
        if (refine_cmd->parsed())
            return cmd_refine(g, r_seg, r_rf, r_input, r_out_prob, r_out_mask, r_trace);
        if (eval_cmd->parsed()) return cmd_eval(g, e_pred, e_gt, e_threshold, e_out);
        if (run->parsed()) return cmd_run(g, run_out.empty() ? g.out : run_out);
        if (selfcheck->parsed()) return puncta::run_selfcheck(std::cout) ? 0 : 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const puncta::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const puncta::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
