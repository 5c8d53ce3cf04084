// Command-line front end: scene-set generation, training, evaluation,
// alignment-map export, and the ablation sweep. Exit codes: 0 ok, 2 bad
// config/usage, 3 bad data, 4 numeric failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mafea/trainer.hpp"

namespace fs = std::filesystem;
using namespace mafea;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << text;
}

int cmd_gencfg(const std::string& profile, const std::string& out) {
    std::string text = TrainConfig::profile(profile).to_text();
    if (out.empty()) std::cout << text;
    else write_file(out, text);
    return 0;
}

int cmd_makedata(const std::string& spec_path, const std::string& out, Index n,
                 std::uint64_t seed) {
    SceneSpec spec = spec_path.empty() ? SceneSpec::default_two_class()
                                       : SceneSpec::from_json(read_file(spec_path));
    make_dataset(spec, out, n, seed);
    std::cout << "wrote " << n << " samples to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& data_dir, const std::string& out) {
    TrainConfig cfg = TrainConfig::load(config);
    Dataset data = load_dataset(data_dir);
    TrainResult res = train(cfg, data);

    fs::create_directories(out);
    write_file((fs::path(out) / "metrics.csv").string(), metrics_to_csv(res.epochs));
    save_checkpoint((fs::path(out) / "checkpoint.mafea").string(), res.model, cfg);

    const EpochStats& last = res.epochs.back();
    std::printf("trained %lld epochs, final loss %.6f\n", static_cast<long long>(cfg.epochs),
                last.loss);
    std::cout << "wrote " << out << "/checkpoint.mafea and " << out << "/metrics.csv\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, bool regions) {
    Checkpoint ck = load_checkpoint(ckpt);
    Dataset data = load_dataset(data_dir);
    EvalReport rep = evaluate(ck.model, data.eval, ck.cfg.model.shots, regions);
    std::cout << rep.to_json() << "\n";
    return 0;
}

int cmd_asmap(const std::string& ckpt, const std::string& sample_dir, const std::string& out) {
    Checkpoint ck = load_checkpoint(ckpt);
    CountingSample sample = load_sample(sample_dir);
    export_asmap(ck.model, sample, out);
    std::cout << "wrote " << out << "_{as,exmass}.{csv,pgm}\n";
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& data_dir, const std::string& out) {
    TrainConfig cfg = TrainConfig::load(config);
    Dataset data = load_dataset(data_dir);
    std::string csv = run_ablation_suite(cfg, data);
    write_file(out, csv);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mafea: few-shot object counting on generated scenes"};
    app.require_subcommand(1);

    std::string profile = "desk", cfg_path, data_dir, out_path, ckpt, sample_dir, spec_path;
    Index n = 8;
    std::uint64_t seed = 0;
    bool regions = false;

    CLI::App* gencfg = app.add_subcommand("gencfg", "print or write a config template");
    gencfg->add_option("--profile", profile, "desk | minimal | full");
    gencfg->add_option("--out", out_path, "write here instead of stdout");

    CLI::App* makedata = app.add_subcommand("makedata", "generate a scene dataset");
    makedata->add_option("--spec", spec_path, "scene spec JSON (omit for the stock two-class set)");
    makedata->add_option("--out", out_path, "output directory")->required();
    makedata->add_option("--n", n, "number of samples");
    makedata->add_option("--seed", seed, "generator seed");

    CLI::App* train_c = app.add_subcommand("train", "train a model");
    train_c->add_option("--config", cfg_path, "config file")->required();
    train_c->add_option("--data", data_dir, "dataset directory")->required();
    train_c->add_option("--out", out_path, "output directory")->required();

    CLI::App* eval_c = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_c->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval_c->add_option("--data", data_dir, "dataset directory")->required();
    eval_c->add_flag("--regions", regions, "add target/non-target breakdown");

    CLI::App* asmap = app.add_subcommand("asmap", "export alignment-score maps for one sample");
    asmap->add_option("--ckpt", ckpt, "checkpoint file")->required();
    asmap->add_option("--sample", sample_dir, "sample directory")->required();
    asmap->add_option("--out", out_path, "output path prefix")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "train and score all four switch variants");
    ablate->add_option("--config", cfg_path, "config file")->required();
    ablate->add_option("--data", data_dir, "dataset directory")->required();
    ablate->add_option("--out", out_path, "CSV output path")->required();

    try {
        app.parse(argc, argv);
        if (gencfg->parsed()) return cmd_gencfg(profile, out_path);
        if (makedata->parsed()) return cmd_makedata(spec_path, out_path, n, seed);
        if (train_c->parsed()) return cmd_train(cfg_path, data_dir, out_path);
        if (eval_c->parsed()) return cmd_eval(ckpt, data_dir, regions);
        if (asmap->parsed()) return cmd_asmap(ckpt, sample_dir, out_path);
        if (ablate->parsed()) return cmd_ablate(cfg_path, data_dir, out_path);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    }
}
