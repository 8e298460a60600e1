// Command-line front end: dataset generation, training, evaluation, ablation
// suites and ablation-report aggregation.
//
// Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sspe/ablation.hpp"
#include "sspe/checkpoint.hpp"
#include "sspe/config.hpp"
#include "sspe/dataset.hpp"
#include "sspe/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

sspe::ExperimentConfig load_config(const std::string& config_path,
                                   const std::vector<std::string>& overrides) {
    json j;
    {
        sspe::ExperimentConfig defaults;
        to_json(j, defaults);
    }
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::invalid_argument("cannot open config " + config_path);
        json user;
        in >> user;
        for (auto it = user.begin(); it != user.end(); ++it) j[it.key()] = it.value();
    }
    for (const std::string& o : overrides) sspe::apply_override(j, o);
    sspe::ExperimentConfig cfg = j.get<sspe::ExperimentConfig>();
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<sspe::LoadedSample> load_dataset(const sspe::ExperimentConfig& cfg) {
    if (cfg.dataset_dir.empty())
        throw std::invalid_argument("config: dataset_dir must point at a generated dataset");
    const sspe::DatasetManifest manifest = sspe::read_manifest(cfg.dataset_dir);
    return sspe::load_samples(manifest, cfg.dataset_dir);
}

int cmd_gen_data(const sspe::ExperimentConfig& cfg, const std::string& out_dir) {
    sspe::SyntheticConfig synth = cfg.synthetic;
    const sspe::DatasetManifest manifest = sspe::generate_synthetic(synth, out_dir);
    std::cout << "generated " << manifest.entries.size() << " images under " << out_dir << "\n";
    return 0;
}

int cmd_train(const sspe::ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto samples = load_dataset(cfg);

    const std::string seed_tag = "seed" + std::to_string(cfg.seed);
    std::ofstream log(fs::path(out_dir) / ("train_log_" + seed_tag + ".jsonl"), std::ios::binary);
    const sspe::TrainResult tr = sspe::train(cfg, samples, &log);

    json meta;
    to_json(meta, cfg);
    json wrapped{{"config", meta}};
    sspe::save_checkpoint((fs::path(out_dir) / ("model_" + seed_tag + ".ckpt")).string(), wrapped,
                          tr.best_state);

    json report;
    to_json(report, tr.report);
    write_text(fs::path(out_dir) / ("report_" + seed_tag + ".json"), report.dump(2) + "\n");
    std::cout << "test accuracy " << tr.report.accuracy << ", f1 " << tr.report.f1
              << ", best epoch " << tr.report.best_epoch << "\n";
    return 0;
}

int cmd_eval(const sspe::ExperimentConfig& cli_cfg, const std::string& checkpoint_path,
             const std::string& out_dir) {
    fs::create_directories(out_dir);
    const sspe::LoadedCheckpoint ck = sspe::load_checkpoint(checkpoint_path);
    sspe::ExperimentConfig cfg = ck.meta.at("config").get<sspe::ExperimentConfig>();
    // evaluation-time knobs come from the command line
    cfg.dataset_dir = cli_cfg.dataset_dir.empty() ? cfg.dataset_dir : cli_cfg.dataset_dir;
    cfg.eval_split = cli_cfg.eval_split;
    const auto samples = load_dataset(cfg);
    const sspe::MetricsReport r =
        sspe::evaluate(ck.state, cfg, samples, sspe::split_from_string(cfg.eval_split));
    json report;
    to_json(report, r);
    write_text(fs::path(out_dir) / ("eval_report_seed" + std::to_string(cfg.seed) + ".json"),
               report.dump(2) + "\n");
    std::cout << cfg.eval_split << " accuracy " << r.accuracy << ", f1 " << r.f1 << "\n";
    return 0;
}

int cmd_ablate(const sspe::ExperimentConfig& cfg, const std::string& suite,
               const std::string& out_dir, const std::vector<std::uint64_t>& seeds) {
    fs::create_directories(out_dir);
    const auto samples = load_dataset(cfg);
    const sspe::AblationResult result = sspe::run_ablation(suite, cfg, samples, seeds);
    const fs::path csv_path = fs::path(out_dir) / ("ablation_" + suite + ".csv");
    write_text(csv_path, sspe::ablation_to_csv(result));
    if (!result.curves_csv.empty())
        write_text(fs::path(out_dir) / ("ablation_" + suite + "_curves.csv"), result.curves_csv);
    std::cout << "wrote " << csv_path.string() << " (" << result.rows.size() << " rows)\n";
    return 0;
}

int cmd_report(const std::string& in_csv, const std::string& out_dir) {
    std::ifstream in(in_csv);
    if (!in) throw std::invalid_argument("cannot open " + in_csv);
    const auto rows = sspe::ablation_rows_from_csv(in);
    const std::string summary = sspe::summarize_ablation_csv(rows);
    fs::create_directories(out_dir);
    const fs::path out_path = fs::path(out_dir) / ("summary_" + fs::path(in_csv).stem().string() + ".csv");
    write_text(out_path, summary);
    std::cout << summary;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy ViT toolkit: selective shuffled position embedding, key-patch "
                 "exchange and hybrid loss"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", suite, checkpoint_path, in_csv;
    std::vector<std::string> overrides;
    std::vector<std::uint64_t> seeds;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON experiment config");
        sub->add_option("--set", overrides, "override config keys, key=value")->take_all();
        sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen);
    CLI::App* train_cmd = app.add_subcommand("train", "train one configuration");
    add_common(train_cmd);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run an ablation suite");
    add_common(ablate_cmd);
    ablate_cmd
        ->add_option("--suite", suite,
                     "pe-compare | key-select | mask-select | hyper-grid | n-sweep | pe-dropout")
        ->required();
    ablate_cmd->add_option("--seeds", seeds, "seeds for the suite (default 1..5)");
    CLI::App* report_cmd = app.add_subcommand("report", "aggregate an ablation CSV");
    report_cmd->add_option("--in", in_csv, "ablation CSV produced by ablate")->required();
    report_cmd->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    sspe::ExperimentConfig cfg;
    try {
        cfg = load_config(config_path, overrides);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(cfg, out_dir);
        if (train_cmd->parsed()) return cmd_train(cfg, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint_path, out_dir);
        if (ablate_cmd->parsed())
            return cmd_ablate(cfg, suite, out_dir,
                              seeds.empty() ? sspe::default_suite_seeds() : seeds);
        if (report_cmd->parsed()) return cmd_report(in_csv, out_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
