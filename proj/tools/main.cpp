#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "protohead/checkpoint.hpp"
#include "protohead/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

using protohead::RunConfig;

std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const protohead::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const protohead::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const protohead::ArchiveError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const protohead::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const protohead::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

void print_percent(const char* label, double value) {
    std::printf("%-18s %.2f%%\n", label, value * 100.0);
}

int cmd_train(const std::string& config_path, const std::string& output_override) {
    RunConfig cfg = protohead::load_config_file(config_path);
    if (!output_override.empty()) cfg.output_dir = output_override;
    const std::filesystem::path dir = protohead::resolve_output_dir(cfg);
    const protohead::RunRecord rec = protohead::run_and_save(cfg, dir);

    const int tasks = rec.matrix.num_tasks();
    std::printf("trained %d task%s in %.1fs\n", tasks, tasks == 1 ? "" : "s", rec.wallclock_s);
    print_percent("average_accuracy", rec.average_acc);
    if (rec.forget_defined) {
        print_percent("forgetting", rec.forget);
    } else {
        std::printf("%-18s n/a (single task)\n", "forgetting");
    }
    std::printf("artifacts: %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_arg,
              const std::string& values_csv, int jobs, const std::string& output_override) {
    const auto axis = protohead::parse_axis(axis_arg);
    if (!axis) {
        std::cerr << "error: unknown sweep axis '" << axis_arg
                  << "' (expected proto_shape, stability, lsp_weight or init)\n";
        return kExitConfig;
    }
    const std::vector<std::string> values = split_values(values_csv);
    if (values.empty()) {
        std::cerr << "error: --values is empty\n";
        return kExitConfig;
    }
    RunConfig cfg = protohead::load_config_file(config_path);
    if (!output_override.empty()) cfg.output_dir = output_override;
    const std::filesystem::path dir = protohead::resolve_output_dir(cfg);

    const auto rows = protohead::run_sweep(cfg, *axis, values, dir, jobs);
    std::printf("%s sweep, %zu runs\n", protohead::axis_name(*axis), rows.size());
    std::printf("%-12s %10s %10s %8s %12s\n", "axis_value", "AA", "FM", "seed", "wallclock_s");
    for (const auto& row : rows) {
        std::printf("%-12s %9.2f%% %9.2f%% %8llu %12.1f\n", row.axis_value.c_str(),
                    row.average_acc * 100.0, row.forget * 100.0,
                    static_cast<unsigned long long>(row.seed), row.wallclock_s);
    }
    std::printf("artifacts: %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path) {
    const protohead::HyperHeadModel model = protohead::load_checkpoint(checkpoint_path);
    const RunConfig cfg = protohead::load_config_file(config_path);
    const std::vector<protohead::TaskDataset> tasks = protohead::build_tasks(cfg);
    if (tasks.empty()) {
        std::cerr << "error: config produced no tasks\n";
        return kExitConfig;
    }
    const protohead::ChannelStats stats = tasks.front().stats;

    const int known = model.prototypes().num_tasks();
    double total = 0.0;
    int evaluated = 0;
    for (const auto& task : tasks) {
        if (task.task_id > known) break;
        const int n = static_cast<int>(task.test.size());
        const int dim = task.shape.numel();
        std::vector<double> rows(static_cast<std::size_t>(n) * dim);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) {
            const auto px = protohead::normalize_pixels(task.test[i].pixels, task.shape, stats);
            std::copy(px.begin(), px.end(), rows.begin() + static_cast<std::size_t>(i) * dim);
            labels[i] = task.test[i].label;
        }
        const protohead::Tensor inputs =
            protohead::Tensor::from_data({n, dim}, std::move(rows), false);
        const double acc = protohead::evaluate(model, inputs, labels, task.task_id);
        std::printf("task %d  accuracy %.2f%%\n", task.task_id, acc * 100.0);
        total += acc;
        ++evaluated;
    }
    if (evaluated == 0) {
        std::cerr << "error: checkpoint has no tasks matching the config\n";
        return kExitConfig;
    }
    print_percent("average_accuracy", total / evaluated);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prototype-conditioned hypernetwork trainer"};
    app.set_version_flag("--version", protohead::version_string());
    app.require_subcommand(1);

    std::string config_path;
    std::string output_override;
    std::string axis_arg;
    std::string values_csv;
    std::string checkpoint_path;
    int jobs = 0;
    int trials = 3;
    bool inject_relu_fault = false;

    CLI::App* train = app.add_subcommand("train", "train a task sequence from a config file");
    train->add_option("config", config_path, "config file")->required();
    train->add_option("--output", output_override, "override output directory");

    CLI::App* sweep = app.add_subcommand("sweep", "run one training per axis value");
    sweep->add_option("config", config_path, "base config file")->required();
    sweep->add_option("--axis", axis_arg, "proto_shape | stability | lsp_weight | init")
        ->required();
    sweep->add_option("--values", values_csv, "comma-separated axis values")->required();
    sweep->add_option("--jobs", jobs, "parallel runs (0 = auto)");
    sweep->add_option("--output", output_override, "override output directory");

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every op and loss");
    gradcheck->add_option("--trials", trials, "random instances per case");
    gradcheck->add_flag("--inject-relu-fault", inject_relu_fault,
                        "corrupt the relu backward rule (self-test of the checker)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a config's test splits");
    eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("config", config_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (train->parsed()) return run_guarded([&] { return cmd_train(config_path, output_override); });
    if (sweep->parsed()) {
        return run_guarded(
            [&] { return cmd_sweep(config_path, axis_arg, values_csv, jobs, output_override); });
    }
    if (gradcheck->parsed()) {
        if (trials < 1) {
            std::cerr << "error: --trials must be positive\n";
            return kExitConfig;
        }
        return run_guarded(
            [&] { return protohead::gradcheck_command(std::cout, trials, inject_relu_fault); });
    }
    if (eval->parsed()) return run_guarded([&] { return cmd_eval(checkpoint_path, config_path); });
    return kExitConfig;
}
