#include "protohead/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "protohead/checkpoint.hpp"
#include "protohead/grad_check.hpp"
#include "protohead/ops.hpp"

namespace protohead {

namespace fs = std::filesystem;
using nlohmann::json;

const char* version_string() {
    return "protohead 1.0.0 (checkpoint v1)";
}

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
    fs::path dir(cfg.output_dir);
    if (dir.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
            dir = fs::path(root) / dir;
        }
    }
    return dir;
}

std::vector<TaskDataset> build_tasks(const RunConfig& cfg) {
    if (cfg.dataset.kind == "archive") {
        const SourceDataset src = load_image_archive(cfg.dataset.archive_manifest);
        SplitSpec spec;
        spec.num_tasks = cfg.dataset.num_tasks;
        spec.classes_per_task = cfg.dataset.classes_per_task;
        spec.shuffle_seed = cfg.dataset.shuffle_seed;
        return split_dataset(src, spec);
    }
    SyntheticSpec spec;
    spec.num_tasks = cfg.dataset.num_tasks;
    spec.classes_per_task = cfg.dataset.classes_per_task;
    spec.train_per_class = cfg.dataset.train_per_class;
    spec.test_per_class = cfg.dataset.test_per_class;
    spec.shape = {cfg.dataset.image_channels, cfg.dataset.image_height, cfg.dataset.image_width};
    spec.noise = cfg.dataset.noise;
    spec.seed = cfg.seed;
    return make_synthetic_tasks(spec);
}

RunOutput execute_run(const RunConfig& cfg, StepObserver observer) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<TaskDataset> tasks = build_tasks(cfg);

    SequenceTrainer trainer(cfg, tasks);
    RunRecord record;
    record.config_text = serialize_config(cfg);
    trainer.set_epoch_sink([&record](const EpochEvent& ev) { record.epochs.push_back(ev); });
    if (observer) trainer.set_step_observer(std::move(observer));

    record.matrix = trainer.run();
    record.average_acc = average_accuracy(record.matrix);
    if (record.matrix.num_tasks() >= 2) {
        record.forget = forgetting(record.matrix);
        record.forget_defined = true;
    } else {
        record.forget = 0.0;
        record.forget_defined = false;
    }
    record.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    return {std::move(record), trainer.model().clone(), std::move(tasks)};
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("io: cannot write " + path.string());
    out << text;
    if (!out) throw IoError("io: write failed for " + path.string());
}

}  // namespace

void write_run_artifacts(const RunOutput& out, const std::filesystem::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("io: cannot create output dir " + dir.string() +
                      (ec ? ": " + ec.message() : ""));
    }

    const RunRecord& r = out.record;
    json j;
    j["version"] = version_string();
    j["config"] = r.config_text;
    json rows = json::array();
    for (int l = 1; l <= r.matrix.num_tasks(); ++l) rows.push_back(r.matrix.row(l));
    j["matrix"] = rows;
    j["average_accuracy"] = r.average_acc;
    j["forgetting"] = r.forget;
    j["forgetting_defined"] = r.forget_defined;
    j["average_accuracy_percent"] = 100.0 * r.average_acc;
    j["forgetting_percent"] = 100.0 * r.forget;
    j["wallclock_s"] = r.wallclock_s;
    json epochs = json::array();
    for (const EpochEvent& ev : r.epochs) {
        epochs.push_back({{"task", ev.task},
                          {"epoch", ev.epoch},
                          {"hard", ev.hard},
                          {"soft_main", ev.soft_main},
                          {"soft_proto", ev.soft_proto},
                          {"total", ev.total}});
    }
    j["epochs"] = epochs;
    write_text(dir / "results.json", j.dump(2) + "\n");

    std::ostringstream matrix_csv;
    for (int l = 1; l <= r.matrix.num_tasks(); ++l) {
        const auto row = r.matrix.row(l);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) matrix_csv << ",";
            matrix_csv << fmt17(row[i]);
        }
        matrix_csv << "\n";
    }
    write_text(dir / "matrix.csv", matrix_csv.str());

    write_split_csv(out.tasks, (dir / "splits.csv").string());
    save_checkpoint(out.model, (dir / "checkpoint.bin").string());
}

RunRecord run_and_save(const RunConfig& cfg, const std::filesystem::path& dir) {
    RunOutput out = execute_run(cfg);
    write_run_artifacts(out, dir);
    return out.record;
}

AccuracyMatrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("io: cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    AccuracyMatrix m(static_cast<int>(rows.size()));
    for (std::size_t l = 0; l < rows.size(); ++l) {
        if (rows[l].size() != l + 1) {
            throw IoError("io: " + path.string() + " row " + std::to_string(l + 1) + " has " +
                          std::to_string(rows[l].size()) + " cells, expected " +
                          std::to_string(l + 1));
        }
        for (std::size_t j = 0; j < rows[l].size(); ++j) {
            m.set(static_cast<int>(l) + 1, static_cast<int>(j) + 1, rows[l][j]);
        }
    }
    return m;
}

ResultsSummary read_results_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("io: cannot open " + path.string());
    json j;
    try {
        in >> j;
        ResultsSummary s;
        s.average_acc = j.at("average_accuracy").get<double>();
        s.forget = j.at("forgetting").get<double>();
        s.forget_defined = j.at("forgetting_defined").get<bool>();
        return s;
    } catch (const json::exception& e) {
        throw IoError("io: malformed results in " + path.string() + ": " + e.what());
    }
}

namespace {

std::string sanitize(const std::string& value) {
    std::string out;
    for (char c : value) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
    }
    return out;
}

}  // namespace

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                const std::vector<std::string>& values,
                                const std::filesystem::path& out_dir, int jobs) {
    if (values.empty()) throw ConfigError("sweep: no values given");

    struct Slot {
        RunConfig cfg;
        fs::path dir;
        SweepRow row;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        Slot& s = slots[i];
        s.cfg = apply_axis(base, axis, values[i]);
        s.cfg.seed = base.seed + i;  // derived seed per sweep point
        s.dir = out_dir / ("run_" + std::to_string(i) + "_" + sanitize(values[i]));
        s.row.axis_value = values[i];
        s.row.seed = s.cfg.seed;
        s.row.run_dir = s.dir;
    }

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int workers = jobs > 0 ? jobs : static_cast<int>(std::min<std::size_t>(hw, slots.size()));

    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= slots.size()) return;
            Slot& s = slots[i];
            try {
                const RunRecord rec = run_and_save(s.cfg, s.dir);
                s.row.average_acc = rec.average_acc;
                s.row.forget = rec.forget;
                s.row.wallclock_s = rec.wallclock_s;
            } catch (...) {
                s.error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(workers, static_cast<int>(slots.size())); ++t) {
        pool.emplace_back(worker);
    }
    for (std::thread& t : pool) t.join();

    for (Slot& s : slots) {
        if (s.error) std::rethrow_exception(s.error);
    }

    std::vector<SweepRow> rows;
    rows.reserve(slots.size());
    for (Slot& s : slots) rows.push_back(std::move(s.row));
    write_sweep_csv(rows, out_dir / "sweep.csv");
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ostringstream out;
    out << "axis_value,AA_percent,FM_percent,seed,wallclock_s\n";
    for (const SweepRow& r : rows) {
        out << r.axis_value << "," << fmt2(100.0 * r.average_acc) << ","
            << fmt2(100.0 * r.forget) << "," << r.seed << "," << fmt2(r.wallclock_s) << "\n";
    }
    write_text(path, out.str());
}

int gradcheck_command(std::ostream& out, int trials, bool inject_relu_fault) {
    const bool prior = detail::corrupt_relu_backward;
    detail::corrupt_relu_backward = inject_relu_fault;
    const bool ok = run_gradcheck_report(out, trials, 0xC0FFEE);
    detail::corrupt_relu_backward = prior;
    return ok ? 0 : 5;
}

}  // namespace protohead
