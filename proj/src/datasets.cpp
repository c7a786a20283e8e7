#include "protohead/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace protohead {

namespace fs = std::filesystem;

ChannelStats compute_channel_stats(const std::vector<Sample>& samples, const ImageShape& shape) {
    if (samples.empty()) throw ValueError("channel stats: empty sample list");
    const int plane = shape.height * shape.width;
    ChannelStats stats;
    stats.mean.assign(shape.channels, 0.0);
    stats.stddev.assign(shape.channels, 0.0);
    const double count = static_cast<double>(samples.size()) * plane;
    for (const Sample& s : samples) {
        for (int c = 0; c < shape.channels; ++c) {
            const double* p = &s.pixels[static_cast<std::size_t>(c) * plane];
            for (int i = 0; i < plane; ++i) stats.mean[c] += p[i];
        }
    }
    for (int c = 0; c < shape.channels; ++c) stats.mean[c] /= count;
    for (const Sample& s : samples) {
        for (int c = 0; c < shape.channels; ++c) {
            const double* p = &s.pixels[static_cast<std::size_t>(c) * plane];
            for (int i = 0; i < plane; ++i) {
                const double d = p[i] - stats.mean[c];
                stats.stddev[c] += d * d;
            }
        }
    }
    for (int c = 0; c < shape.channels; ++c) {
        stats.stddev[c] = std::max(std::sqrt(stats.stddev[c] / count), kStdClamp);
    }
    return stats;
}

std::vector<double> normalize_pixels(const std::vector<double>& pixels, const ImageShape& shape,
                                     const ChannelStats& stats) {
    if (static_cast<int>(pixels.size()) != shape.numel()) {
        throw ShapeError("normalize: pixel count " + std::to_string(pixels.size()) +
                         " does not match shape");
    }
    const int plane = shape.height * shape.width;
    std::vector<double> out(pixels.size());
    for (int c = 0; c < shape.channels; ++c) {
        const double m = stats.mean[c], s = stats.stddev[c];
        for (int i = 0; i < plane; ++i) {
            const std::size_t k = static_cast<std::size_t>(c) * plane + i;
            out[k] = (pixels[k] - m) / s;
        }
    }
    return out;
}

namespace {

TaskDataset build_task(int task_id, std::vector<int> class_ids, const ImageShape& shape,
                       std::vector<Sample> train, std::vector<Sample> test) {
    TaskDataset task;
    task.task_id = task_id;
    task.class_ids = std::move(class_ids);
    task.shape = shape;
    task.train = std::move(train);
    task.test = std::move(test);
    task.stats = compute_channel_stats(task.train, shape);
    return task;
}

}  // namespace

std::vector<TaskDataset> split_dataset(const SourceDataset& source, const SplitSpec& spec) {
    if (spec.num_tasks < 1 || spec.classes_per_task < 2) {
        throw ValueError("split: need num_tasks >= 1 and classes_per_task >= 2");
    }
    const int total = static_cast<int>(source.class_names.size());
    if (total != spec.num_tasks * spec.classes_per_task) {
        throw ValueError("split: " + std::to_string(total) + " classes cannot form " +
                         std::to_string(spec.num_tasks) + " tasks of " +
                         std::to_string(spec.classes_per_task));
    }

    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(spec.shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);

    // global class id -> (task index, local label)
    std::vector<std::pair<int, int>> where(total);
    std::vector<std::vector<int>> chunks(spec.num_tasks);
    for (int k = 0; k < spec.num_tasks; ++k) {
        chunks[k].assign(order.begin() + k * spec.classes_per_task,
                         order.begin() + (k + 1) * spec.classes_per_task);
        for (int c = 0; c < spec.classes_per_task; ++c) where[chunks[k][c]] = {k, c};
    }

    std::vector<std::vector<Sample>> train(spec.num_tasks), test(spec.num_tasks);
    auto route = [&](const std::vector<Sample>& src, std::vector<std::vector<Sample>>& dst) {
        for (const Sample& s : src) {
            if (s.label < 0 || s.label >= total) {
                throw ValueError("split: sample label " + std::to_string(s.label) +
                                 " outside [0, " + std::to_string(total) + ")");
            }
            const auto [k, local] = where[s.label];
            dst[k].push_back({local, s.pixels});
        }
    };
    route(source.train, train);
    route(source.test, test);

    std::vector<TaskDataset> tasks;
    tasks.reserve(spec.num_tasks);
    for (int k = 0; k < spec.num_tasks; ++k) {
        tasks.push_back(build_task(k + 1, chunks[k], source.shape, std::move(train[k]),
                                   std::move(test[k])));
    }
    return tasks;
}

std::vector<TaskDataset> make_synthetic_tasks(const SyntheticSpec& spec) {
    if (spec.num_tasks < 1 || spec.classes_per_task < 2) {
        throw ValueError("synthetic: need num_tasks >= 1 and classes_per_task >= 2");
    }
    if (spec.train_per_class < 1 || spec.test_per_class < 1) {
        throw ValueError("synthetic: per-class sample counts must be positive");
    }
    if (spec.noise < 0.0) throw ValueError("synthetic: negative noise");

    const int dim = spec.shape.numel();
    const int total_classes = spec.num_tasks * spec.classes_per_task;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> templates(total_classes);
    for (auto& t : templates) {
        t.resize(dim);
        for (double& v : t) v = uni(rng);
    }

    auto draw = [&](int global_class, int local) {
        Sample s;
        s.label = local;
        s.pixels.resize(dim);
        const auto& t = templates[global_class];
        for (int i = 0; i < dim; ++i) s.pixels[i] = t[i] + spec.noise * gauss(rng);
        return s;
    };

    std::vector<TaskDataset> tasks;
    tasks.reserve(spec.num_tasks);
    for (int k = 0; k < spec.num_tasks; ++k) {
        std::vector<int> ids(spec.classes_per_task);
        std::vector<Sample> train, test;
        for (int c = 0; c < spec.classes_per_task; ++c) {
            const int global = k * spec.classes_per_task + c;
            ids[c] = global;
            for (int i = 0; i < spec.train_per_class; ++i) train.push_back(draw(global, c));
            for (int i = 0; i < spec.test_per_class; ++i) test.push_back(draw(global, c));
        }
        tasks.push_back(build_task(k + 1, std::move(ids), spec.shape, std::move(train),
                                   std::move(test)));
    }
    return tasks;
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int parse_int_field(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ArchiveError("manifest: bad integer for '" + key + "': '" + value + "'");
    }
}

struct BinRef {
    std::string file;
    int count = 0;
};

BinRef parse_bin_ref(const std::string& key, const std::string& value) {
    const auto colon = value.rfind(':');
    if (colon == std::string::npos || colon == 0) {
        throw ArchiveError("manifest: '" + key + "' must be <file>:<count>, got '" + value + "'");
    }
    return {value.substr(0, colon), parse_int_field(key, value.substr(colon + 1))};
}

std::vector<Sample> read_records(const fs::path& path, int count, const ImageShape& shape,
                                 int num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArchiveError("archive: cannot open " + path.string());
    const std::size_t record_size = 1 + static_cast<std::size_t>(shape.numel());

    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    const std::uint64_t expect = static_cast<std::uint64_t>(count) * record_size;
    if (file_size != expect) {
        throw ArchiveError("archive: " + path.string() + " holds " + std::to_string(file_size) +
                           " bytes, expected " + std::to_string(expect) + " (" +
                           std::to_string(count) + " records of " + std::to_string(record_size) +
                           " bytes); mismatch from byte offset " +
                           std::to_string(std::min(file_size, expect)));
    }

    std::vector<Sample> out;
    out.reserve(count);
    std::vector<unsigned char> buf(record_size);
    for (int r = 0; r < count; ++r) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(record_size));
        if (!in) {
            throw ArchiveError("archive: truncated record " + std::to_string(r) +
                               " at byte offset " + std::to_string(r * record_size));
        }
        Sample s;
        s.label = buf[0];
        if (s.label >= num_classes) {
            throw ArchiveError("archive: label " + std::to_string(s.label) + " >= " +
                               std::to_string(num_classes) + " classes at byte offset " +
                               std::to_string(r * record_size));
        }
        s.pixels.resize(shape.numel());
        for (int i = 0; i < shape.numel(); ++i) s.pixels[i] = buf[1 + i] / 255.0;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

SourceDataset load_image_archive(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ArchiveError("manifest: cannot open " + manifest_path);

    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ArchiveError("manifest: line " + std::to_string(line_no) +
                               " is not key=value: '" + line + "'");
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"channels", "height", "width", "classes", "train", "test"}) {
        if (!kv.count(key)) throw ArchiveError("manifest: missing key '" + std::string(key) + "'");
    }

    SourceDataset src;
    src.shape.channels = parse_int_field("channels", kv["channels"]);
    src.shape.height = parse_int_field("height", kv["height"]);
    src.shape.width = parse_int_field("width", kv["width"]);
    if (src.shape.channels < 1 || src.shape.height < 1 || src.shape.width < 1) {
        throw ArchiveError("manifest: non-positive image dimensions");
    }

    std::stringstream names(kv["classes"]);
    std::string name;
    while (std::getline(names, name, ',')) {
        name = trim(name);
        if (name.empty()) throw ArchiveError("manifest: empty class name in 'classes'");
        src.class_names.push_back(name);
    }
    if (src.class_names.empty()) throw ArchiveError("manifest: no classes declared");

    const fs::path base = fs::path(manifest_path).parent_path();
    const BinRef train_ref = parse_bin_ref("train", kv["train"]);
    const BinRef test_ref = parse_bin_ref("test", kv["test"]);
    const int n_classes = static_cast<int>(src.class_names.size());
    src.train = read_records(base / train_ref.file, train_ref.count, src.shape, n_classes);
    src.test = read_records(base / test_ref.file, test_ref.count, src.shape, n_classes);
    return src;
}

namespace {

void write_records(const fs::path& path, const std::vector<Sample>& samples,
                   const ImageShape& shape) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArchiveError("archive: cannot write " + path.string());
    std::vector<unsigned char> buf(1 + static_cast<std::size_t>(shape.numel()));
    for (const Sample& s : samples) {
        if (s.label < 0 || s.label > 255) {
            throw ValueError("archive: label " + std::to_string(s.label) +
                             " does not fit in one byte");
        }
        buf[0] = static_cast<unsigned char>(s.label);
        for (int i = 0; i < shape.numel(); ++i) {
            const long q = std::lround(s.pixels[i] * 255.0);
            buf[1 + i] = static_cast<unsigned char>(std::clamp(q, 0L, 255L));
        }
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw ArchiveError("archive: write failed for " + path.string());
}

}  // namespace

void write_image_archive(const SourceDataset& source, const std::string& dir,
                         const std::string& name) {
    const fs::path base(dir);
    fs::create_directories(base);
    write_records(base / (name + "_train.bin"), source.train, source.shape);
    write_records(base / (name + "_test.bin"), source.test, source.shape);

    std::ofstream man(base / (name + ".manifest"));
    if (!man) throw ArchiveError("archive: cannot write manifest in " + dir);
    man << "channels=" << source.shape.channels << "\n";
    man << "height=" << source.shape.height << "\n";
    man << "width=" << source.shape.width << "\n";
    man << "classes=";
    for (std::size_t i = 0; i < source.class_names.size(); ++i) {
        if (i) man << ",";
        man << source.class_names[i];
    }
    man << "\n";
    man << "train=" << name << "_train.bin:" << source.train.size() << "\n";
    man << "test=" << name << "_test.bin:" << source.test.size() << "\n";
    if (!man) throw ArchiveError("archive: manifest write failed in " + dir);
}

void write_split_csv(const std::vector<TaskDataset>& tasks, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ArchiveError("split csv: cannot write " + path);
    out << "task_id,global_class_id,local_label,train_count,test_count\n";
    for (const TaskDataset& t : tasks) {
        for (std::size_t c = 0; c < t.class_ids.size(); ++c) {
            const auto count = [&](const std::vector<Sample>& split) {
                return std::count_if(split.begin(), split.end(),
                                     [&](const Sample& s) { return s.label == static_cast<int>(c); });
            };
            out << t.task_id << "," << t.class_ids[c] << "," << c << "," << count(t.train) << ","
                << count(t.test) << "\n";
        }
    }
}

}  // namespace protohead
