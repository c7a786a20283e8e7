#include "protohead/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace protohead {

namespace {

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw CheckpointError("checkpoint: cannot write " + path);
    }

    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        out_.write(reinterpret_cast<const char*>(b), 4);
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out_.write(reinterpret_cast<const char*>(b), 8);
    }

    void finish() {
        out_.flush();
        if (!out_) throw CheckpointError("checkpoint: write failed for " + path_);
    }

  private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw CheckpointError("checkpoint: cannot open " + path);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        take(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    double f64() {
        unsigned char b[8];
        take(b, 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_eof() {
        char c;
        if (in_.read(&c, 1)) {
            throw CheckpointError("checkpoint: trailing bytes after byte offset " +
                                  std::to_string(offset_) + " in " + path_);
        }
    }

  private:
    void take(unsigned char* dst, int n) {
        in_.read(reinterpret_cast<char*>(dst), n);
        if (!in_) {
            throw CheckpointError("checkpoint: truncated at byte offset " +
                                  std::to_string(offset_) + " in " + path_);
        }
        offset_ += n;
    }

    std::ifstream in_;
    std::string path_;
    std::uint64_t offset_ = 0;
};

long network_param_count(const ModelConfig& cfg) {
    long n = 0;
    int in = cfg.input.numel();
    for (int h : cfg.hidden) {
        n += static_cast<long>(h) * in + h;
        in = h;
    }
    n += static_cast<long>(cfg.feature_dim) * in + cfg.feature_dim;
    n += static_cast<long>(cfg.hypernet_hidden) * cfg.embedding_dim() + cfg.hypernet_hidden;
    n += static_cast<long>(cfg.head_param_count()) * cfg.hypernet_hidden + cfg.head_param_count();
    return n;
}

}  // namespace

std::uint64_t checkpoint_size_bytes(const ModelConfig& cfg, int num_tasks) {
    const std::uint64_t header = 4u * (12 + cfg.hidden.size());
    const std::uint64_t network = 8u * static_cast<std::uint64_t>(network_param_count(cfg));
    const std::uint64_t protos = 8u * static_cast<std::uint64_t>(num_tasks) *
                                 cfg.classes_per_task * cfg.prototype.numel();
    return header + network + protos;
}

void save_checkpoint(const HyperHeadModel& model, const std::string& path) {
    const ModelConfig& cfg = model.config();
    Writer w(path);
    w.u32(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(cfg.input.channels));
    w.u32(static_cast<std::uint32_t>(cfg.input.height));
    w.u32(static_cast<std::uint32_t>(cfg.input.width));
    w.u32(static_cast<std::uint32_t>(cfg.hidden.size()));
    for (int h : cfg.hidden) w.u32(static_cast<std::uint32_t>(h));
    w.u32(static_cast<std::uint32_t>(cfg.feature_dim));
    w.u32(static_cast<std::uint32_t>(cfg.hypernet_hidden));
    w.u32(static_cast<std::uint32_t>(cfg.classes_per_task));
    w.u32(static_cast<std::uint32_t>(cfg.prototype.height));
    w.u32(static_cast<std::uint32_t>(cfg.prototype.width));
    w.u32(static_cast<std::uint32_t>(model.prototypes().num_tasks()));
    for (const Tensor& t : model.parameters()) {
        for (double v : t.data()) w.f64(v);
    }
    w.finish();
}

HyperHeadModel load_checkpoint(const std::string& path) {
    Reader r(path);
    if (r.u32() != kCheckpointMagic) {
        throw CheckpointError("checkpoint: bad magic in " + path + ", not a checkpoint file");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError("checkpoint: file version " + std::to_string(version) +
                                     " is not the supported version " +
                                     std::to_string(kCheckpointVersion) +
                                     "; no migration path exists");
    }

    ModelConfig cfg;
    cfg.input.channels = static_cast<int>(r.u32());
    cfg.input.height = static_cast<int>(r.u32());
    cfg.input.width = static_cast<int>(r.u32());
    const std::uint32_t n_hidden = r.u32();
    if (n_hidden > 64) {
        throw CheckpointError("checkpoint: implausible hidden layer count " +
                              std::to_string(n_hidden));
    }
    cfg.hidden.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i) cfg.hidden.push_back(static_cast<int>(r.u32()));
    cfg.feature_dim = static_cast<int>(r.u32());
    cfg.hypernet_hidden = static_cast<int>(r.u32());
    cfg.classes_per_task = static_cast<int>(r.u32());
    cfg.prototype.channels = cfg.input.channels;
    cfg.prototype.height = static_cast<int>(r.u32());
    cfg.prototype.width = static_cast<int>(r.u32());
    const int num_tasks = static_cast<int>(r.u32());

    HyperHeadModel model = build_model_shell(cfg);
    for (Tensor& t : model.network_parameters()) {
        for (double& v : t.data()) v = r.f64();
    }
    for (int task = 1; task <= num_tasks; ++task) {
        std::vector<Prototype> protos;
        for (int c = 0; c < cfg.classes_per_task; ++c) {
            std::vector<double> values(static_cast<std::size_t>(cfg.prototype.numel()));
            for (double& v : values) v = r.f64();
            protos.push_back({Tensor::from_data({cfg.prototype.channels, cfg.prototype.height,
                                                 cfg.prototype.width},
                                                std::move(values), true),
                              task, c});
        }
        model.register_task_prototypes(task, std::move(protos));
    }
    r.expect_eof();
    return model;
}

}  // namespace protohead
