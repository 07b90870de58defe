#include <cstring>
#include <filesystem>
#include <fstream>

#include "miniformer/training.hpp"

namespace miniformer::training {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};

// Field order is fixed; numbers are stored in host (little-endian) byte order.
struct Writer {
    std::string out;

    void raw(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void doubles(std::span<const double> values) {
        raw(values.data(), values.size() * sizeof(double));
    }
};

struct Reader {
    const std::string& in;
    std::size_t pos = 0;

    void raw(void* p, std::size_t n) {
        if (pos + n > in.size()) throw FormatError("checkpoint: truncated file");
        std::memcpy(p, in.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (pos + n > in.size()) throw FormatError("checkpoint: truncated file");
        std::string s(in.data() + pos, n);
        pos += n;
        return s;
    }
    std::vector<double> doubles(std::size_t n) {
        std::vector<double> values(n);
        raw(values.data(), n * sizeof(double));
        return values;
    }
};

}  // namespace

std::string serialize_checkpoint(const models::Seq2SeqModel& model, const Adam* adam,
                                 std::uint32_t epoch, std::uint64_t seed,
                                 const std::string& rng_state) {
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(model.kind());
    w.str(model.config_text());
    w.u32(epoch);
    w.u64(seed);
    w.str(rng_state);

    const auto params = model.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const Parameter& p : params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
        for (std::size_t d : p.tensor.shape()) w.u64(d);
        w.doubles(p.tensor.data());
    }

    w.u8(adam ? 1 : 0);
    if (adam) {
        w.u64(adam->step_count());
        for (const Parameter& p : params) {
            auto it = adam->slots().find(p.name);
            if (it == adam->slots().end()) {
                // parameter never stepped: store zeroed slots
                w.doubles(std::vector<double>(p.tensor.numel(), 0.0));
                w.doubles(std::vector<double>(p.tensor.numel(), 0.0));
            } else {
                w.doubles(it->second.m);
                w.doubles(it->second.v);
            }
        }
    }
    return std::move(w.out);
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    Reader r{bytes};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic bytes");

    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != kCheckpointVersion)
        throw FormatError("checkpoint: version " + std::to_string(ck.version) +
                          " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    ck.model_kind = r.str();
    ck.config_text = r.str();
    ck.epoch = r.u32();
    ck.seed = r.u64();
    ck.rng_state = r.str();

    const std::uint32_t n_params = r.u32();
    ck.params.reserve(n_params);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        Checkpoint::Blob blob;
        blob.name = r.str();
        const std::uint32_t rank = r.u32();
        blob.shape.resize(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            blob.shape[d] = static_cast<std::size_t>(r.u64());
            numel *= blob.shape[d];
        }
        blob.values = r.doubles(numel);
        ck.params.push_back(std::move(blob));
    }

    ck.has_adam = r.u8() != 0;
    if (ck.has_adam) {
        ck.adam_t = r.u64();
        for (const auto& blob : ck.params) {
            AdamSlot slot;
            slot.m = r.doubles(blob.values.size());
            slot.v = r.doubles(blob.values.size());
            ck.adam_slots[blob.name] = std::move(slot);
        }
    }
    if (r.pos != bytes.size()) throw FormatError("checkpoint: trailing bytes");
    return ck;
}

void save_checkpoint(const std::string& path, const models::Seq2SeqModel& model, const Adam* adam,
                     std::uint32_t epoch, std::uint64_t seed, const std::string& rng_state) {
    const std::string bytes = serialize_checkpoint(model, adam, epoch, seed, rng_state);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("checkpoint: cannot write " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("checkpoint: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot read " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

void apply_checkpoint(const Checkpoint& ck, models::Seq2SeqModel& model) {
    auto params = model.parameters();
    if (ck.params.size() != params.size())
        throw FormatError("checkpoint: holds " + std::to_string(ck.params.size()) +
                          " parameters, model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Checkpoint::Blob& blob = ck.params[i];
        Parameter& p = params[i];
        if (blob.name != p.name)
            throw FormatError("checkpoint: unknown parameter '" + blob.name + "' (expected '" +
                              p.name + "')");
        if (blob.shape != p.tensor.shape())
            throw FormatError("checkpoint: parameter '" + blob.name + "' has shape " +
                              shape_str(blob.shape) + ", model expects " +
                              shape_str(p.tensor.shape()));
        std::copy(blob.values.begin(), blob.values.end(), p.tensor.data().begin());
    }
}

std::unique_ptr<models::Seq2SeqModel> model_from_checkpoint(const Checkpoint& ck) {
    auto model = models::make_model(ck.model_kind, ck.config_text, ck.seed);
    apply_checkpoint(ck, *model);
    return model;
}

void restore_adam(const Checkpoint& ck, Adam& adam) {
    if (!ck.has_adam) throw FormatError("checkpoint: no optimizer state stored");
    adam.restore(ck.adam_t, ck.adam_slots);
}

}  // namespace miniformer::training
