#include "canids/model_io.hpp"

#include <cstring>
#include <fstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "canids/crc32.hpp"
#include "canids/error.hpp"

namespace canids {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// All blobs are little-endian regardless of host.
void append_le32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t read_le32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::string float_blob(const std::vector<float>& v) {
    std::string out;
    out.reserve(v.size() * 4);
    for (float x : v) {
        uint32_t bits;
        std::memcpy(&bits, &x, 4);
        append_le32(out, bits);
    }
    return out;
}

std::string int32_blob(const std::vector<int32_t>& v) {
    std::string out;
    out.reserve(v.size() * 4);
    for (int32_t x : v) append_le32(out, static_cast<uint32_t>(x));
    return out;
}

std::string int8_blob(const std::vector<int8_t>& v) {
    return std::string(reinterpret_cast<const char*>(v.data()), v.size());
}

struct PendingTensor {
    std::string name;
    std::vector<int64_t> shape;
    std::string dtype;
    int frac_bits = INT32_MIN; // INT32_MIN: field omitted
    std::string bytes;
};

json arch_to_json(const ModelConfig& c, bool bn_folded) {
    json a;
    a["in_channels"] = c.in_channels;
    a["height"] = c.height;
    a["width"] = c.width;
    a["conv_channels"] = c.conv_channels;
    a["dense_units"] = c.dense_units;
    a["dropout_rate"] = c.dropout_rate;
    a["bn_epsilon"] = c.bn_epsilon;
    a["bn_momentum"] = c.bn_momentum;
    a["bn_folded"] = bn_folded;
    return a;
}

std::pair<ModelConfig, bool> arch_from_json(const json& a) {
    ModelConfig c;
    c.in_channels = a.at("in_channels").get<int>();
    c.height = a.at("height").get<int>();
    c.width = a.at("width").get<int>();
    c.conv_channels = a.at("conv_channels").get<std::vector<int>>();
    c.dense_units = a.at("dense_units").get<int>();
    c.dropout_rate = a.at("dropout_rate").get<double>();
    c.bn_epsilon = a.at("bn_epsilon").get<double>();
    c.bn_momentum = a.at("bn_momentum").get<double>();
    return {c, a.at("bn_folded").get<bool>()};
}

void write_bundle(const fs::path& dir, json manifest, std::vector<PendingTensor> tensors) {
    json tlist = json::array();
    for (auto& t : tensors) {
        json e;
        e["name"] = t.name;
        e["shape"] = t.shape;
        e["dtype"] = t.dtype;
        e["file"] = t.name + ".bin";
        char crc[16];
        std::snprintf(crc, sizeof(crc), "%08x", canids::crc32(t.bytes.data(), t.bytes.size()));
        e["crc32"] = crc;
        if (t.frac_bits != INT32_MIN) e["frac_bits"] = t.frac_bits;
        tlist.push_back(e);
    }
    manifest["tensors"] = tlist;

    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    fs::path tmp = parent / (dir.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(tmp, ec);
    if (!fs::create_directories(tmp))
        throw IoError("cannot create bundle staging dir " + tmp.string());

    try {
        {
            std::ofstream out(tmp / "manifest.json", std::ios::binary);
            out << manifest.dump(2) << '\n';
            if (!out) throw IoError("manifest write failed");
        }
        for (const auto& t : tensors) {
            std::ofstream out(tmp / (t.name + ".bin"), std::ios::binary);
            out.write(t.bytes.data(), static_cast<std::streamsize>(t.bytes.size()));
            if (!out) throw IoError("blob write failed: " + t.name);
        }
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }
    fs::remove_all(dir, ec);
    fs::rename(tmp, dir);
}

std::string read_blob(const fs::path& dir, const std::string& file, const std::string& tensor) {
    std::ifstream in(dir / file, std::ios::binary);
    if (!in) throw IoError("missing blob for tensor '" + tensor + "': " + file);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

struct LoadedTensor {
    std::vector<int64_t> shape;
    std::string dtype;
    int frac_bits = INT32_MIN;
    std::string bytes;
};

LoadedTensor fetch_tensor(const fs::path& dir, const json& tensors, const std::string& name) {
    for (const auto& e : tensors) {
        if (e.at("name").get<std::string>() != name) continue;
        LoadedTensor t;
        t.shape = e.at("shape").get<std::vector<int64_t>>();
        t.dtype = e.at("dtype").get<std::string>();
        if (e.contains("frac_bits")) t.frac_bits = e.at("frac_bits").get<int>();
        t.bytes = read_blob(dir, e.at("file").get<std::string>(), name);

        int64_t count = 1;
        for (int64_t d : t.shape) count *= d;
        const size_t dsize = t.dtype == "int8" ? 1 : 4;
        if (t.bytes.size() != static_cast<size_t>(count) * dsize)
            throw ValidationError("blob size mismatch for tensor '" + name + "'");
        char crc[16];
        std::snprintf(crc, sizeof(crc), "%08x", canids::crc32(t.bytes.data(), t.bytes.size()));
        if (e.at("crc32").get<std::string>() != crc)
            throw ChecksumError("checksum mismatch for tensor '" + name + "'");
        return t;
    }
    throw ValidationError("manifest has no tensor '" + name + "'");
}

std::vector<float> floats_from(const LoadedTensor& t, const std::string& name) {
    if (t.dtype != "float32") throw ValidationError("tensor '" + name + "' is not float32");
    std::vector<float> v(t.bytes.size() / 4);
    const auto* p = reinterpret_cast<const unsigned char*>(t.bytes.data());
    for (size_t i = 0; i < v.size(); ++i) {
        const uint32_t bits = read_le32(p + i * 4);
        std::memcpy(&v[i], &bits, 4);
    }
    return v;
}

std::vector<int32_t> int32s_from(const LoadedTensor& t, const std::string& name) {
    if (t.dtype != "int32") throw ValidationError("tensor '" + name + "' is not int32");
    std::vector<int32_t> v(t.bytes.size() / 4);
    const auto* p = reinterpret_cast<const unsigned char*>(t.bytes.data());
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int32_t>(read_le32(p + i * 4));
    return v;
}

std::vector<int8_t> int8s_from(const LoadedTensor& t, const std::string& name) {
    if (t.dtype != "int8") throw ValidationError("tensor '" + name + "' is not int8");
    std::vector<int8_t> v(t.bytes.size());
    std::memcpy(v.data(), t.bytes.data(), t.bytes.size());
    for (int8_t x : v)
        if (x < -127) throw ValidationError("tensor '" + name + "' breaks the int8 [-127,127] bound");
    return v;
}

Tensor tensor_from(const LoadedTensor& t, const std::string& name) {
    Tensor out;
    out.shape = t.shape;
    out.v = floats_from(t, name);
    return out;
}

json load_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no manifest.json in " + dir.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw ValidationError("bad manifest: " + std::string(e.what()));
    }
    const int version = m.value("format_version", -1);
    if (version != kBundleFormatVersion)
        throw VersionError("unsupported bundle format version " + std::to_string(version));
    return m;
}

} // namespace

void save_bundle(const CnnModel& model, const fs::path& dir) {
    json manifest;
    manifest["format_version"] = kBundleFormatVersion;
    manifest["kind"] = "float";
    manifest["arch"] = arch_to_json(model.config, model.bn_folded);

    std::vector<PendingTensor> tensors;
    auto add = [&tensors](const std::string& name, const Tensor& t) {
        tensors.push_back({name, t.shape, "float32", INT32_MIN, float_blob(t.v)});
    };
    for (size_t bi = 0; bi < model.blocks.size(); ++bi) {
        const std::string p = "conv" + std::to_string(bi + 1);
        add(p + ".weight", model.blocks[bi].conv.w);
        add(p + ".bias", model.blocks[bi].conv.b);
        if (!model.bn_folded) {
            const std::string b = "bn" + std::to_string(bi + 1);
            add(b + ".gamma", model.blocks[bi].bn.gamma);
            add(b + ".beta", model.blocks[bi].bn.beta);
            add(b + ".running_mean", model.blocks[bi].bn.running_mean);
            add(b + ".running_var", model.blocks[bi].bn.running_var);
        }
    }
    add("dense1.weight", model.dense1.w);
    add("dense1.bias", model.dense1.b);
    add("dense2.weight", model.dense2.w);
    add("dense2.bias", model.dense2.b);
    write_bundle(dir, std::move(manifest), std::move(tensors));
}

void save_bundle(const QuantModel& model, const fs::path& dir) {
    json manifest;
    manifest["format_version"] = kBundleFormatVersion;
    manifest["kind"] = "quant";
    manifest["arch"] = arch_to_json(model.config, true);

    json layers = json::array();
    auto meta_json = [](const std::string& name, const QuantLayerMeta& m) {
        json e;
        e["name"] = name;
        e["w_frac"] = m.w_frac;
        e["in_frac"] = m.in_frac;
        e["out_frac"] = m.out_frac;
        e["shift"] = m.shift;
        return e;
    };
    std::vector<PendingTensor> tensors;
    for (size_t bi = 0; bi < model.convs.size(); ++bi) {
        const std::string p = "conv" + std::to_string(bi + 1);
        const QuantConv& qc = model.convs[bi];
        layers.push_back(meta_json(p, qc.meta));
        tensors.push_back({p + ".weight",
                           {qc.out_ch, qc.in_ch, 3, 3},
                           "int8",
                           qc.meta.w_frac,
                           int8_blob(qc.w)});
        tensors.push_back({p + ".bias",
                           {qc.out_ch},
                           "int32",
                           qc.meta.in_frac + qc.meta.w_frac,
                           int32_blob(qc.bias)});
    }
    for (const auto* d : {&model.dense1, &model.dense2}) {
        const std::string p = d == &model.dense1 ? "dense1" : "dense2";
        json e = meta_json(p, d->meta);
        e["relu"] = d->relu;
        e["requantize"] = d->requantize;
        layers.push_back(e);
        tensors.push_back({p + ".weight",
                           {d->out_dim, d->in_dim},
                           "int8",
                           d->meta.w_frac,
                           int8_blob(d->w)});
        tensors.push_back({p + ".bias",
                           {d->out_dim},
                           "int32",
                           d->meta.in_frac + d->meta.w_frac,
                           int32_blob(d->bias)});
    }
    manifest["quant"] = {{"input_frac", model.input_frac}, {"layers", layers}};
    write_bundle(dir, std::move(manifest), std::move(tensors));
}

namespace {

CnnModel load_float_model(const fs::path& dir, const json& manifest) {
    auto [config, folded] = arch_from_json(manifest.at("arch"));
    CnnModel m = make_model<float>(config, 0);
    m.bn_folded = folded;
    const json& tensors = manifest.at("tensors");

    auto expect_shape = [](const Tensor& t, const std::vector<int64_t>& shape,
                           const std::string& name) {
        if (t.shape != shape) throw ValidationError("shape mismatch for tensor '" + name + "'");
    };
    int64_t in_ch = config.in_channels;
    for (size_t bi = 0; bi < m.blocks.size(); ++bi) {
        const std::string p = "conv" + std::to_string(bi + 1);
        const int64_t out_ch = config.conv_channels[bi];
        Tensor w = tensor_from(fetch_tensor(dir, tensors, p + ".weight"), p + ".weight");
        expect_shape(w, {out_ch, in_ch, 3, 3}, p + ".weight");
        Tensor b = tensor_from(fetch_tensor(dir, tensors, p + ".bias"), p + ".bias");
        expect_shape(b, {out_ch}, p + ".bias");
        m.blocks[bi].conv.w = std::move(w);
        m.blocks[bi].conv.b = std::move(b);
        if (!folded) {
            const std::string bp = "bn" + std::to_string(bi + 1);
            for (const char* part : {"gamma", "beta", "running_mean", "running_var"}) {
                const std::string name = bp + "." + part;
                Tensor t = tensor_from(fetch_tensor(dir, tensors, name), name);
                expect_shape(t, {out_ch}, name);
                if (std::string(part) == "gamma") m.blocks[bi].bn.gamma = std::move(t);
                else if (std::string(part) == "beta") m.blocks[bi].bn.beta = std::move(t);
                else if (std::string(part) == "running_mean")
                    m.blocks[bi].bn.running_mean = std::move(t);
                else m.blocks[bi].bn.running_var = std::move(t);
            }
        }
        in_ch = out_ch;
    }
    Tensor d1w = tensor_from(fetch_tensor(dir, tensors, "dense1.weight"), "dense1.weight");
    expect_shape(d1w, {config.dense_units, config.flatten_size()}, "dense1.weight");
    Tensor d1b = tensor_from(fetch_tensor(dir, tensors, "dense1.bias"), "dense1.bias");
    Tensor d2w = tensor_from(fetch_tensor(dir, tensors, "dense2.weight"), "dense2.weight");
    expect_shape(d2w, {1, config.dense_units}, "dense2.weight");
    Tensor d2b = tensor_from(fetch_tensor(dir, tensors, "dense2.bias"), "dense2.bias");
    m.dense1.w = std::move(d1w);
    m.dense1.b = std::move(d1b);
    m.dense2.w = std::move(d2w);
    m.dense2.b = std::move(d2b);
    return m;
}

QuantModel load_quant_model(const fs::path& dir, const json& manifest) {
    auto [config, folded] = arch_from_json(manifest.at("arch"));
    (void)folded;
    QuantModel qm;
    qm.config = config;
    const json& q = manifest.at("quant");
    qm.input_frac = q.at("input_frac").get<int>();
    const json& tensors = manifest.at("tensors");

    auto meta_of = [&q](const std::string& name) {
        for (const auto& e : q.at("layers")) {
            if (e.at("name").get<std::string>() == name) {
                QuantLayerMeta m;
                m.w_frac = e.at("w_frac").get<int>();
                m.in_frac = e.at("in_frac").get<int>();
                m.out_frac = e.at("out_frac").get<int>();
                m.shift = e.at("shift").get<int>();
                if (m.shift < 0) throw ValidationError("negative shift for layer " + name);
                return m;
            }
        }
        throw ValidationError("quant manifest has no layer '" + name + "'");
    };

    int64_t in_ch = config.in_channels;
    for (size_t bi = 0; bi < config.conv_channels.size(); ++bi) {
        const std::string p = "conv" + std::to_string(bi + 1);
        QuantConv qc;
        qc.out_ch = config.conv_channels[bi];
        qc.in_ch = in_ch;
        qc.meta = meta_of(p);
        LoadedTensor w = fetch_tensor(dir, tensors, p + ".weight");
        if (w.shape != std::vector<int64_t>{qc.out_ch, qc.in_ch, 3, 3})
            throw ValidationError("shape mismatch for tensor '" + p + ".weight'");
        qc.w = int8s_from(w, p + ".weight");
        qc.bias = int32s_from(fetch_tensor(dir, tensors, p + ".bias"), p + ".bias");
        if (qc.bias.size() != static_cast<size_t>(qc.out_ch))
            throw ValidationError("shape mismatch for tensor '" + p + ".bias'");
        qm.convs.push_back(std::move(qc));
        in_ch = config.conv_channels[bi];
    }

    auto load_dense = [&](const std::string& p, int64_t out_dim, int64_t in_dim) {
        QuantDense qd;
        qd.out_dim = out_dim;
        qd.in_dim = in_dim;
        qd.meta = meta_of(p);
        for (const auto& e : q.at("layers"))
            if (e.at("name").get<std::string>() == p) {
                qd.relu = e.at("relu").get<bool>();
                qd.requantize = e.at("requantize").get<bool>();
            }
        LoadedTensor w = fetch_tensor(dir, tensors, p + ".weight");
        if (w.shape != std::vector<int64_t>{out_dim, in_dim})
            throw ValidationError("shape mismatch for tensor '" + p + ".weight'");
        qd.w = int8s_from(w, p + ".weight");
        qd.bias = int32s_from(fetch_tensor(dir, tensors, p + ".bias"), p + ".bias");
        if (qd.bias.size() != static_cast<size_t>(out_dim))
            throw ValidationError("shape mismatch for tensor '" + p + ".bias'");
        return qd;
    };
    qm.dense1 = load_dense("dense1", config.dense_units, config.flatten_size());
    qm.dense2 = load_dense("dense2", 1, config.dense_units);
    return qm;
}

} // namespace

AnyModel load_bundle(const fs::path& dir) {
    const json manifest = load_manifest(dir);
    const std::string kind = manifest.value("kind", "");
    if (kind == "float") return load_float_model(dir, manifest);
    if (kind == "quant") return load_quant_model(dir, manifest);
    throw ValidationError("unknown bundle kind '" + kind + "'");
}

CnnModel load_float_bundle(const fs::path& dir) {
    AnyModel m = load_bundle(dir);
    if (auto* f = std::get_if<CnnModel>(&m)) return std::move(*f);
    throw ValidationError("bundle at " + dir.string() + " is not a float model");
}

QuantModel load_quant_bundle(const fs::path& dir) {
    AnyModel m = load_bundle(dir);
    if (auto* q = std::get_if<QuantModel>(&m)) return std::move(*q);
    throw ValidationError("bundle at " + dir.string() + " is not a quantized model");
}

uint32_t parameter_crc(const CnnModel& model) {
    uint32_t crc = 0;
    for (const auto* t : trainable_params(model)) {
        const std::string blob = float_blob(t->v);
        crc = canids::crc32(blob.data(), blob.size(), crc);
    }
    return crc;
}

uint32_t parameter_crc(const QuantModel& model) {
    uint32_t crc = 0;
    auto add8 = [&crc](const std::vector<int8_t>& v) {
        const std::string blob = int8_blob(v);
        crc = canids::crc32(blob.data(), blob.size(), crc);
    };
    auto add32 = [&crc](const std::vector<int32_t>& v) {
        const std::string blob = int32_blob(v);
        crc = canids::crc32(blob.data(), blob.size(), crc);
    };
    for (const auto& c : model.convs) {
        add8(c.w);
        add32(c.bias);
    }
    add8(model.dense1.w);
    add32(model.dense1.bias);
    add8(model.dense2.w);
    add32(model.dense2.bias);
    return crc;
}

} // namespace canids
