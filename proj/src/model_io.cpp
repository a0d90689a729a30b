#include "gridsage/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "gridsage/errors.hpp"

namespace gridsage {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'I', 'D', 'S', 'A', 'G', 'E'};

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes, std::size_t len) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

struct Writer {
    std::vector<std::uint8_t> buf;

    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void put_u8(std::uint8_t v) { buf.push_back(v); }
    void put_u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void put_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
    void put_string(const std::string& s) {
        put_u32(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
};

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw CorruptionError("model file truncated");
    }
    std::uint8_t get_u8() {
        need(1);
        return buf[pos++];
    }
    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    std::string get_string() {
        const std::uint32_t n = get_u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_model(const ModelParams& model, const std::string& path) {
    const ModelArch& a = model.arch;
    Writer w;
    w.put_bytes(kMagic, sizeof(kMagic));
    w.put_u32(kModelFormatVersion);

    w.put_u32(static_cast<std::uint32_t>(a.input_height));
    w.put_u32(static_cast<std::uint32_t>(a.input_width));
    w.put_u32(static_cast<std::uint32_t>(a.input_channels));
    w.put_u32(static_cast<std::uint32_t>(a.num_layers()));
    for (int l = 0; l < a.num_layers(); ++l) {
        w.put_u32(static_cast<std::uint32_t>(a.layer_channels[l]));
        w.put_u32(static_cast<std::uint32_t>(a.pool_sizes[l]));
    }
    w.put_u32(static_cast<std::uint32_t>(a.attention_reduction));
    w.put_u8(a.update_rule == UpdateRule::product ? 0 : 1);
    w.put_u32(static_cast<std::uint32_t>(a.head_hidden.size()));
    for (int h : a.head_hidden) w.put_u32(static_cast<std::uint32_t>(h));
    w.put_u32(static_cast<std::uint32_t>(a.class_names.size()));
    for (const std::string& name : a.class_names) w.put_string(name);

    visit_params(model, [&w](const std::string&, const Tensor& t, bool) {
        for (double v : *t.data) w.put_f64(v);
    });

    w.put_u64(fnv1a64(w.buf, w.buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file: " + path);
    out.write(reinterpret_cast<const char*>(w.buf.data()),
              static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw IoError("short write to model file: " + path);
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 4 + 8) throw CorruptionError("model file truncated");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw CorruptionError("not a model file (bad magic): " + path);

    {
        Reader tail{bytes, bytes.size() - 8};
        const std::uint64_t expect = tail.get_u64();
        if (fnv1a64(bytes, bytes.size() - 8) != expect)
            throw CorruptionError("model file checksum mismatch: " + path);
    }

    Reader r{bytes, sizeof(kMagic)};
    const std::uint32_t version = r.get_u32();
    if (version != kModelFormatVersion)
        throw UnsupportedVersionError("model file version " + std::to_string(version) +
                                      " not supported (this build reads version " +
                                      std::to_string(kModelFormatVersion) + ")");

    ModelArch a;
    a.input_height = static_cast<int>(r.get_u32());
    a.input_width = static_cast<int>(r.get_u32());
    a.input_channels = static_cast<int>(r.get_u32());
    const std::uint32_t layers = r.get_u32();
    if (layers > 64) throw CorruptionError("implausible layer count in model file");
    for (std::uint32_t l = 0; l < layers; ++l) {
        a.layer_channels.push_back(static_cast<int>(r.get_u32()));
        a.pool_sizes.push_back(static_cast<int>(r.get_u32()));
    }
    a.attention_reduction = static_cast<int>(r.get_u32());
    a.update_rule = r.get_u8() == 0 ? UpdateRule::product : UpdateRule::sum;
    const std::uint32_t hidden = r.get_u32();
    if (hidden > 64) throw CorruptionError("implausible head depth in model file");
    for (std::uint32_t i = 0; i < hidden; ++i) a.head_hidden.push_back(static_cast<int>(r.get_u32()));
    const std::uint32_t classes = r.get_u32();
    if (classes > 4096) throw CorruptionError("implausible class count in model file");
    for (std::uint32_t i = 0; i < classes; ++i) a.class_names.push_back(r.get_string());

    try {
        a.validate();
    } catch (const InvalidInputError& e) {
        throw CorruptionError(std::string("model file carries an invalid architecture: ") +
                              e.what());
    }

    Rng dummy(0);
    ModelParams m = init_model(a, dummy);
    visit_params(m, [&r](const std::string&, Tensor& t, bool) {
        for (double& v : *t.data) v = r.get_f64();
    });
    if (r.pos != bytes.size() - 8)
        throw CorruptionError("model file has trailing bytes: " + path);
    return m;
}

}  // namespace gridsage
