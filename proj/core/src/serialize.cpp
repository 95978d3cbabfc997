#include "loramix/serialize.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

namespace loramix {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'L', 'T', 'L', 'E'};

struct TensorEntry {
    std::string role;
    const MatF* tensor;
};

void append_u16(std::vector<unsigned char>& buf, std::uint16_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xff));
    buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

void append_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void write_container(const std::filesystem::path& path, const json& header,
                     const std::vector<TensorEntry>& tensors) {
    json h = header;
    json manifest = json::array();
    for (const TensorEntry& t : tensors)
        manifest.push_back({{"role", t.role}, {"rows", t.tensor->rows}, {"cols", t.tensor->cols}});
    h["tensors"] = manifest;
    const std::string header_str = h.dump();

    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    append_u16(buf, kContainerVersion);
    append_u32(buf, static_cast<std::uint32_t>(header_str.size()));
    buf.insert(buf.end(), header_str.begin(), header_str.end());

    const std::size_t payload_start = buf.size();
    for (const TensorEntry& t : tensors) {
        static_assert(sizeof(float) == 4);
        const std::size_t bytes = t.tensor->data.size() * 4;
        const std::size_t off = buf.size();
        buf.resize(off + bytes);
        std::memcpy(buf.data() + off, t.tensor->data.data(), bytes);
    }
    const std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, buf.data() + payload_start, static_cast<uInt>(buf.size() - payload_start)));
    append_u32(buf, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("short write to '" + path.string() + "'");
}

struct Container {
    json header;
    std::vector<std::pair<std::string, MatF>> tensors;  // manifest order
};

std::uint32_t read_u32(const std::vector<unsigned char>& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
    return v;
}

Container read_container(const std::filesystem::path& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 10) throw FormatError("truncated container: " + std::to_string(buf.size()) + " bytes");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad magic at offset 0");
    const std::uint16_t version = static_cast<std::uint16_t>(buf[4] | (buf[5] << 8));
    if (version != kContainerVersion)
        throw FormatError("unsupported format version " + std::to_string(version) + " at offset 4");
    const std::uint32_t header_len = read_u32(buf, 6);
    if (10 + static_cast<std::size_t>(header_len) > buf.size())
        throw FormatError("header overruns file at offset 10");

    Container c;
    c.header = json::parse(buf.begin() + 10, buf.begin() + 10 + header_len, nullptr, false);
    if (c.header.is_discarded()) throw FormatError("malformed header document at offset 10");
    if (!c.header.contains("kind") || !c.header.contains("tensors"))
        throw FormatError("header missing required fields at offset 10");
    if (c.header.at("kind").get<std::string>() != expected_kind)
        throw FormatError("container kind '" + c.header.at("kind").get<std::string>() + "', expected '" +
                          expected_kind + "'");

    std::size_t off = 10 + header_len;
    std::size_t payload_bytes = 0;
    for (const json& t : c.header.at("tensors"))
        payload_bytes += static_cast<std::size_t>(t.at("rows").get<int>()) * t.at("cols").get<int>() * 4;
    if (off + payload_bytes + 4 != buf.size())
        throw FormatError("payload size mismatch at offset " + std::to_string(off) + ": expected " +
                          std::to_string(payload_bytes + 4) + " more bytes, have " +
                          std::to_string(buf.size() - off));

    const std::uint32_t crc_stored = read_u32(buf, off + payload_bytes);
    const std::uint32_t crc_actual =
        static_cast<std::uint32_t>(::crc32(0, buf.data() + off, static_cast<uInt>(payload_bytes)));
    if (crc_stored != crc_actual)
        throw FormatError("payload checksum mismatch at offset " + std::to_string(off + payload_bytes));

    for (const json& t : c.header.at("tensors")) {
        const int rows = t.at("rows").get<int>();
        const int cols = t.at("cols").get<int>();
        if (rows < 0 || cols < 0) throw FormatError("negative tensor dimension in manifest");
        std::vector<float> data(static_cast<std::size_t>(rows) * cols);
        std::memcpy(data.data(), buf.data() + off, data.size() * 4);
        off += data.size() * 4;
        c.tensors.emplace_back(t.at("role").get<std::string>(), MatF(rows, cols, std::move(data)));
    }
    return c;
}

}  // namespace

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path) {
    adapter.validate();
    json h;
    h["kind"] = "lora-adapter";
    h["name"] = adapter.name;
    h["rank"] = adapter.rank;
    h["alpha"] = adapter.alpha;
    std::vector<TensorEntry> tensors;
    for (const auto& [role, f] : adapter.targets) {
        tensors.push_back({role + "/A", &f.a});
        tensors.push_back({role + "/B", &f.b});
    }
    write_container(path, h, tensors);
}

LoraAdapter load_adapter(const std::filesystem::path& path) {
    Container c = read_container(path, "lora-adapter");
    LoraAdapter a;
    a.name = c.header.at("name").get<std::string>();
    a.rank = c.header.at("rank").get<int>();
    a.alpha = c.header.at("alpha").get<double>();
    for (auto& [role, tensor] : c.tensors) {
        const std::size_t slash = role.rfind('/');
        if (slash == std::string::npos) throw FormatError("adapter tensor role '" + role + "' missing factor suffix");
        const std::string target = role.substr(0, slash);
        const std::string factor = role.substr(slash + 1);
        if (factor == "A")
            a.targets[target].a = std::move(tensor);
        else if (factor == "B")
            a.targets[target].b = std::move(tensor);
        else
            throw FormatError("adapter tensor role '" + role + "' has unknown factor '" + factor + "'");
    }
    a.validate();
    return a;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    model.validate();
    json h;
    h["kind"] = "base-model";
    h["name"] = "base";
    h["config"] = {{"vocab_size", model.config.vocab_size}, {"d_model", model.config.d_model},
                   {"n_layers", model.config.n_layers},     {"n_heads", model.config.n_heads},
                   {"d_ff", model.config.d_ff},             {"max_seq_len", model.config.max_seq_len},
                   {"lora_targets", model.config.lora_targets}};
    std::vector<TensorEntry> tensors;
    for (const auto& [name, w] : model.params) tensors.push_back({name, &w});
    write_container(path, h, tensors);
}

Model load_model(const std::filesystem::path& path) {
    Container c = read_container(path, "base-model");
    Model m;
    const json& cfg = c.header.at("config");
    m.config.vocab_size = cfg.at("vocab_size").get<int>();
    m.config.d_model = cfg.at("d_model").get<int>();
    m.config.n_layers = cfg.at("n_layers").get<int>();
    m.config.n_heads = cfg.at("n_heads").get<int>();
    m.config.d_ff = cfg.at("d_ff").get<int>();
    m.config.max_seq_len = cfg.at("max_seq_len").get<int>();
    m.config.lora_targets = cfg.at("lora_targets").get<std::vector<std::string>>();
    for (auto& [role, tensor] : c.tensors) m.params.emplace(role, std::move(tensor));
    m.validate();
    return m;
}

void save_centroid(const Centroid& centroid, const std::filesystem::path& path) {
    if (centroid.vector.empty()) throw FormatError("centroid vector is empty");
    if (centroid.sample_count < 1) throw FormatError("centroid sample_count must be >= 1");
    json h;
    h["kind"] = "centroid";
    h["name"] = centroid.adapter_name;
    h["adapter_name"] = centroid.adapter_name;
    h["sample_count"] = centroid.sample_count;
    MatF v(1, static_cast<int>(centroid.vector.size()), std::vector<float>(centroid.vector));
    std::vector<TensorEntry> tensors{{"centroid", &v}};
    write_container(path, h, tensors);
}

Centroid load_centroid(const std::filesystem::path& path) {
    Container c = read_container(path, "centroid");
    if (c.tensors.size() != 1 || c.tensors[0].second.rows != 1)
        throw FormatError("centroid container must hold exactly one 1xN tensor");
    Centroid out;
    out.adapter_name = c.header.at("adapter_name").get<std::string>();
    out.sample_count = c.header.at("sample_count").get<long long>();
    out.vector = std::move(c.tensors[0].second.data);
    return out;
}

}  // namespace loramix
