#include "vtcc/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace vtcc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using Kind = CheckpointError::Kind;

template <typename U>
void put(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
   public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get(const std::string& what) {
        U v;
        std::memcpy(&v, take(sizeof(U), what), sizeof(U));
        return v;
    }
    const char* take(size_t n, const std::string& what) {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(Kind::kIntegrity, "checkpoint truncated while reading " + what);
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == bytes_.size(); }

   private:
    const std::string& bytes_;
    size_t pos_ = 0;
};

uint32_t checksum(const float* data, size_t count) {
    return static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(count * sizeof(float))));
}

}  // namespace

CheckpointRecord CheckpointRecord::words(std::string name, const std::vector<uint64_t>& values) {
    CheckpointRecord r{std::move(name), {static_cast<uint32_t>(2 * values.size())}, {}};
    for (uint64_t v : values) {
        r.values.push_back(std::bit_cast<float>(static_cast<uint32_t>(v & 0xFFFFFFFFu)));
        r.values.push_back(std::bit_cast<float>(static_cast<uint32_t>(v >> 32)));
    }
    return r;
}

std::vector<uint64_t> CheckpointRecord::as_words() const {
    if (dims.size() != 1 || values.size() % 2 != 0) {
        throw CheckpointError(Kind::kFormat, "record " + name + " does not hold 64-bit words");
    }
    std::vector<uint64_t> out;
    for (size_t i = 0; i < values.size(); i += 2) {
        out.push_back(static_cast<uint64_t>(std::bit_cast<uint32_t>(values[i])) |
                      static_cast<uint64_t>(std::bit_cast<uint32_t>(values[i + 1])) << 32);
    }
    return out;
}

const CheckpointRecord* CheckpointFile::find(const std::string& name) const {
    for (const auto& r : records) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

const CheckpointRecord& CheckpointFile::require(const std::string& name) const {
    const CheckpointRecord* r = find(name);
    if (!r) throw CheckpointError(Kind::kFormat, "checkpoint has no record " + name);
    return *r;
}

std::string serialize_checkpoint(const CheckpointFile& file) {
    std::string out(kCheckpointMagic, 8);
    put<uint32_t>(out, kCheckpointVersion);
    put<uint32_t>(out, static_cast<uint32_t>(file.config_text.size()));
    out += file.config_text;
    auto write_record = [&](const CheckpointRecord& r) {
        size_t numel = 1;
        for (uint32_t d : r.dims) numel *= d;
        if (numel != r.values.size() || r.name.size() > 0xFFFF || r.dims.size() > 255) {
            throw CheckpointError(Kind::kFormat, "record " + r.name + " is malformed");
        }
        put<uint16_t>(out, static_cast<uint16_t>(r.name.size()));
        out += r.name;
        put<uint8_t>(out, static_cast<uint8_t>(r.dims.size()));
        for (uint32_t d : r.dims) put<uint32_t>(out, d);
        out.append(reinterpret_cast<const char*>(r.values.data()), r.values.size() * sizeof(float));
        put<uint32_t>(out, checksum(r.values.data(), r.values.size()));
    };
    for (const auto& r : file.records) {
        if (r.name == "meta.end") throw CheckpointError(Kind::kFormat, "meta.end is reserved");
        write_record(r);
    }
    write_record(CheckpointRecord{"meta.end", {0}, {}});
    return out;
}

CheckpointFile parse_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw CheckpointError(Kind::kFormat, "not a checkpoint (bad magic)");
    }
    in.take(8, "magic");
    const auto version = in.get<uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(Kind::kVersion, "incompatible checkpoint version " + std::to_string(version) +
                                                  " (this build reads version " +
                                                  std::to_string(kCheckpointVersion) + ")");
    }
    CheckpointFile file;
    const auto config_len = in.get<uint32_t>("config length");
    file.config_text.assign(in.take(config_len, "config text"), config_len);
    for (;;) {
        CheckpointRecord r;
        const auto name_len = in.get<uint16_t>("record name length");
        r.name.assign(in.take(name_len, "record name"), name_len);
        const auto rank = in.get<uint8_t>("rank of " + r.name);
        size_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            r.dims.push_back(in.get<uint32_t>("dims of " + r.name));
            numel *= r.dims.back();
        }
        if (numel > bytes.size() / sizeof(float)) {
            throw CheckpointError(Kind::kIntegrity, "checkpoint truncated in payload of " + r.name);
        }
        r.values.resize(numel);
        std::memcpy(r.values.data(), in.take(numel * sizeof(float), "payload of " + r.name), numel * sizeof(float));
        const auto stored = in.get<uint32_t>("checksum of " + r.name);
        if (stored != checksum(r.values.data(), numel)) {
            throw CheckpointError(Kind::kIntegrity, "checksum mismatch in record " + r.name);
        }
        if (r.name == "meta.end") break;
        file.records.push_back(std::move(r));
    }
    if (!in.done()) throw CheckpointError(Kind::kIntegrity, "trailing bytes after meta.end");
    return file;
}

void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(file);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())) || !out.flush()) {
            throw CheckpointError(Kind::kIo, "cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError(Kind::kIo, "cannot move checkpoint into " + path.string() + ": " + ec.message());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::kIo, "cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind, path.string() + ": " + e.what());
    }
}

}  // namespace vtcc
