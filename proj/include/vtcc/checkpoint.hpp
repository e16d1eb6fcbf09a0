#pragma once

// Checkpoint container: "VTCCCKPT", u32 version, u32 config length and the
// config text, then records of
//   [u16 name length][name][u8 rank][u32 dims...][float32 payload][u32 crc32]
// closed by an empty "meta.end" record. All integers are little-endian.
// Integer-valued records (counters, seeds) store their 32-bit words bit-cast
// into the float32 payload.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtcc {

inline constexpr char kCheckpointMagic[8] = {'V', 'T', 'C', 'C', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
   public:
    enum class Kind { kIo, kFormat, kVersion, kIntegrity };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

struct CheckpointRecord {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> values;

    static CheckpointRecord words(std::string name, const std::vector<uint64_t>& values);
    // Inverse of words(); CheckpointError if the record has another shape.
    std::vector<uint64_t> as_words() const;
};

struct CheckpointFile {
    std::string config_text;
    std::vector<CheckpointRecord> records;

    // nullptr when absent.
    const CheckpointRecord* find(const std::string& name) const;
    const CheckpointRecord& require(const std::string& name) const;
};

std::string serialize_checkpoint(const CheckpointFile& file);
CheckpointFile parse_checkpoint(const std::string& bytes);
// Written to a temporary sibling and renamed into place.
void write_checkpoint(const CheckpointFile& file, const std::filesystem::path& path);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

}  // namespace vtcc
