#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "denseil/tensor.hpp"

namespace denseil {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint layout, all integers little-endian:
//   "DIL1"
//   repeated: u32 name_len | name (UTF-8) | u32 rank | u64 extent[rank] |
//             f32 values[product(extents)]
struct CheckpointRecord {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<float> values;
};

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointRecord>& records);

std::vector<CheckpointRecord> to_records(const ParamStore& params);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
/// Copies every record into the same-named tensor; names and shapes must
/// match the store exactly.
void load_checkpoint(const std::filesystem::path& path, ParamStore& params);

namespace le {
void put_u32(std::vector<char>& out, std::uint32_t v);
void put_u64(std::vector<char>& out, std::uint64_t v);
void put_f32(std::vector<char>& out, float v);
std::uint32_t get_u32(const char* p);
std::uint64_t get_u64(const char* p);
float get_f32(const char* p);
}  // namespace le

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace denseil
