#include "denseil/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace denseil {

namespace le {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::vector<char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace le

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

namespace {

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError(what_ + ": truncated file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, path.string());
  if (std::memcmp(r.take(4), "DIL1", 4) != 0) {
    throw IoError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::vector<CheckpointRecord> records;
  while (!r.done()) {
    CheckpointRecord rec;
    const auto name_len = le::get_u32(r.take(4));
    const char* name = r.take(name_len);
    rec.name.assign(name, name_len);
    const auto rank = le::get_u32(r.take(4));
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      rec.extents.push_back(le::get_u64(r.take(8)));
      count *= rec.extents.back();
    }
    rec.values.resize(count);
    const char* data = r.take(count * 4);
    for (std::uint64_t i = 0; i < count; ++i) rec.values[i] = le::get_f32(data + 4 * i);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointRecord>& records) {
  std::vector<char> out{'D', 'I', 'L', '1'};
  for (const auto& rec : records) {
    le::put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out.insert(out.end(), rec.name.begin(), rec.name.end());
    le::put_u32(out, static_cast<std::uint32_t>(rec.extents.size()));
    for (auto e : rec.extents) le::put_u64(out, e);
    for (float v : rec.values) le::put_f32(out, v);
  }
  write_file(path, out);
}

std::vector<CheckpointRecord> to_records(const ParamStore& params) {
  std::vector<CheckpointRecord> records;
  for (const auto& p : params.params()) {
    CheckpointRecord rec;
    rec.name = p.name;
    for (auto e : p.tensor.shape()) rec.extents.push_back(e);
    for (double v : p.tensor.values()) rec.values.push_back(static_cast<float>(v));
    records.push_back(std::move(rec));
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  write_checkpoint(path, to_records(params));
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  const auto records = read_checkpoint(path);
  if (records.size() != params.params().size()) {
    throw IoError(path.string() + ": checkpoint has " + std::to_string(records.size()) +
                  " records, model expects " + std::to_string(params.params().size()));
  }
  for (const auto& rec : records) {
    if (!params.contains(rec.name)) {
      throw IoError(path.string() + ": unexpected record " + rec.name);
    }
    Tensor& t = params.get(rec.name);
    Shape shape(rec.extents.begin(), rec.extents.end());
    if (shape != t.shape()) {
      throw IoError(path.string() + ": shape mismatch for " + rec.name);
    }
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = rec.values[i];
  }
}

}  // namespace denseil
