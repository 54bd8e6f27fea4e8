#include "fedsnt/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedsnt/error.hpp"

namespace fedsnt {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'S', 'N', 'T', '0', '1'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void save_model(const std::filesystem::path& path, const ParameterVector& model) {
  if (model.dim() > 0xffffffffULL) fail(ErrorKind::kInvalidInput, "model too large");
  std::string bytes(kMagic, sizeof kMagic);
  put_le(bytes, model.dim(), 4);
  for (double v : model.values()) put_le(bytes, std::bit_cast<std::uint64_t>(v), 8);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write model " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

ParameterVector load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read model " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    fail(ErrorKind::kInvalidInput, path.string() + " is not a model file");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t dim = get_le(p + 8, 4);
  if (bytes.size() != 12 + 8 * dim) {
    fail(ErrorKind::kInvalidInput, path.string() + ": size does not match dim " + std::to_string(dim));
  }
  std::vector<double> values(dim);
  for (std::uint64_t i = 0; i < dim; ++i) values[i] = std::bit_cast<double>(get_le(p + 12 + 8 * i, 8));
  return ParameterVector(std::move(values));
}

}  // namespace fedsnt
