#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "metsyn/volume.hpp"

namespace metsyn {

namespace {

using nlohmann::json;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

struct Header {
  Index3 dims;
  Spacing3 spacing;
  std::string dtype;
};

std::string header_text(const Index3 &d, const Spacing3 &s, const char *dtype) {
  json h = {{"dims", {d[0], d[1], d[2]}},
            {"spacing", {s[0], s[1], s[2]}},
            {"dtype", dtype},
            {"order", "x-fastest"},
            {"byteorder", "little"}};
  return h.dump();
}

std::string slurp(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Header parse_header(const std::string &bytes, std::size_t &payload_offset,
                    const std::filesystem::path &path) {
  const auto term = bytes.find(std::string("\n\0", 2));
  if (term == std::string::npos)
    throw InputError(path.string() + ": malformed header (missing newline/NUL terminator)");
  payload_offset = term + 2;
  json h;
  try {
    h = json::parse(bytes.substr(0, term));
  } catch (const json::exception &e) {
    throw InputError(path.string() + ": malformed header JSON: " + e.what());
  }
  Header out{};
  try {
    const auto &d = h.at("dims");
    const auto &s = h.at("spacing");
    if (!d.is_array() || d.size() != 3 || !s.is_array() || s.size() != 3)
      throw InputError(path.string() + ": dims and spacing must have three entries");
    for (int a = 0; a < 3; ++a) {
      out.dims[a] = d[a].get<std::int64_t>();
      out.spacing[a] = s[a].get<double>();
      if (out.dims[a] < 1 || !(out.spacing[a] > 0.0) || !std::isfinite(out.spacing[a]))
        throw InputError(path.string() + ": invalid dims or spacing");
    }
    out.dtype = h.at("dtype").get<std::string>();
    if (h.at("order").get<std::string>() != "x-fastest")
      throw InputError(path.string() + ": unsupported order");
    if (h.at("byteorder").get<std::string>() != "little")
      throw InputError(path.string() + ": unsupported byteorder");
  } catch (const json::exception &e) {
    throw InputError(path.string() + ": malformed header: " + e.what());
  }
  return out;
}

template <typename T>
std::vector<T> decode_payload(const std::string &bytes, std::size_t offset, const Header &h,
                              const std::filesystem::path &path) {
  const auto n = static_cast<std::size_t>(h.dims[0] * h.dims[1] * h.dims[2]);
  const std::size_t have = bytes.size() - offset;
  if (have != n * sizeof(T))
    throw InputError(path.string() + ": payload size mismatch (expected " +
                     std::to_string(n * sizeof(T)) + " bytes, found " + std::to_string(have) + ")");
  std::vector<T> data(n);
  std::memcpy(data.data(), bytes.data() + offset, n * sizeof(T));
  for (auto &v : data) v = to_little(v);
  return data;
}

template <typename T>
void write_file(const std::filesystem::path &path, const std::string &header,
                std::span<const T> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.put('\n');
  out.put('\0');
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char *>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(T)));
  } else {
    for (T v : data) {
      v = to_little(v);
      out.write(reinterpret_cast<const char *>(&v), sizeof(T));
    }
  }
  if (!out) throw InputError("I/O failure writing " + path.string());
}

} // namespace

Volume read_volume(const std::filesystem::path &path) {
  const std::string bytes = slurp(path);
  std::size_t off = 0;
  const Header h = parse_header(bytes, off, path);
  if (h.dtype != "f32") throw InputError(path.string() + ": expected dtype f32, got " + h.dtype);
  auto data = decode_payload<float>(bytes, off, h, path);
  for (float v : data)
    if (!std::isfinite(v)) throw InputError(path.string() + ": non-finite voxel value");
  return Volume(h.dims, h.spacing, std::move(data));
}

void write_volume(const Volume &v, const std::filesystem::path &path) {
  if (!all_finite(v)) throw InvalidArgument("write_volume: non-finite voxel value");
  write_file<float>(path, header_text(v.dims(), v.spacing(), "f32"), v.data());
}

Mask read_mask(const std::filesystem::path &path) {
  const std::string bytes = slurp(path);
  std::size_t off = 0;
  const Header h = parse_header(bytes, off, path);
  if (h.dtype != "u8") throw InputError(path.string() + ": expected dtype u8, got " + h.dtype);
  auto data = decode_payload<std::uint8_t>(bytes, off, h, path);
  for (auto v : data)
    if (v > 1) throw InputError(path.string() + ": mask values must be 0 or 1");
  return Mask(h.dims, h.spacing, std::move(data));
}

void write_mask(const Mask &m, const std::filesystem::path &path) {
  if (!is_binary(m)) throw InvalidArgument("write_mask: mask values must be 0 or 1");
  write_file<std::uint8_t>(path, header_text(m.dims(), m.spacing(), "u8"), m.data());
}

} // namespace metsyn
