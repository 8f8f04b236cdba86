#include "impact/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "impact/errors.hpp"

namespace impact {

namespace {

using nlohmann::json;

constexpr std::array<char, 8> kMagic = {'I', 'M', 'P', 'C', 'K', 'P', 'T', '1'};

json layout_json(const NetLayout& layout) {
  return json{{"sizes", layout.sizes},
              {"head", to_string(layout.head)},
              {"shared_value", layout.shared_value},
              {"log_std_init", layout.log_std_init},
              {"log_std_min", layout.log_std_min},
              {"log_std_max", layout.log_std_max}};
}

NetLayout parse_layout(const json& j) {
  NetLayout layout;
  layout.sizes = j.at("sizes").get<std::vector<int>>();
  layout.head = head_kind_from_string(j.at("head").get<std::string>());
  layout.shared_value = j.at("shared_value").get<bool>();
  layout.log_std_init = j.at("log_std_init").get<double>();
  layout.log_std_min = j.at("log_std_min").get<double>();
  layout.log_std_max = j.at("log_std_max").get<double>();
  layout.validate();
  return layout;
}

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("truncated checkpoint");
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

ParamSet rebuild(const NetLayout& layout, std::uint64_t version, const Eigen::VectorXd& flat) {
  ParamSet params = init_params(layout, 0);
  params.tensors.assign_flat(flat);
  params.version = version;
  return params;
}

}  // namespace

CheckpointFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? CheckpointFormat::json : CheckpointFormat::binary;
}

std::string layout_to_json(const NetLayout& layout) { return layout_json(layout).dump(); }

NetLayout layout_from_json(const std::string& text) { return parse_layout(json::parse(text)); }

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  save_checkpoint(path, params, format_for(path));
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, CheckpointFormat format) {
  const Eigen::VectorXd flat = params.tensors.flatten();
  std::string out;
  if (format == CheckpointFormat::json) {
    json j{{"format", "impact-params"},
           {"version", params.version},
           {"layout", layout_json(params.layout)},
           {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
    out = j.dump();
  } else {
    const std::string header =
        json{{"version", params.version}, {"layout", layout_json(params.layout)}, {"count", flat.size()}}.dump();
    out.append(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (Eigen::Index i = 0; i < flat.size(); ++i) put_le<double>(out, flat(i));
  }
  // Write-then-rename so an interrupted save never leaves a torn file.
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
  }
  std::filesystem::rename(tmp, path);
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open checkpoint: " + path.string());
  const std::string in((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  if (in.size() >= kMagic.size() && std::equal(kMagic.begin(), kMagic.end(), in.begin())) {
    std::size_t pos = kMagic.size();
    const auto header_len = get_le<std::uint32_t>(in, pos);
    if (pos + header_len > in.size()) throw std::runtime_error("truncated checkpoint header");
    const json header = json::parse(in.substr(pos, header_len));
    pos += header_len;
    const auto count = header.at("count").get<Eigen::Index>();
    Eigen::VectorXd flat(count);
    for (Eigen::Index i = 0; i < count; ++i) flat(i) = get_le<double>(in, pos);
    return rebuild(parse_layout(header.at("layout")), header.at("version").get<std::uint64_t>(), flat);
  }

  const json j = json::parse(in);
  if (j.value("format", "") != "impact-params") throw std::runtime_error("not a parameter checkpoint: " + path.string());
  const auto values = j.at("params").get<std::vector<double>>();
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return rebuild(parse_layout(j.at("layout")), j.at("version").get<std::uint64_t>(), flat);
}

}  // namespace impact
