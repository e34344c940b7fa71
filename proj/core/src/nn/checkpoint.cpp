#include "setpose/nn/checkpoint.hpp"

#include <string>

#include "../binary_io.hpp"
#include "../file_io.hpp"
#include "setpose/error.hpp"

namespace setpose::nn {

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "params.bin";
constexpr std::size_t kHeaderBytes = 8;

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint) {
  detail::make_dirs(dir);
  std::string blob(kCheckpointMagic, 4);
  detail::put_u32(blob, kCheckpointVersion);

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, m] : checkpoint.params) {
    tensors.push_back({{"name", name},
                       {"shape", {m.rows(), m.cols()}},
                       {"offset", blob.size()},
                       {"count", m.size()}});
    for (double v : m.values()) detail::put_f64(blob, v);
  }
  nlohmann::json manifest = {{"format", "PSTO"},
                             {"version", kCheckpointVersion},
                             {"dtype", "f64"},
                             {"byte_order", "little"},
                             {"blob", kBlobName},
                             {"blob_bytes", blob.size()},
                             {"optimizer_step", checkpoint.optimizer_step},
                             {"tensors", tensors},
                             {"metadata", checkpoint.metadata}};
  detail::write_file(dir / kBlobName, blob);
  detail::write_file(dir / kManifestName, manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  if (!std::filesystem::exists(manifest_path)) {
    throw IoError("checkpoint manifest not found: '" + manifest_path.string() + "'");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + manifest_path.string() + "': " + e.what());
  }

  Checkpoint out;
  try {
    if (manifest.at("format") != "PSTO" || manifest.at("version") != kCheckpointVersion ||
        manifest.at("dtype") != "f64") {
      throw FormatError("'" + manifest_path.string() + "': unsupported checkpoint format/version");
    }
    const auto blob_path = dir / manifest.at("blob").get<std::string>();
    const std::string blob = detail::read_file(blob_path);
    if (blob.size() < kHeaderBytes || blob.compare(0, 4, kCheckpointMagic, 4) != 0) {
      throw FormatError("'" + blob_path.string() + "': bad magic");
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (detail::get_u32(bytes + 4) != kCheckpointVersion) {
      throw FormatError("'" + blob_path.string() + "': unsupported blob version");
    }
    if (blob.size() != manifest.at("blob_bytes").get<std::size_t>()) {
      throw FormatError("'" + blob_path.string() + "': size does not match manifest");
    }
    for (const auto& t : manifest.at("tensors")) {
      const auto rows = t.at("shape").at(0).get<std::size_t>();
      const auto cols = t.at("shape").at(1).get<std::size_t>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (count != rows * cols || offset < kHeaderBytes || offset + 8 * count > blob.size()) {
        throw FormatError("'" + blob_path.string() + "': tensor '" +
                          t.at("name").get<std::string>() + "' out of bounds");
      }
      Matrix m(rows, cols);
      auto values = m.values();
      for (std::size_t i = 0; i < count; ++i) values[i] = detail::get_f64(bytes + offset + 8 * i);
      out.params.add(t.at("name").get<std::string>(), std::move(m));
    }
    out.optimizer_step = manifest.at("optimizer_step").get<std::uint64_t>();
    out.metadata = manifest.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + manifest_path.string() + "': " + e.what());
  }
  return out;
}

}  // namespace setpose::nn
