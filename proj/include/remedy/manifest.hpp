#pragma once

// Run manifests: what was run, with which configuration and seed, on which
// inputs, producing which outputs. No timestamps or host details, so a rerun
// in stub mode reproduces the manifest byte for byte.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "remedy/error.hpp"
#include "remedy/io.hpp"

#ifndef REMEDY_VERSION
#define REMEDY_VERSION "0.0.0"
#endif

namespace remedy::manifest {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kFormat = "remedy-manifest/1";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kInput, "sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string file_sha256(const std::filesystem::path& path) {
  return sha256_hex(io::read_file(path));
}

struct FileDigest {
  std::string path;  // as given on the command line
  std::string sha256;
};

class Recorder {
 public:
  Recorder(std::string subcommand, std::vector<std::string> argv, std::filesystem::path out_dir)
      : subcommand_(std::move(subcommand)), argv_(std::move(argv)), out_dir_(std::move(out_dir)) {}

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_config(json config) { config_ = std::move(config); }

  // Records an input file's digest. Returns the path for convenience.
  const std::string& input(const std::string& path) {
    inputs_.push_back({path, file_sha256(path)});
    return path;
  }

  std::filesystem::path resolve_output(const std::string& path) const {
    const std::filesystem::path p = path;
    return p.is_absolute() ? p : out_dir_ / p;
  }

  void output(const std::string& path, const std::string& content) {
    io::write_file(resolve_output(path), content);
    outputs_.push_back({path, sha256_hex(content)});
  }

  ordered_json to_json() const {
    auto digests = [](const std::vector<FileDigest>& files) {
      ordered_json arr = ordered_json::array();
      for (const auto& f : files) {
        ordered_json one;
        one["path"] = f.path;
        one["sha256"] = f.sha256;
        arr.push_back(std::move(one));
      }
      return arr;
    };
    ordered_json j;
    j["format"] = kFormat;
    j["version"] = REMEDY_VERSION;
    j["subcommand"] = subcommand_;
    j["argv"] = argv_;
    j["seed"] = seed_;
    j["config"] = ordered_json::parse(config_.dump());
    j["inputs"] = digests(inputs_);
    j["outputs"] = digests(outputs_);
    return j;
  }

  // Written next to the primary output as "<primary>.manifest.json".
  std::filesystem::path write(const std::string& primary_output) const {
    const auto path = resolve_output(primary_output + ".manifest.json");
    io::write_file(path, to_json().dump(2) + "\n");
    return path;
  }

 private:
  std::string subcommand_;
  std::vector<std::string> argv_;
  std::filesystem::path out_dir_;
  std::uint64_t seed_ = 0;
  json config_ = json::object();
  std::vector<FileDigest> inputs_;
  std::vector<FileDigest> outputs_;
};

}  // namespace remedy::manifest
