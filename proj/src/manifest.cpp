#include "statfuse/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <json.hpp>

#include "statfuse/errors.hpp"

namespace statfuse {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("sha256: cannot open " + path);

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof buffer);
    EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::ordered_json j;
  j["tool"] = "statfuse";
  j["version"] = kVersion;
  j["subcommand"] = manifest.subcommand;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [flag, value] : manifest.config) config[flag] = value;
  j["config"] = config;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  for (const auto& e : manifest.inputs) inputs[e.path] = e.sha256;
  j["inputs"] = inputs;
  nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
  for (const auto& e : manifest.outputs) outputs[e.path] = e.sha256;
  j["outputs"] = outputs;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace statfuse
