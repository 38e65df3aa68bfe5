#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

namespace blocksr {

struct ServiceOptions {
  std::string host = "0.0.0.0";
  int port = 8080;
  /// Idle sessions older than this are dropped.
  std::chrono::seconds ttl{3600};
  std::size_t max_upload = 1 << 20;
  std::filesystem::path preset_dir;
  /// Static files mounted at / when nonempty.
  std::filesystem::path ui_dir;
};

/// HTTP facade over the library: sessions, previews, sweeps, pipeline editing,
/// asynchronous search runs and presets.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to options.port (0 picks a free port) and returns the bound port.
  int bind();
  /// Serves until stop() is called. Requires bind().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace blocksr
