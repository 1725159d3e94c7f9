#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "voxprompt/segmenter.hpp"

namespace voxprompt {

inline constexpr int kApiVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

struct ServiceConfig {
  std::size_t max_upload_bytes = 256u << 20;
  // Access-Control-Allow-Origin value; unset disables CORS headers.
  std::optional<std::string> cors_origin;
  // How long a request waits for a busy session before answering 503.
  std::chrono::milliseconds session_wait{10000};
  int threads = 4;
};

// HTTP/JSON front end over in-memory volumes and propagation sessions.
class Service {
 public:
  Service(std::shared_ptr<const Segmenter> model, ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port (an ephemeral one when port is 0); throws when
  // the address cannot be bound.
  int bind(const std::string& host, int port);
  // Serves until stop(); returns after in-flight requests finish.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace voxprompt
