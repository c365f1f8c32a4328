#pragma once

// HTTP endpoints for the reader client.
//
//   GET  /api/session/next        -> {item_id, image_png_base64, done}
//   POST /api/session/annotation  <- {item_id, quality, confidence, artifacts,
//                                     mask: {width, height, rle}}
//                                 -> 201 {status, done, total}
//   GET  /api/session/progress    -> {done, total}
//
// Requests carry "Authorization: Bearer <reader token>". Errors are JSON
// {error, reason, message} with 400 (validation), 401 (token), 404 (unknown
// item), 409 (already annotated) or 500.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "sct/study.hpp"

namespace sct::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path store_path;
  std::optional<std::filesystem::path> static_dir;

  /// Reads the "service" section of a resolved config.
  static ServiceConfig from_json(const nlohmann::json& section);
  void validate() const;
};

/// Loads an item's image and renders it as an 8-bit grayscale PNG; HU images
/// are passed through the lung window first.
std::vector<std::uint8_t> render_item_png(const study::StudyStore& store, const study::PresentationItem& item);

class StudyServer {
 public:
  StudyServer(study::StudyStore& store, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port. Throws DataError on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sct::service
