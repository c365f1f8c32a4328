#include "sct/service.hpp"

#include <httplib.h>

#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/tomo.hpp"

namespace sct::service {

using nlohmann::json;

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  if (j.contains("store")) c.store_path = j["store"].get<std::string>();
  if (j.contains("static_dir") && !j["static_dir"].is_null()) c.static_dir = j["static_dir"].get<std::string>();
  return c;
}

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw UsageError("service port must be in [0, 65535]");
  if (store_path.empty()) throw UsageError("service.store is not set");
  if (static_dir && !std::filesystem::is_directory(*static_dir))
    throw UsageError("service.static_dir " + static_dir->string() + " is not a directory");
}

std::vector<std::uint8_t> render_item_png(const study::StudyStore& store, const study::PresentationItem& item) {
  const auto path = store.image_path(item);
  ImageGrid img = path.extension() == ".png" ? io::read_png16(path) : io::read_raw_image(path);
  if (img.unit == UnitTag::HU) img = tomo::apply_window(img, tomo::kLungWindow);
  if (img.unit != UnitTag::Normalized) throw DataError("image " + path.string() + " is not displayable");
  return io::encode_png8(img);
}

struct StudyServer::Impl {
  study::StudyStore& store;
  httplib::Server http;
  int port = -1;

  explicit Impl(study::StudyStore& s) : store(s) {}

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& error, const std::string& reason,
                         const std::string& message) {
    send_json(res, status, {{"error", error}, {"reason", reason}, {"message", message}});
  }

  std::optional<study::Reader> authenticate(const httplib::Request& req, httplib::Response& res) {
    const std::string header = req.get_header_value("Authorization");
    const std::string scheme = "Bearer ";
    if (header.rfind(scheme, 0) == 0) {
      if (auto r = store.reader_by_token(header.substr(scheme.size()))) return r;
    }
    send_error(res, 401, "unauthorized", "bad_token", "missing or unknown reader token");
    return std::nullopt;
  }

  void next(const httplib::Request& req, httplib::Response& res) {
    const auto reader = authenticate(req, res);
    if (!reader) return;
    const auto item = store.next_item(reader->reader_id);
    if (!item) {
      send_json(res, 200, {{"done", true}});
      return;
    }
    try {
      const auto png = render_item_png(store, *item);
      send_json(res, 200, {{"item_id", item->item_id}, {"image_png_base64", io::base64_encode(png)}, {"done", false}});
    } catch (const std::exception& e) {
      send_error(res, 500, "server_error", "image_unavailable", e.what());
    }
  }

  void progress(const httplib::Request& req, httplib::Response& res) {
    const auto reader = authenticate(req, res);
    if (!reader) return;
    const auto p = store.progress(reader->reader_id);
    send_json(res, 200, {{"done", p.done}, {"total", p.total}});
  }

  void annotate(const httplib::Request& req, httplib::Response& res) {
    const auto reader = authenticate(req, res);
    if (!reader) return;
    study::Annotation ann;
    ann.reader_id = reader->reader_id;
    try {
      const json body = json::parse(req.body);
      ann.item_id = body.at("item_id").get<std::string>();
      ann.quality = body.at("quality").get<int>();
      ann.confidence = body.at("confidence").get<int>();
      ann.artifacts = body.at("artifacts").get<int>();
      ann.mask = io::mask_from_json(body.at("mask"));
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", "malformed_body", e.what());
      return;
    } catch (const DataError& e) {
      send_error(res, 400, "bad_request", "malformed_mask", e.what());
      return;
    }
    try {
      store.record_annotation(ann);
    } catch (const study::AnnotationError& e) {
      send_error(res, e.reason() == "unknown_item" ? 404 : 400, e.reason() == "unknown_item" ? "not_found" : "bad_request",
                 e.reason(), e.what());
      return;
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", "already_annotated", e.what());
      return;
    } catch (const std::exception& e) {
      send_error(res, 500, "server_error", "store_failure", e.what());
      return;
    }
    const auto p = store.progress(reader->reader_id);
    send_json(res, 201, {{"status", "recorded"}, {"done", p.done}, {"total", p.total}});
  }
};

StudyServer::StudyServer(study::StudyStore& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store)) {
  auto& http = impl_->http;
  Impl* self = impl_.get();
  http.Get("/api/session/next", [self](const httplib::Request& q, httplib::Response& r) { self->next(q, r); });
  http.Get("/api/session/progress", [self](const httplib::Request& q, httplib::Response& r) { self->progress(q, r); });
  http.Post("/api/session/annotation", [self](const httplib::Request& q, httplib::Response& r) { self->annotate(q, r); });
  if (static_dir) {
    if (!http.set_mount_point("/", static_dir->string()))
      throw UsageError("cannot serve static files from " + static_dir->string());
  }
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  auto& http = impl_->http;
  if (port == 0) {
    impl_->port = http.bind_to_any_port(host);
  } else {
    impl_->port = http.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw DataError("cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void StudyServer::serve() { impl_->http.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_) impl_->http.stop();
}

bool StudyServer::running() const { return impl_->http.is_running(); }

}  // namespace sct::service
