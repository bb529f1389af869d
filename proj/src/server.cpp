#include "cellflow/server.hpp"

#include <map>
#include <mutex>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "cellflow/annotation.hpp"
#include "cellflow/error.hpp"
#include "cellflow/formats.hpp"
#include "cellflow/image_io.hpp"

namespace cellflow::server {

namespace {

using nlohmann::json;

const std::regex kIdPattern("^[A-Za-z0-9_.-]+$");

bool valid_id(const std::string& id) {
  return std::regex_match(id, kIdPattern) && id != "." && id != "..";
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::string& path = {}) {
  json body = {{"error", message}};
  if (!path.empty()) body["path"] = path;
  send_json(res, status, body);
}

}  // namespace

struct AnnotationServer::Impl {
  ServerOptions options;
  httplib::Server http;
  int port = -1;

  std::mutex state_guard;
  bool stopping = false;
  bool serving = false;

  std::mutex locks_guard;
  std::map<std::string, std::shared_ptr<std::mutex>> file_locks;

  std::shared_ptr<std::mutex> lock_for(const std::string& id) {
    std::lock_guard guard(locks_guard);
    auto& slot = file_locks[id];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }

  std::filesystem::path annotation_path(const std::string& id) const {
    return options.annotations_dir / (id + ".json");
  }

  void list_videos(httplib::Response& res) const {
    json out = json::array();
    std::vector<std::filesystem::path> dirs;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(options.frames_dir, ec)) {
      if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      const auto frames = image_io::list_frames(dir);
      if (frames.empty()) continue;
      const auto size = image_io::read_png_size(frames.front());
      out.push_back({{"id", dir.filename().string()},
                     {"frame_count", frames.size()},
                     {"width", size.width},
                     {"height", size.height}});
    }
    send_json(res, 200, out);
  }

  void get_frame(const std::string& id, const std::string& index, httplib::Response& res) const {
    const auto dir = options.frames_dir / id;
    if (!valid_id(id) || !std::filesystem::is_directory(dir)) {
      return send_error(res, 404, "unknown video '" + id + "'");
    }
    const auto frames = image_io::list_frames(dir);
    const std::size_t k = std::stoul(index);
    if (k >= frames.size()) return send_error(res, 404, "frame index out of range");
    res.status = 200;
    res.set_content(formats::read_file(frames[k]), "image/png");
  }

  void get_annotation(const std::string& id, httplib::Response& res) {
    if (!valid_id(id)) return send_error(res, 400, "invalid annotation id");
    auto lock = lock_for(id);
    std::lock_guard guard(*lock);
    const auto path = annotation_path(id);
    if (!std::filesystem::exists(path)) return send_error(res, 404, "no annotation '" + id + "'");
    res.status = 200;
    res.set_content(formats::read_file(path), "application/json");
  }

  void post_annotation(const std::string& id, const httplib::Request& req,
                       httplib::Response& res) {
    if (!valid_id(id)) return send_error(res, 400, "invalid annotation id");
    try {
      annotation::parse_text(req.body);
    } catch (const ValidationError& e) {
      return send_error(res, 400, e.what(), e.path());
    } catch (const IntegrityError& e) {
      return send_error(res, 400, e.what(), "$.neurites");
    }
    auto lock = lock_for(id);
    std::lock_guard guard(*lock);
    std::filesystem::create_directories(options.annotations_dir);
    formats::write_file_atomic(annotation_path(id), req.body);
    send_json(res, 201, {{"id", id}});
  }

  void install_routes() {
    // httplib also sets SO_REUSEPORT, which lets a second server share a busy port.
    http.set_socket_options([](auto sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    http.Get("/api/videos", [this](const httplib::Request&, httplib::Response& res) {
      list_videos(res);
    });
    http.Get(R"(/api/videos/([^/]+)/frames/(\d+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               get_frame(req.matches[1], req.matches[2], res);
             });
    http.Get(R"(/api/annotations/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               get_annotation(req.matches[1], res);
             });
    http.Post(R"(/api/annotations/([^/]+))",
              [this](const httplib::Request& req, httplib::Response& res) {
                post_annotation(req.matches[1], req, res);
              });
    http.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200,
                {{"px_per_micron", options.px_per_micron},
                 {"contrast_cutoff", options.contrast_cutoff}});
    });
    http.set_exception_handler(
        [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
          try {
            std::rethrow_exception(ep);
          } catch (const InputError& e) {
            send_error(res, 400, e.what());
          } catch (const std::exception& e) {
            send_error(res, 500, e.what());
          }
        });
  }
};

AnnotationServer::AnnotationServer(ServerOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  impl_->install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind() {
  const auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->http.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->http.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) {
    throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void AnnotationServer::run() {
  if (impl_->port < 0) bind();
  {
    std::lock_guard guard(impl_->state_guard);
    if (impl_->stopping) return;
    impl_->serving = true;
  }
  impl_->http.listen_after_bind();
  std::lock_guard guard(impl_->state_guard);
  impl_->serving = false;
}

void AnnotationServer::stop() {
  if (!impl_) return;
  {
    std::lock_guard guard(impl_->state_guard);
    impl_->stopping = true;
    if (!impl_->serving) return;
  }
  // a stop issued before the accept loop starts would otherwise be lost
  impl_->http.wait_until_ready();
  impl_->http.stop();
}

}  // namespace cellflow::server
