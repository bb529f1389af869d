#pragma once

// Local HTTP service backing the browser annotation tool.
//
//   GET  /api/videos                    [{id, frame_count, width, height}]
//   GET  /api/videos/{id}/frames/{k}    PNG bytes
//   GET  /api/annotations/{id}          stored annotation JSON, 404 if absent
//   POST /api/annotations/{id}          validate, persist, 201
//   GET  /api/config                    {px_per_micron, contrast_cutoff}
//
// Each video is a sub-directory of the frames directory holding PNG frames.
// Annotations are stored verbatim as {id}.json, written to a temp file and
// renamed, one writer per file at a time.

#include <filesystem>
#include <memory>
#include <string>

namespace cellflow::server {

struct ServerOptions {
  std::filesystem::path frames_dir;
  std::filesystem::path annotations_dir;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  double px_per_micron = 1.1939;
  double contrast_cutoff = 0.04;
};

class AnnotationServer {
 public:
  explicit AnnotationServer(ServerOptions options);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Throws IoError when the port cannot be bound. Returns the bound port.
  int bind();
  // Blocks until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cellflow::server
