#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdi/datasets.hpp"
#include "sdi/eval.hpp"
#include "sdi/kinematics.hpp"

namespace httplib {
class Server;
}

namespace sdi::service {

enum class SessionState { kSceneLoaded, kSketched, kFitted, kSolved };

std::string_view state_name(SessionState state);

/// Request failure carried to the HTTP layer: status plus an error class.
class RequestError : public Error {
 public:
  RequestError(int status, ErrorCode code, const std::string& message)
      : Error(code, message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// One sketching session over a fixed scene. Not thread-safe on its own;
/// Service serializes writers per session.
class Session {
 public:
  Session(datasets::SceneSpec scene, const kinematics::KinematicChain* chain);

  SessionState state() const { return state_; }

  nlohmann::json scene_json() const;
  /// Grayscale BMP of the depth image (near is bright, invalid is black).
  std::string scene_image() const;

  /// Validates and stores a sketch; any fit or solve results are dropped.
  nlohmann::json add_sketch(const nlohmann::json& body);
  nlohmann::json clear_sketches();
  nlohmann::json fit(const nlohmann::json& body);
  nlohmann::json solve(const nlohmann::json& body);
  nlohmann::json result(int id) const;

 private:
  datasets::SceneSpec scene_with_sketches() const;

  datasets::SceneSpec scene_;
  const kinematics::KinematicChain* chain_;
  std::vector<geometry::Sketch> sketches_;
  std::vector<int> sketch_ids_;
  int next_sketch_id_ = 1;
  SessionState state_ = SessionState::kSceneLoaded;
  std::optional<eval::SceneModels> models_;
  datasets::SceneSpec fitted_scene_;
  std::map<int, nlohmann::json> results_;
  int next_result_id_ = 1;
};

/// Session registry plus HTTP routes. Sessions are keyed by the
/// X-Session-Id header ("default" when absent).
class Service {
 public:
  Service(datasets::SceneSpec scene, kinematics::KinematicChain chain, bool preload_sketches = false);

  void install(httplib::Server& server);

 private:
  struct Entry {
    std::shared_mutex mutex;
    std::unique_ptr<Session> session;
  };
  Entry& entry(const std::string& id);

  datasets::SceneSpec scene_;
  kinematics::KinematicChain chain_;
  bool preload_;
  std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

/// Encodes an 8-bit grayscale image (row-major, top row first) as 24-bit BMP.
std::string encode_bmp(int width, int height, const std::vector<std::uint8_t>& gray);

/// Binds and serves until stopped. kPortInUse when the port cannot be bound.
void serve(Service& service, const std::string& host, int port);

}  // namespace sdi::service
