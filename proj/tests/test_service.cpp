#include <doctest.h>

#include <thread>

#include "sdi/error.hpp"
#include "sdi/service.hpp"
#include "support.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace sdi;
using json = nlohmann::json;

namespace {

/// The drawer scene served on an ephemeral local port for one test case.
class Fixture {
 public:
  Fixture()
      : scene_(datasets::generate_scene("drawer")),
        service_(scene_, kinematics::load_chain(kinematics::bundled_arm_path())) {
    service_.install(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Fixture() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  const datasets::SceneSpec& scene() const { return scene_; }

  httplib::Result get(const std::string& path, const std::string& session = "") {
    return client().Get(path, headers(session));
  }
  httplib::Result post(const std::string& path, const json& body, const std::string& session = "") {
    return client().Post(path, headers(session), body.dump(), "application/json");
  }
  httplib::Result del(const std::string& path, const std::string& session = "") {
    return client().Delete(path, headers(session));
  }

  json sketch_body(geometry::RegionLabel label) const {
    for (const auto& s : scene_.sketches) {
      if (s.label != label) continue;
      json vertices = json::array();
      for (const auto& v : s.vertices) vertices.push_back({v.x(), v.y()});
      return {{"label", std::string(geometry::label_name(label))}, {"vertices", vertices}};
    }
    FAIL("scene has no such sketch");
    return {};
  }

 private:
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(600, 0);
    return c;
  }
  static httplib::Headers headers(const std::string& session) {
    if (session.empty()) return {};
    return {{"X-Session-Id", session}};
  }

  datasets::SceneSpec scene_;
  service::Service service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const json kFit = {{"epochs", 40}, {"max_points", 1000}, {"seed", 1}};
const json kSolve = {{"samples", 128}, {"iterations", 12}, {"seed", 2}};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("scene description and image") {
  Fixture f;
  auto r = f.get("/api/scene");
  REQUIRE(r);
  CHECK(r->status == 200);
  const json scene = json::parse(r->body);
  CHECK(scene["name"] == "drawer");
  CHECK(scene["state"] == "scene-loaded");
  CHECK(scene["width"] == f.scene().depth.width);
  CHECK(scene["height"] == f.scene().depth.height);
  CHECK(scene["camera"]["fx"] == f.scene().camera.fx);
  CHECK(scene["limits"]["z_max"] == f.scene().limits.z_max);
  CHECK(scene["sketches"].empty());

  auto img = f.get("/api/scene/image");
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/bmp");
  CHECK(img->body.substr(0, 2) == "BM");
  const std::size_t row = (static_cast<std::size_t>(f.scene().depth.width) * 3 + 3) & ~std::size_t{3};
  CHECK(img->body.size() == 54 + row * f.scene().depth.height);
}

TEST_CASE("sketch validation and state guards") {
  Fixture f;
  auto bad = f.post("/api/sketch", {{"label", "roi"}, {"vertices", {{1, 1}, {5, 5}}}});
  REQUIRE(bad);
  CHECK(bad->status == 422);
  CHECK(json::parse(bad->body)["error"]["class"] == "empty-region");
  CHECK(json::parse(bad->body)["error"]["code"] == 12);

  auto label = f.post("/api/sketch", {{"label", "floor"}, {"vertices", {{1, 1}, {5, 1}, {5, 5}}}});
  REQUIRE(label);
  CHECK(label->status == 422);

  auto garbage = f.post("/api/sketch", json("not an object"));
  REQUIRE(garbage);
  CHECK(garbage->status == 422);

  auto fit = f.post("/api/fit", kFit);
  REQUIRE(fit);
  CHECK(fit->status == 409);
  auto solve = f.post("/api/solve", kSolve);
  REQUIRE(solve);
  CHECK(solve->status == 409);
  auto missing = f.get("/api/result/999");
  REQUIRE(missing);
  CHECK(missing->status == 404);
}

TEST_CASE("sketch, fit, solve and fetch the result") {
  Fixture f;
  const json roi = f.sketch_body(geometry::RegionLabel::kRegionOfInterest);
  const json id = body_of(f.post("/api/sketch", roi));
  CHECK(id["id"] == 1);
  CHECK(id["state"] == "sketched");
  CHECK(body_of(f.post("/api/sketch", f.sketch_body(geometry::RegionLabel::kPermissible)))["id"] == 2);

  const json scene = body_of(f.get("/api/scene"));
  REQUIRE(scene["sketches"].size() == 2);
  CHECK(scene["sketches"][0]["vertices"] == roi["vertices"]);

  const json fit = body_of(f.post("/api/fit", kFit));
  CHECK(fit["state"] == "fitted");
  CHECK(fit["roi"]["input_dim"] == 3);
  CHECK(fit["constraint"]["input_dim"] == 2);
  const json& grid = fit["preview"]["roi"]["world"];
  CHECK(grid["values"].size() == grid["nx"].get<std::size_t>() * grid["ny"].get<std::size_t>());
  const json& image = fit["preview"]["constraint"]["image"];
  CHECK(image["values"].size() == image["width"].get<std::size_t>() * image["height"].get<std::size_t>());

  const json solved = body_of(f.post("/api/solve", kSolve));
  REQUIRE_MESSAGE(!solved.contains("error"), solved.dump());
  CHECK(solved["trace"].size() == 12);
  CHECK(solved["restarts"] == 1);
  const json& p = solved["placement"];
  CHECK(p["z"].get<double>() >= f.scene().limits.z_min);
  CHECK(p["z"].get<double>() <= f.scene().limits.z_max);
  const Eigen::Vector3d pixel = geometry::reproject_point(
      f.scene().camera, {p["x"].get<double>(), p["y"].get<double>(), 0.0});
  CHECK(solved["pixel"]["u"].get<double>() == doctest::Approx(pixel.x()));
  CHECK(solved["pixel"]["v"].get<double>() == doctest::Approx(pixel.y()));
  CHECK(body_of(f.get("/api/scene"))["state"] == "solved");

  const json fetched = body_of(f.get("/api/result/" + std::to_string(solved["id"].get<int>())));
  CHECK(fetched == solved);
  auto again = f.post("/api/solve", kSolve);
  CHECK(body_of(again)["placement"] == solved["placement"]);

  CHECK(body_of(f.post("/api/sketch", roi))["state"] == "sketched");
  auto gone = f.get("/api/result/" + std::to_string(solved["id"].get<int>()));
  REQUIRE(gone);
  CHECK(gone->status == 404);

  CHECK(body_of(f.del("/api/sketch"))["state"] == "scene-loaded");
  CHECK(body_of(f.get("/api/scene"))["sketches"].empty());
}

TEST_CASE("bad numeric fields are rejected") {
  Fixture f;
  body_of(f.post("/api/sketch", f.sketch_body(geometry::RegionLabel::kRegionOfInterest)));
  auto r = f.post("/api/fit", {{"epochs", "many"}});
  REQUIRE(r);
  CHECK(r->status == 422);
  CHECK(json::parse(r->body)["error"]["class"] == "configuration");
}

TEST_CASE("sessions are isolated") {
  Fixture f;
  body_of(f.post("/api/sketch", f.sketch_body(geometry::RegionLabel::kRegionOfInterest), "alice"));
  CHECK(body_of(f.get("/api/scene", "alice"))["state"] == "sketched");
  CHECK(body_of(f.get("/api/scene", "bob"))["state"] == "scene-loaded");
  CHECK(body_of(f.get("/api/scene"))["state"] == "scene-loaded");
}

TEST_CASE("preloaded sketches") {
  const auto scene = datasets::generate_scene("drawer");
  service::Service svc(scene, kinematics::load_chain(kinematics::bundled_arm_path()), true);
  httplib::Server server;
  svc.install(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client c("127.0.0.1", port);
  auto r = c.Get("/api/scene");
  server.stop();
  t.join();
  REQUIRE(r);
  const json body = json::parse(r->body);
  CHECK(body["state"] == "sketched");
  CHECK(body["sketches"].size() == scene.sketches.size());
}

TEST_CASE("occupied port") {
  httplib::Server holder;
  const int port = holder.bind_to_any_port("127.0.0.1");
  service::Service svc(datasets::generate_scene("drawer"), kinematics::load_chain(kinematics::bundled_arm_path()));
  try {
    service::serve(svc, "127.0.0.1", port);
    FAIL("expected the bind to fail");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kPortInUse);
  }
}

TEST_CASE("bitmap encoding") {
  const std::string bmp = service::encode_bmp(2, 1, {0, 255});
  CHECK(bmp.size() == 54 + 8);
  CHECK(static_cast<unsigned char>(bmp[54]) == 0);
  CHECK(static_cast<unsigned char>(bmp[57]) == 255);
  CHECK_THROWS_AS(service::encode_bmp(2, 2, {0}), Error);
}

}
