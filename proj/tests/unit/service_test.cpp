#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <sstream>
#include <thread>

#include "blocksr/codec.hpp"
#include "blocksr/pipeline.hpp"
#include "blocksr/png_io.hpp"
#include "blocksr/service.hpp"
#include "cli.hpp"
#include "oracles.hpp"

namespace blocksr {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const fs::path kSource = BLOCKSR_SOURCE_DIR;

std::string png_bytes(const RasterImage& img) {
  const auto v = encode_png(img);
  return std::string(v.begin(), v.end());
}

RasterImage png_image(const std::string& body) {
  return decode_png(std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
}

std::string base64_decode(const std::string& in) {
  static const std::string alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  unsigned buffer = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    buffer = (buffer << 6) | static_cast<unsigned>(alphabet.find(c));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buffer >> bits) & 0xFF));
    }
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceOptions opts;
    opts.host = "127.0.0.1";
    opts.port = 0;
    opts.max_upload = 64 * 1024;
    opts.preset_dir = kSource / "presets";
    service_ = std::make_unique<Service>(opts);
    const int port = service_->bind();
    thread_ = std::thread([this] { service_->serve(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    client_->set_read_timeout(120, 0);
  }

  void TearDown() override {
    service_->stop();
    thread_.join();
    service_.reset();
  }

  httplib::Result upload(const RasterImage& grid, const std::string& step,
                         const RasterImage* reference = nullptr) {
    httplib::MultipartFormDataItems items{{"image", png_bytes(grid), "grid.png", "image/png"},
                                          {"step", step, "", ""}};
    if (reference != nullptr) items.push_back({"reference", png_bytes(*reference), "ref.png", "image/png"});
    return client_->Post("/sessions", items);
  }

  std::string new_session(const RasterImage& grid, const RasterImage* reference = nullptr) {
    const auto r = upload(grid, "4", reference);
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, 201) << r->body;
    return json::parse(r->body).at("id").get<std::string>();
  }

  std::unique_ptr<Service> service_;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceTest, UploadAndPreview) {
  const RasterImage grid = oracle::random_image(8, 8, 3, 1);
  const auto r = upload(grid, "4");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 201) << r->body;
  const json body = json::parse(r->body);
  EXPECT_EQ(body["width"], 32);
  EXPECT_EQ(body["height"], 32);
  EXPECT_EQ(body["channels"], 3);
  EXPECT_EQ(body["step"], 4);
  EXPECT_EQ(body["has_reference"], false);

  const auto p = client_->Get("/sessions/" + body["id"].get<std::string>() + "/preview");
  ASSERT_TRUE(p);
  ASSERT_EQ(p->status, 200);
  EXPECT_EQ(p->get_header_value("Content-Type"), "image/png");
  const RasterImage preview = png_image(p->body);
  EXPECT_EQ(preview, expand_blocks(grid, 4));
}

TEST_F(ServiceTest, LabUpload) {
  const BlockAverageImage lab = BlockAverageImage::from_grid(oracle::random_image(5, 4, 1, 2), 3);
  const auto bytes = encode_lab(lab);
  httplib::MultipartFormDataItems items{{"lab", std::string(bytes.begin(), bytes.end()), "x.lab", ""}};
  const auto r = client_->Post("/sessions", items);
  ASSERT_EQ(r->status, 201) << r->body;
  EXPECT_EQ(json::parse(r->body)["step"], 3);
  const auto p = client_->Get("/sessions/" + json::parse(r->body)["id"].get<std::string>() + "/preview");
  EXPECT_EQ(png_image(p->body), expand(lab));
}

TEST_F(ServiceTest, SweepManifest) {
  const std::string id = new_session(oracle::random_image(8, 8, 1, 3));
  const auto r = client_->Get("/sessions/" + id + "/sweep?L=0..20&theta=0..175&gamma=2.25");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const json body = json::parse(r->body);
  EXPECT_EQ(body["rows"], 21);
  EXPECT_EQ(body["cols"], 36);
  EXPECT_EQ(body["gamma"], 2.25);
  ASSERT_EQ(body["cells"].size(), 21u * 36u);
  const json& cell = body["cells"][1 * 36 + 2];
  EXPECT_EQ(cell["row"], 1);
  EXPECT_EQ(cell["col"], 2);
  EXPECT_EQ(cell["L"], 1);
  EXPECT_EQ(cell["theta"], 10);
  EXPECT_EQ(cell["label"], "L=1 theta=10");
  EXPECT_EQ(cell["stage"], "deconv L=1 theta=10 source=DVC amount=25 noise=NO");
  EXPECT_FALSE(cell.contains("objective"));
  const RasterImage thumb = png_image(base64_decode(cell["png"].get<std::string>()));
  EXPECT_EQ(thumb.width(), 72);
}

TEST_F(ServiceTest, SweepScoresWithReference) {
  const RasterImage reference = oracle::rectangles(32, 4);
  const RasterImage grid = compress(reference, 4).grid();
  const std::string id = new_session(grid, &reference);
  const auto r = client_->Get("/sessions/" + id + "/sweep?L=3,5&theta=0,90&quality=full");
  ASSERT_EQ(r->status, 200) << r->body;
  const json body = json::parse(r->body);
  ASSERT_EQ(body["cells"].size(), 4u);
  EXPECT_EQ(body["amount"], 100);
  for (const json& c : body["cells"]) EXPECT_TRUE(c["objective"].is_number());
}

TEST_F(ServiceTest, PipelineRoundTripIsByteIdentical) {
  const std::string id = new_session(oracle::random_image(8, 8, 3, 5));
  const std::string text = slurp(kSource / "presets/marie-bonneau-1.txt");
  const auto put = client_->Put("/sessions/" + id + "/pipeline", text, "text/plain");
  ASSERT_EQ(put->status, 200) << put->body;
  EXPECT_EQ(json::parse(put->body)["stages"].size(), 9u);
  EXPECT_EQ(json::parse(put->body)["stages"][2], "magnify gamma=2.25");
  EXPECT_EQ(json::parse(put->body)["gamma"], 2.25);
  const auto get = client_->Get("/sessions/" + id + "/pipeline");
  ASSERT_EQ(get->status, 200);
  EXPECT_EQ(get->body, text);
}

TEST_F(ServiceTest, PreviewMatchesCli) {
  const RasterImage grid = oracle::random_image(8, 8, 3, 6);
  const std::string id = new_session(grid);
  const fs::path spec = kSource / "presets/google-brain-2.txt";
  ASSERT_EQ(client_->Put("/sessions/" + id + "/pipeline", slurp(spec), "text/plain")->status, 200);
  const auto p = client_->Get("/sessions/" + id + "/preview");
  ASSERT_EQ(p->status, 200);

  const fs::path dir = fs::temp_directory_path() / "blocksr_service_cli";
  fs::create_directories(dir);
  write_png(grid, dir / "grid.png");
  std::ostringstream out, err;
  ASSERT_EQ(cli::run({"pipeline-run", "--spec", spec.string(), "--grid", (dir / "grid.png").string(),
                      (dir / "out.png").string()},
                     out, err),
            0)
      << err.str();
  EXPECT_EQ(png_image(p->body), read_png(dir / "out.png"));
  EXPECT_EQ(p->body, slurp(dir / "out.png"));
  fs::remove_all(dir);
}

TEST_F(ServiceTest, AppendStagesAndPrefixPreview) {
  const RasterImage grid = oracle::random_image(8, 8, 1, 7);
  const std::string id = new_session(grid);
  auto r = client_->Post("/sessions/" + id + "/pipeline/stages",
                         "interp1 p2=0 p3=0 p4=0\ninterp1 p2=255 p3=255 p4=255\n", "text/plain");
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["stages"].size(), 2u);
  r = client_->Get("/sessions/" + id + "/pipeline");
  EXPECT_EQ(r->body, "# name: session\ninterp1 p2=0 p3=0 p4=0\ninterp1 p2=255 p3=255 p4=255\n");

  // Threshold 0 never interpolates; 255 always does.
  const RasterImage expanded = expand_blocks(grid, 4);
  EXPECT_EQ(png_image(client_->Get("/sessions/" + id + "/preview?stages=1")->body), expanded);
  const RasterImage full = png_image(client_->Get("/sessions/" + id + "/preview")->body);
  EXPECT_EQ(full, apply_stage(expanded, level1(255, 255, 255), 4));
  EXPECT_NE(full, expanded);
}

TEST_F(ServiceTest, ErrorStatuses) {
  EXPECT_EQ(client_->Get("/sessions/nope/preview")->status, 404);
  EXPECT_EQ(client_->Get("/runs/nope")->status, 404);
  EXPECT_EQ(client_->Get("/presets/nope")->status, 404);

  const RasterImage grid = oracle::random_image(8, 8, 1, 8);
  auto r = upload(grid, "5");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "step");
  const RasterImage wrong(16, 16, 1, 0);
  r = upload(grid, "4", &wrong);
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "reference");
  EXPECT_EQ(client_->Post("/sessions", "x", "text/plain")->status, 400);

  const std::string id = new_session(grid);
  r = client_->Post("/sessions/" + id + "/pipeline/stages", "blur L=3\n", "text/plain");
  EXPECT_EQ(r->status, 400);
  r = client_->Post("/sessions/" + id + "/pipeline/stages", "interp1 p2=300 p3=0 p4=0\n", "text/plain");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "p2");
  r = client_->Put("/sessions/" + id + "/pipeline", "deconv L=30 theta=0 source=DVC amount=100 noise=NO\n",
                   "text/plain");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "L");
  r = client_->Get("/sessions/" + id + "/sweep?theta=0..190");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "theta");
  EXPECT_EQ(client_->Get("/sessions/" + id + "/sweep?L=a")->status, 400);
  r = client_->Post("/sessions/" + id + "/search", "{}", "application/json");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["field"], "reference");
}

TEST_F(ServiceTest, OversizedUploadIsRejected) {
  const RasterImage big = oracle::random_image(256, 256, 3, 9);
  const auto r = upload(big, "4");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 413);
}

TEST_F(ServiceTest, Presets) {
  const auto r = client_->Get("/presets");
  ASSERT_EQ(r->status, 200);
  const json names = json::parse(r->body)["presets"];
  EXPECT_EQ(names.size(), 11u);
  EXPECT_NE(std::find(names.begin(), names.end(), "marie-bonneau-1"), names.end());
  const auto p = client_->Get("/presets/marie-bonneau-1");
  ASSERT_EQ(p->status, 200);
  EXPECT_EQ(p->body, slurp(kSource / "presets/marie-bonneau-1.txt"));
  EXPECT_NE(client_->Get("/presets/..%2Fsecret")->status, 200);
}

TEST_F(ServiceTest, SearchRunCompletes) {
  const RasterImage reference = oracle::rectangles(32, 10);
  const std::string id = new_session(compress(reference, 4).grid(), &reference);
  const json cfg{{"lambda", 0.1},        {"p_values", {0, 128, 255}}, {"gammas", {1.0, 2.0}},
                 {"lengths", {0, 5}},    {"thetas", {0, 90}},         {"amounts", {100}},
                 {"sources", {"DVC"}},   {"noises", {"NO"}},          {"max_occurrences", 2}};
  const auto start = client_->Post("/sessions/" + id + "/search", cfg.dump(), "application/json");
  ASSERT_EQ(start->status, 202) << start->body;
  const std::string run = json::parse(start->body)["run_id"];
  json status;
  for (int i = 0; i < 600; ++i) {
    status = json::parse(client_->Get("/runs/" + run)->body);
    if (status["status"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ASSERT_EQ(status["status"], "done") << status.dump();
  const json& trace = status["trace"];
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i)
    EXPECT_LE(trace[i]["total"].get<double>(), trace[i - 1]["total"].get<double>());
  EXPECT_NO_THROW(parse_pipeline(status["spec"].get<std::string>()));

  const auto bad = client_->Post("/sessions/" + id + "/search", R"({"sources": ["VHS"]})", "application/json");
  EXPECT_EQ(bad->status, 422);
  EXPECT_EQ(client_->Post("/sessions/" + id + "/search", "[1]", "application/json")->status, 400);
}

}  // namespace
}  // namespace blocksr
